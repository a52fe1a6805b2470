use bounce_core::fields::{solve_fields_fourier, solve_fields_ode, FieldSolution};
use bounce_core::num::Complex;
use bounce_core::params::{smoothed_square, ChipParams, PulseSequence, SystemParams, TimeGrid};
use proptest::prelude::*;

fn mhz(f: f64) -> f64 {
    2.0 * std::f64::consts::PI * 1e6 * f
}

fn chip() -> impl Strategy<Value = ChipParams<f64>> {
    (2.0..6.0f64, 0.0..0.3f64, 0.0..0.2f64, -0.5..-0.1f64, -0.3..0.3f64).prop_map(|(ks, kw, ki, chi, delta)| {
        ChipParams { kappa_s: mhz(ks), kappa_w: mhz(kw), kappa_i: mhz(ki), chi: mhz(chi), delta: mhz(delta) }
    })
}

fn system() -> impl Strategy<Value = SystemParams<f64>> {
    (chip(), chip(), 0.6..1.0f64, -3.0..3.0f64).prop_map(|(c1, c2, eta_l, phi)| SystemParams {
        chip1: c1,
        chip2: c2,
        eta_l,
        phi,
        ..SystemParams::device_defaults()
    })
}

#[derive(Clone, Debug)]
struct Drive {
    strong: (f64, f64, f64, f64),
    weak: (f64, f64, f64, f64),
}

fn drive() -> impl Strategy<Value = Drive> {
    let one = |amp: f64| (0.1..amp, -3.0..3.0f64, 0.0..200e-9f64, 50e-9..300e-9f64);
    (one(2.0e4), one(2.0e3)).prop_map(|(strong, weak)| Drive { strong, weak })
}

fn grid() -> TimeGrid<f64> {
    TimeGrid::new(0.5e-9, 3000).unwrap()
}

// With 15 ns edges and kappa_bar up to 2pi x 6.5 MHz, the sampled-spectrum
// and interpolated-drive discretizations each sit a few 1e-6 from the
// continuum at 0.5 ns; at 0.25 ns both are well below 1e-6.
fn fine_grid() -> TimeGrid<f64> {
    TimeGrid::new(0.25e-9, 6000).unwrap()
}

fn sequence(d: &Drive, grid: TimeGrid<f64>) -> PulseSequence<f64> {
    let env = |(amp, phase, start, plateau): (f64, f64, f64, f64)| {
        smoothed_square(Complex::from_polar(amp, phase), start + 5e-9, plateau, 15e-9, grid).unwrap()
    };
    PulseSequence::new(env(d.strong), env(d.weak)).unwrap()
}

fn envelopes(sol: &FieldSolution<f64>) -> Vec<&Vec<Complex<f64>>> {
    let mut v: Vec<_> = sol.alpha.iter().chain(&sol.z).map(|e| &e.samples).collect();
    v.extend(sol.beta.iter().flatten().chain(sol.y.iter().flatten()).map(|e| &e.samples));
    v
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 50, ..ProptestConfig::default() })]

    #[test]
    fn fourier_and_ode_agree(p in system(), d in drive()) {
        let seq = sequence(&d, fine_grid());
        let f = solve_fields_fourier(&seq, &p).unwrap();
        let o = solve_fields_ode(&seq, &p).unwrap();
        let err = f.max_relative_difference(&o);
        prop_assert!(err <= 1e-6, "relative error {err:e}");
    }

    #[test]
    fn solutions_are_linear(p in system(), a in drive(), b in drive(), g in (-2.0..2.0f64, -2.0..2.0f64)) {
        let sa = sequence(&a, grid());
        let sb = sequence(&b, grid());
        let g = Complex::new(g.0, g.1);
        let combined = sa.scaled(g).superpose(&sb).unwrap();
        let fa = solve_fields_fourier(&sa, &p).unwrap();
        let fb = solve_fields_fourier(&sb, &p).unwrap();
        let fc = solve_fields_fourier(&combined, &p).unwrap();
        let scale = fc.peak().max(fa.peak() * g.norm()).max(fb.peak());
        for ((ea, eb), ec) in envelopes(&fa).into_iter().zip(envelopes(&fb)).zip(envelopes(&fc)) {
            for ((x, y), z) in ea.iter().zip(eb).zip(ec) {
                prop_assert!((x * g + y - z).norm() <= 1e-10 * scale);
            }
        }
    }
}

#[test]
fn fields_return_to_vacuum() {
    let p: SystemParams<f64> = SystemParams::device_defaults();
    let grid = grid();
    let slowest = p.chip1.kappa_bar().min(p.chip2.kappa_bar());
    // Envelopes end at 320 ns; 5 / kappa_bar is about 265 ns, so the grid
    // (1.5 us) leaves ample ring-down.
    let end = 5e-9 + 15e-9 * 2.0 + 285e-9;
    assert!(grid.duration() - end >= 5.0 / slowest);
    let d = Drive { strong: (1.0e4, 0.3, 0.0, 285e-9), weak: (1.0e3, -1.0, 0.0, 285e-9) };
    let sol = solve_fields_fourier(&sequence(&d, grid), &p).unwrap();
    for env in sol.alpha.iter().chain(sol.beta.iter().flatten()) {
        let last = env.samples.last().unwrap().norm();
        assert!(last <= 1e-3 * env.peak(), "final {last:e} vs peak {:e}", env.peak());
    }
}

#[test]
fn lossless_cascade_conserves_photon_flux() {
    let mut p: SystemParams<f64> = SystemParams::device_defaults();
    for c in [&mut p.chip1, &mut p.chip2] {
        c.kappa_w = 0.0;
        c.kappa_i = 0.0;
        c.delta = mhz(0.1);
    }
    p.eta_l = 1.0;
    p.phi = 0.7;
    let grid = TimeGrid::new(0.5e-9, 6000).unwrap();
    let strong = smoothed_square(Complex::new(1.3e4, 0.0), 25e-9, 300e-9, 15e-9, grid).unwrap();
    let seq = PulseSequence::strong_only(strong).unwrap();
    let sol = solve_fields_fourier(&seq, &p).unwrap();
    let input = seq.eps_s.energy();
    for s in 0..4 {
        let out = sol.y_state(s).energy();
        assert!((out - input).abs() <= 1e-6 * input, "state {s}: {out} vs {input}");
    }
}
