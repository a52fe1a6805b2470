//! End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
//! exits nonzero if any fails.

mod common;

use std::time::{Duration, Instant};

use bounce_core::compensation::{compensated_pulses, max_mismatch, pair_differences, CompensationMode, StatePair};
use bounce_core::fields::{dephasing_integral, solve_fields_fourier, solve_fields_ode};
use bounce_core::harness::{run_full, ExperimentPlan, ResultBundle};
use bounce_core::master_eq::{evolve_me, polaron_coefficients, protocol_fields, DensityMatrix};
use bounce_core::measures::{bell_fidelity, concurrence, log_negativity, werner, Parity};
use bounce_core::num::Complex;
use bounce_core::params::{smoothed_square, ChipParams, PulseSequence, PulseShape, Protocol, SystemParams, TimeGrid};
use bounce_core::sme::{ensemble_mean, required_substeps, run_ensemble, SmeOptions, SmePropagator};
use bounce_core::tomography::{reconstruct, simulate_tomography, ResidualExcitation, TomographySettings};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = (bool, String);

fn mhz(f: f64) -> f64 {
    2.0 * std::f64::consts::PI * 1e6 * f
}

fn within(t: Instant, limit: Duration) -> (bool, String) {
    let e = t.elapsed();
    (e <= limit, format!("{:.1} s of {} s", e.as_secs_f64(), limit.as_secs()))
}

fn criterion_1() -> Outcome {
    let t = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let grid = TimeGrid::new(0.25e-9, 6000).unwrap();
    let mut worst = 0.0f64;
    for _ in 0..50 {
        let mut chip = || ChipParams {
            kappa_s: mhz(rng.random_range(2.0..6.0)),
            kappa_w: mhz(rng.random_range(0.0..0.3)),
            kappa_i: mhz(rng.random_range(0.0..0.2)),
            chi: mhz(rng.random_range(-0.5..-0.1)),
            delta: mhz(rng.random_range(-0.3..0.3)),
        };
        let (chip1, chip2) = (chip(), chip());
        let p = SystemParams {
            chip1,
            chip2,
            eta_l: rng.random_range(0.6..1.0),
            phi: rng.random_range(-3.0..3.0),
            ..SystemParams::device_defaults()
        };
        let mut env = |amp: f64| {
            let a = Complex::from_polar(rng.random_range(0.1..amp), rng.random_range(-3.0..3.0));
            let start = 5e-9 + rng.random_range(0.0..200e-9);
            smoothed_square(a, start, rng.random_range(50e-9..300e-9), 15e-9, grid).unwrap()
        };
        let seq = PulseSequence::new(env(2.0e4), env(2.0e3)).unwrap();
        let f = solve_fields_fourier(&seq, &p).unwrap();
        let o = solve_fields_ode(&seq, &p).unwrap();
        worst = worst.max(f.max_relative_difference(&o));
    }
    let (fast, time) = within(t, Duration::from_secs(60));
    (worst <= 1e-6 && fast, format!("max relative error {worst:.2e} over 50 sets (<= 1e-6); {time}"))
}

fn criterion_2() -> Outcome {
    let t = Instant::now();
    let p: SystemParams<f64> = SystemParams::device_defaults();
    let table = (p.chip1.kappa_bar() / mhz(1.0), p.chip2.kappa_bar() / mhz(1.0), p.chip1.chi / mhz(1.0));
    let shape = PulseShape { start: 10e-9, rise: 20e-9, plateau: 260e-9 };
    let strong = PulseSequence::smoothed(1.0, p.amp_scale, shape, TimeGrid::new(0.5e-9, 4000).unwrap()).unwrap();
    let base = pair_differences(&solve_fields_fourier(&compensated_pulses(&strong, &p, CompensationMode::None).unwrap(), &p).unwrap());
    let mut ok = (table.0 - 3.01).abs() < 1e-9 && (table.1 - 4.53).abs() < 1e-9 && (table.2 + 0.335).abs() < 1e-9;
    let mut detail = Vec::new();
    for (mode, pair) in [(CompensationMode::Odd, StatePair::odd()), (CompensationMode::Even, StatePair::even())] {
        let sol = solve_fields_fourier(&compensated_pulses(&strong, &p, mode).unwrap(), &p).unwrap();
        let mismatch = max_mismatch(&sol, pair);
        let other = pair.complement();
        let after = pair_differences(&sol)[other.a][other.b];
        let before = base[other.a][other.b];
        ok &= mismatch <= 1e-8 && after > before;
        detail.push(format!("{}: mismatch {mismatch:.1e}, complement {before:.3e} -> {after:.3e}", mode.name()));
    }
    let (fast, time) = within(t, Duration::from_secs(10));
    (ok && fast, format!("{}; {time}", detail.join("; ")))
}

fn criterion_3() -> Outcome {
    let mut p: SystemParams<f64> = SystemParams::device_defaults();
    p.gamma1 = [0.0; 2];
    p.gamma_phi = [0.0; 2];
    p.chip2.chi = 0.0;
    let protocol = Protocol::standard();
    let mut worst = 0.0f64;
    for amp in [0.25, 0.5, 1.0, 1.5, 2.0] {
        let sol = protocol_fields(amp, &p, &p, &protocol, CompensationMode::None).unwrap();
        let evo = evolve_me(&DensityMatrix::plus_plus(), &polaron_coefficients(&sol, &p), &p).unwrap();
        let exponent = -(evo.final_state().get(0, 2).norm() / 0.25).ln();
        let integral = dephasing_integral(&sol.alpha[0], &sol.alpha[1], p.chip1.chi).unwrap();
        worst = worst.max((exponent - integral).abs() / integral);
    }
    (worst <= 1e-4, format!("max relative deviation {worst:.2e} over 5 amplitudes (<= 1e-4)"))
}

fn criterion_4() -> Outcome {
    let t = Instant::now();
    let p: SystemParams<f64> = SystemParams::device_defaults();
    let sol = protocol_fields(0.7, &p, &p, &Protocol::standard(), CompensationMode::Odd).unwrap();
    let rho0 = DensityMatrix::plus_plus();
    let me = evolve_me(&rho0, &polaron_coefficients(&sol, &p), &p).unwrap().final_state().clone();
    let options = SmeOptions { substeps: required_substeps(&sol, &p), ..Default::default() };
    let prop = SmePropagator::new(&sol, &p, options).unwrap();
    let sizes = [500usize, 2000, 8000];
    let seeds = 6u64;
    let means: Vec<f64> = sizes
        .iter()
        .map(|&n| {
            (0..seeds)
                .map(|s| {
                    let trajectories = run_ensemble(&prop, &rho0, n, 100 + s, None).unwrap();
                    ensemble_mean(&trajectories).unwrap().trace_distance(&me).unwrap()
                })
                .sum::<f64>()
                / seeds as f64
        })
        .collect();
    // Least-squares slope of log(distance) against log(N).
    let xs: Vec<f64> = sizes.iter().map(|&n| (n as f64).ln()).collect();
    let ys: Vec<f64> = means.iter().map(|d| d.ln()).collect();
    let (mx, my) = (xs.iter().sum::<f64>() / 3.0, ys.iter().sum::<f64>() / 3.0);
    let slope = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum::<f64>()
        / xs.iter().map(|x| (x - mx).powi(2)).sum::<f64>();
    let (fast, time) = within(t, Duration::from_secs(600));
    let ok = means[1] <= 0.02 && (-0.85..=-0.15).contains(&slope) && fast;
    (
        ok,
        format!(
            "mean trace distance {:.4} / {:.4} / {:.4} at N = 500 / 2000 / 8000 ({seeds} seeds; N=2000 <= 0.02); slope {slope:.2} (1/sqrt(N): -0.5 +- 0.35); {time}",
            means[0], means[1], means[2]
        ),
    )
}

fn sweep() -> (ResultBundle, ExperimentPlan, Duration) {
    let t = Instant::now();
    let plan = ExperimentPlan {
        amplitudes: vec![0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0],
        modes: vec![CompensationMode::Odd, CompensationMode::Even],
        n_trajectories: 4000,
        n_calibration: 1000,
        seed: 7,
        ..ExperimentPlan::default()
    };
    let bundle = run_full(&plan, &SystemParams::device_defaults()).unwrap();
    (bundle, plan, t.elapsed())
}

fn peak(bundle: &ResultBundle, mode: CompensationMode, headline: f64) -> (f64, f64, f64, f64) {
    let best = bundle.best_point(mode, headline).unwrap();
    let c = best.at_fraction(headline).unwrap();
    (best.amplitude, c.report.concurrence, c.report.bell_fidelity, best.classifier_fidelity)
}

fn criterion_5(bundle: &ResultBundle, plan: &ExperimentPlan, elapsed: Duration) -> Outcome {
    let p: SystemParams<f64> = SystemParams::device_defaults();
    let setup = (1.0 - p.eta_l - 0.118).abs() < 1e-12
        && p.eta_m == 0.5
        && (1.0 / p.gamma1[0].max(p.gamma1[1]) - 9e-6).abs() < 1e-12
        && (plan.protocol.shape.total() - 300e-9).abs() < 1e-12;
    let (amp, c, f, _) = peak(bundle, CompensationMode::Odd, plan.headline_fraction);
    let curve: Vec<String> = bundle
        .points
        .iter()
        .filter(|pt| pt.mode == CompensationMode::Odd)
        .map(|pt| format!("{:.1}:{:.3}", pt.amplitude, pt.at_fraction(plan.headline_fraction).unwrap().report.concurrence))
        .collect();
    let ok = setup && (0.44..=0.60).contains(&c) && (0.70..=0.80).contains(&f) && elapsed <= Duration::from_secs(1800);
    (
        ok,
        format!(
            "odd, 25% kept, N={}: peak C {c:.3} in [0.44, 0.60], F_B {f:.3} in [0.70, 0.80] at amplitude {amp}; C(amplitude) {}; sweep {:.0} s",
            plan.n_trajectories,
            curve.join(" "),
            elapsed.as_secs_f64()
        ),
    )
}

fn criterion_6(bundle: &ResultBundle, plan: &ExperimentPlan) -> Outcome {
    let (_, odd, _, _) = peak(bundle, CompensationMode::Odd, plan.headline_fraction);
    let (amp, even, f, _) = peak(bundle, CompensationMode::Even, plan.headline_fraction);
    let gap = (even - odd).abs();
    (gap <= 0.05, format!("even peak C {even:.3} (F_B {f:.3}, amplitude {amp}) vs odd {odd:.3}: gap {gap:.3} (<= 0.05)"))
}

fn criterion_7(bundle: &ResultBundle) -> Outcome {
    let sweep = bundle.fraction_sweeps.iter().find(|s| s.mode == CompensationMode::Odd).unwrap();
    let best = sweep.conditioned.iter().max_by(|a, b| a.report.ebit_rate.total_cmp(&b.report.ebit_rate)).unwrap();
    let half = sweep.at_fraction(0.5).unwrap();
    let ok = (0.40 - 1e-9..=0.60 + 1e-9).contains(&best.fraction) && (0.33..=0.45).contains(&half.report.concurrence);
    (
        ok,
        format!(
            "amplitude {}: ebit rate peaks at {:.0}% kept ({:.0} /s; band 40-60%), C at 50% = {:.3} in [0.33, 0.45]",
            sweep.amplitude,
            best.fraction * 100.0,
            best.report.ebit_rate,
            half.report.concurrence
        ),
    )
}

fn criterion_8(bundle: &ResultBundle, plan: &ExperimentPlan) -> Outcome {
    let best = bundle.best_point(CompensationMode::Odd, plan.headline_fraction).unwrap();
    let rho = &best.at_fraction(plan.headline_fraction).unwrap().rho;
    let mut round_trip = 0.0f64;
    for state in [rho.clone(), common::random_state(1), common::random_state(2), DensityMatrix::bell(true, 0.3)] {
        let data = simulate_tomography(&state, &TomographySettings::default(), 0).unwrap();
        round_trip = round_trip.max(reconstruct(&data, None).unwrap().trace_distance(&state).unwrap());
    }
    let residual = ResidualExcitation::new(0.03, 0.03).unwrap();
    let settings = TomographySettings { shots: Some(100_000), residual, ..TomographySettings::default() };
    let data = simulate_tomography(rho, &settings, 11).unwrap();
    let truth = concurrence(rho).unwrap();
    let raw = concurrence(&reconstruct(&data, None).unwrap()).unwrap();
    let fixed = concurrence(&reconstruct(&data, Some(residual)).unwrap()).unwrap();
    let ok = round_trip <= 1e-6 && raw > truth && (fixed - truth).abs() <= 0.01;
    (
        ok,
        format!(
            "analytic round trip {round_trip:.1e} (<= 1e-6); 3%/3% excitation, 1e5 shots: true C {truth:.3}, uncorrected {raw:.3} (> true), corrected {fixed:.3} (+-0.01)"
        ),
    )
}

fn criterion_9(bundle: &ResultBundle, plan: &ExperimentPlan) -> Outcome {
    let (amp, _, _, fidelity) = peak(bundle, CompensationMode::Odd, plan.headline_fraction);
    ((0.80..=0.90).contains(&fidelity), format!("held-out assignment fidelity {fidelity:.3} at amplitude {amp} (0.85 +- 0.05)"))
}

fn criterion_10() -> Outcome {
    let mut ok = true;
    let mut fails = Vec::new();
    let mut check = |name: &str, got: f64, want: f64| {
        if (got - want).abs() > 1e-9 {
            ok = false;
            fails.push(format!("{name}: {got} vs {want}"));
        }
    };
    for odd in [true, false] {
        let bell = DensityMatrix::<f64>::bell(odd, 0.0);
        let parity = if odd { Parity::Odd } else { Parity::Even };
        check("bell C", concurrence(&bell).unwrap(), 1.0);
        check("bell E_N", log_negativity(&bell).unwrap(), 1.0);
        check("bell F_B", bell_fidelity(&bell, parity).0, 1.0);
    }
    let product = DensityMatrix::<f64>::plus_plus();
    check("product C", concurrence(&product).unwrap(), 0.0);
    check("product E_N", log_negativity(&product).unwrap(), 0.0);
    let mixed = DensityMatrix::<f64>::maximally_mixed();
    check("mixed C", concurrence(&mixed).unwrap(), 0.0);
    check("mixed E_N", log_negativity(&mixed).unwrap(), 0.0);
    check("mixed F_B", bell_fidelity(&mixed, Parity::Odd).0, 0.25);
    for p in [0.0, 0.2, 1.0 / 3.0, 0.6, 1.0] {
        let w = werner::<f64>(p);
        check("werner C", concurrence(&w).unwrap(), ((3.0 * p - 1.0) / 2.0).max(0.0));
        check("werner E_N oracle", log_negativity(&w).unwrap(), common::log_negativity(&w));
    }
    let mut worst = 0.0f64;
    for seed in 0..100 {
        let rho = common::random_state(seed);
        worst = worst.max((log_negativity(&rho).unwrap() - common::log_negativity(&rho)).abs());
    }
    let ok = ok && worst <= 1e-8;
    let mut detail = format!("closed forms exact; brute-force negativity oracle max deviation {worst:.1e} over 100 states (<= 1e-8)");
    if !fails.is_empty() {
        detail = format!("{}; {detail}", fails.join(", "));
    }
    (ok, detail)
}

fn main() {
    let mut all = true;
    let mut report = |n: usize, (ok, detail): Outcome| {
        all &= ok;
        println!("criterion {n:>2}: {} | {detail}", if ok { "PASS" } else { "FAIL" });
    };
    report(1, criterion_1());
    report(2, criterion_2());
    report(3, criterion_3());
    report(4, criterion_4());
    let (bundle, plan, elapsed) = sweep();
    report(5, criterion_5(&bundle, &plan, elapsed));
    report(6, criterion_6(&bundle, &plan));
    report(7, criterion_7(&bundle));
    report(8, criterion_8(&bundle, &plan));
    report(9, criterion_9(&bundle, &plan));
    report(10, criterion_10());
    if !all {
        std::process::exit(1);
    }
}
