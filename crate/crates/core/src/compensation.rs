//! Weak-port compensation drives that equalize the output transients of a
//! chosen pair of joint qubit states, and tune-up of uncertain parameters.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::fields::{solve_fields_fourier, state_bits, transfer_into, transfer_reflected, FieldSolution, FOURIER_PADDING};
use crate::linalg::{bin_frequency, dft, idft};
use crate::num::{cis, cplx, czero, Complex, Real};
use crate::optimize::{nelder_mead, SimplexOptions};
use crate::params::{trapezoid, ComplexEnvelope, PulseSequence, SystemParams};

/// Two joint states (indices `2 * b1 + b2`) whose outputs should coincide.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct StatePair {
    pub a: usize,
    pub b: usize,
}

impl StatePair {
    /// Validates that the pair can be matched through the chip-2 weak port,
    /// which requires the second-qubit bits to differ.
    pub fn new(a: usize, b: usize) -> Result<Self> {
        if a > 3 || b > 3 {
            return Err(Error::InvalidPair(format!("state index out of range ({a}, {b})")));
        }
        if a == b {
            return Err(Error::InvalidPair(format!("states must differ (got {a} twice)")));
        }
        if state_bits(a).1 == state_bits(b).1 {
            return Err(Error::DegenerateDenominator);
        }
        Ok(Self { a, b })
    }

    /// `|01>` and `|10>`.
    pub fn odd() -> Self {
        Self { a: 1, b: 2 }
    }

    /// `|00>` and `|11>`.
    pub fn even() -> Self {
        Self { a: 0, b: 3 }
    }

    /// The pair of the opposite parity subspace.
    pub fn complement(&self) -> Self {
        let rest: Vec<usize> = (0..4).filter(|s| *s != self.a && *s != self.b).collect();
        Self { a: rest[0], b: rest[1] }
    }
}

/// Which subspace, if any, the compensation drive targets.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum CompensationMode {
    None,
    Odd,
    Even,
    /// Matching both pairs simultaneously; always rejected.
    FullParity,
}

impl CompensationMode {
    pub fn pair(&self) -> Result<Option<StatePair>> {
        match self {
            Self::None => Ok(None),
            Self::Odd => Ok(Some(StatePair::odd())),
            Self::Even => Ok(Some(StatePair::even())),
            Self::FullParity => Err(Error::FullParityUnsupported),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::None => "none",
            Self::Odd => "odd",
            Self::Even => "even",
            Self::FullParity => "full",
        }
    }
}

impl std::str::FromStr for CompensationMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "none" | "off" => Ok(Self::None),
            "odd" => Ok(Self::Odd),
            "even" => Ok(Self::Even),
            "full" | "full-parity" | "full_parity" => Ok(Self::FullParity),
            other => Err(Error::InvalidInput(format!("unknown compensation mode `{other}`"))),
        }
    }
}

/// Transfer from strong-port drive to the weak-port drive that cancels the
/// output difference of `pair`.
pub fn comp_transfer<T: Real>(omega: T, p: &SystemParams<T>, pair: StatePair) -> Result<Complex<T>> {
    let (c1, c2) = (&p.chip1, &p.chip2);
    if c2.kappa_w <= T::zero() {
        return Err(Error::NoWeakPort);
    }
    let (k, l) = state_bits(pair.a);
    let (m, n) = state_bits(pair.b);
    if l == n || c2.chi == T::zero() {
        return Err(Error::DegenerateDenominator);
    }
    let link = cis(p.phi).scale(p.eta_l.sqrt());
    let num = transfer_reflected(omega, c1, k) * transfer_reflected(omega, c2, l)
        - transfer_reflected(omega, c1, m) * transfer_reflected(omega, c2, n);
    let den = (transfer_into(omega, c2, n) - transfer_into(omega, c2, l)).scale(c2.kappa_w.sqrt());
    Ok(link * num / den)
}

/// Weak-port drive `eps_w = IFT[H_comp * FT[eps_s]]` for `pair`.
pub fn synthesize_compensation<T: Real>(
    eps_s: &ComplexEnvelope<T>,
    p: &SystemParams<T>,
    pair: StatePair,
) -> Result<ComplexEnvelope<T>> {
    let grid = eps_s.grid;
    let n = grid.n_samples;
    let n_pad = n * FOURIER_PADDING;
    let mut v = eps_s.samples.clone();
    v.resize(n_pad, czero());
    let mut spec = dft(&v);
    for (k, s) in spec.iter_mut().enumerate() {
        *s = *s * comp_transfer(bin_frequency(k, n_pad, grid.dt), p, pair)?;
    }
    let mut out = idft(&spec);
    out.truncate(n);
    ComplexEnvelope::from_samples(grid, out)
}

/// Builds the full drive for `mode`: the strong pulse plus, if requested,
/// the matching weak-port drive.
pub fn compensated_pulses<T: Real>(
    strong: &PulseSequence<T>,
    p: &SystemParams<T>,
    mode: CompensationMode,
) -> Result<PulseSequence<T>> {
    match mode.pair()? {
        None => strong.with_weak(ComplexEnvelope::zeros(strong.grid())),
        Some(pair) => strong.with_weak(synthesize_compensation(&strong.eps_s, p, pair)?),
    }
}

/// `integral |y_a - y_b| dt` for every ordered state pair.
pub fn pair_differences<T: Real>(sol: &FieldSolution<T>) -> [[T; 4]; 4] {
    let mut out = [[T::zero(); 4]; 4];
    for a in 0..4 {
        for b in (a + 1)..4 {
            let (ya, yb) = (sol.y_state(a), sol.y_state(b));
            let v = trapezoid(sol.grid.dt, ya.samples.iter().zip(&yb.samples).map(|(x, y)| (*x - *y).norm()));
            out[a][b] = v;
            out[b][a] = v;
        }
    }
    out
}

/// Integrated difference of `pair` normalized by the sum over the other five
/// unordered pairs.
pub fn matching_cost<T: Real>(sol: &FieldSolution<T>, pair: StatePair) -> T {
    let d = pair_differences(sol);
    let mut others = T::zero();
    for a in 0..4 {
        for b in (a + 1)..4 {
            if !((a, b) == (pair.a, pair.b) || (b, a) == (pair.a, pair.b)) {
                others = others + d[a][b];
            }
        }
    }
    if others > T::zero() {
        d[pair.a][pair.b] / others
    } else {
        T::zero()
    }
}

/// Largest `|y_a - y_b|` relative to the largest output modulus.
pub fn max_mismatch<T: Real>(sol: &FieldSolution<T>, pair: StatePair) -> T {
    let peak = (0..4).map(|s| sol.y_state(s).peak()).fold(T::zero(), T::max);
    let (ya, yb) = (sol.y_state(pair.a), sol.y_state(pair.b));
    let diff = ya.samples.iter().zip(&yb.samples).fold(T::zero(), |m, (x, y)| m.max((*x - *y).norm()));
    if peak > T::zero() {
        diff / peak
    } else {
        diff
    }
}

/// A parameter the tune-up may vary.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum TunableParam {
    EtaL,
    Phi,
    Chi1,
    Chi2,
    KappaS1,
    KappaS2,
    Delta1,
    Delta2,
}

impl TunableParam {
    pub fn get<T: Real>(&self, p: &SystemParams<T>) -> f64 {
        let v = match self {
            Self::EtaL => p.eta_l,
            Self::Phi => p.phi,
            Self::Chi1 => p.chip1.chi,
            Self::Chi2 => p.chip2.chi,
            Self::KappaS1 => p.chip1.kappa_s,
            Self::KappaS2 => p.chip2.kappa_s,
            Self::Delta1 => p.chip1.delta,
            Self::Delta2 => p.chip2.delta,
        };
        v.to_f64_lossy()
    }

    pub fn set<T: Real>(&self, p: &mut SystemParams<T>, v: f64) {
        let v = T::lit(v);
        match self {
            Self::EtaL => p.eta_l = v,
            Self::Phi => p.phi = v,
            Self::Chi1 => p.chip1.chi = v,
            Self::Chi2 => p.chip2.chi = v,
            Self::KappaS1 => p.chip1.kappa_s = v,
            Self::KappaS2 => p.chip2.kappa_s = v,
            Self::Delta1 => p.chip1.delta = v,
            Self::Delta2 => p.chip2.delta = v,
        }
    }

    /// Search interval around the starting value.
    pub fn default_bounds(&self, current: f64) -> (f64, f64) {
        let mhz = 2.0 * std::f64::consts::PI * 1.0e6;
        match self {
            Self::EtaL => (0.0, 1.0),
            Self::Phi => (current - std::f64::consts::PI, current + std::f64::consts::PI),
            Self::Chi1 | Self::Chi2 | Self::KappaS1 | Self::KappaS2 => {
                let w = 0.3 * current.abs();
                (current - w, current + w)
            }
            Self::Delta1 | Self::Delta2 => (current - 0.5 * mhz, current + 0.5 * mhz),
        }
    }
}

impl std::str::FromStr for TunableParam {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "eta_l" => Ok(Self::EtaL),
            "phi" => Ok(Self::Phi),
            "chi1" => Ok(Self::Chi1),
            "chi2" => Ok(Self::Chi2),
            "kappa_s1" => Ok(Self::KappaS1),
            "kappa_s2" => Ok(Self::KappaS2),
            "delta1" => Ok(Self::Delta1),
            "delta2" => Ok(Self::Delta2),
            other => Err(Error::InvalidInput(format!("unknown tunable parameter `{other}`"))),
        }
    }
}

/// One uncertain parameter with its search box.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Uncertain {
    pub param: TunableParam,
    pub lower: f64,
    pub upper: f64,
}

impl Uncertain {
    pub fn around<T: Real>(param: TunableParam, p: &SystemParams<T>) -> Self {
        let (lower, upper) = param.default_bounds(param.get(p));
        Self { param, lower, upper }
    }
}

/// Result of a compensation tune-up.
#[derive(Clone, Debug)]
pub struct TuneUp<T> {
    pub params: SystemParams<T>,
    pub cost: f64,
    pub evaluations: usize,
    /// False when the evaluation budget ran out before the simplex converged.
    pub converged: bool,
}

/// Optional Gaussian noise added to the simulated output transients, with
/// standard deviation `relative_std * peak|y|` per quadrature.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TransientNoise {
    pub relative_std: f64,
    pub seed: u64,
}

/// Varies the `uncertain` parameters of the model so that the compensation
/// drive synthesized from the model best matches `pair` when played on the
/// `experiment` system.
pub fn optimize_params<T: Real>(
    initial: &SystemParams<T>,
    uncertain: &[Uncertain],
    experiment: &SystemParams<T>,
    strong: &PulseSequence<T>,
    pair: StatePair,
    budget: usize,
    noise: Option<TransientNoise>,
) -> Result<TuneUp<T>> {
    if uncertain.is_empty() {
        return Err(Error::InvalidInput("no uncertain parameters to optimize".into()));
    }
    for u in uncertain {
        if !(u.lower < u.upper) {
            return Err(Error::InvalidInput(format!("empty search interval for {:?}", u.param)));
        }
    }
    let candidate = |x: &[f64]| {
        let mut q = initial.clone();
        for (u, v) in uncertain.iter().zip(x) {
            u.param.set(&mut q, *v);
        }
        q
    };
    let cost = |x: &[f64]| -> f64 {
        let q = candidate(x);
        let run = || -> Result<f64> {
            let pulses = strong.with_weak(synthesize_compensation(&strong.eps_s, &q, pair)?)?;
            let mut sol = solve_fields_fourier(&pulses, experiment)?;
            if let Some(n) = noise {
                add_transient_noise(&mut sol, n);
            }
            Ok(matching_cost(&sol, pair).to_f64_lossy())
        };
        run().unwrap_or(f64::INFINITY)
    };
    let x0: Vec<f64> = uncertain.iter().map(|u| u.param.get(initial).clamp(u.lower, u.upper)).collect();
    let lower: Vec<f64> = uncertain.iter().map(|u| u.lower).collect();
    let upper: Vec<f64> = uncertain.iter().map(|u| u.upper).collect();
    let opts = SimplexOptions { max_evaluations: budget, f_tol: 1e-14, x_tol: 1e-9, ..Default::default() };
    let m = nelder_mead(cost, &x0, &lower, &upper, &opts);
    Ok(TuneUp { params: candidate(&m.x), cost: m.value, evaluations: m.evaluations, converged: m.converged })
}

fn add_transient_noise<T: Real>(sol: &mut FieldSolution<T>, noise: TransientNoise) {
    let peak = (0..4).map(|s| sol.y_state(s).peak()).fold(T::zero(), T::max).to_f64_lossy();
    let std = noise.relative_std * peak;
    if !(std > 0.0) {
        return;
    }
    let normal = Normal::new(0.0, std).expect("positive standard deviation");
    let mut rng = ChaCha8Rng::seed_from_u64(noise.seed);
    for env in sol.y.iter_mut().flatten() {
        for v in env.samples.iter_mut() {
            *v = *v + cplx(T::lit(normal.sample(&mut rng)), T::lit(normal.sample(&mut rng)));
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::{PulseShape, TimeGrid};
    use proptest::prelude::*;

    fn strong(amp: f64, grid: TimeGrid<f64>) -> PulseSequence<f64> {
        let shape = PulseShape { start: 10e-9, rise: 20e-9, plateau: 260e-9 };
        PulseSequence::smoothed(amp, 1.0e4, shape, grid).unwrap()
    }

    fn long_grid() -> TimeGrid<f64> {
        TimeGrid::new(0.5e-9, 6000).unwrap()
    }

    fn identical_chips() -> SystemParams<f64> {
        let mut p = SystemParams::device_defaults();
        p.chip2 = p.chip1;
        p.eta_l = 1.0;
        p
    }

    #[test]
    fn identical_chips_need_no_odd_compensation() {
        let p = identical_chips();
        for w in [-3e7, 0.0, 1e6, 4e7] {
            assert!(comp_transfer(w, &p, StatePair::odd()).unwrap().norm() < 1e-12);
        }
        let grid = long_grid();
        let ew = synthesize_compensation(&strong(1.0, grid).eps_s, &p, StatePair::odd()).unwrap();
        assert!(ew.peak() < 1e-9 * strong(1.0, grid).eps_s.peak());
    }

    #[test]
    fn degenerate_pairs_rejected() {
        let mut p = SystemParams::<f64>::device_defaults();
        assert!(matches!(StatePair::new(0, 2), Err(Error::DegenerateDenominator)));
        assert!(matches!(StatePair::new(1, 1), Err(Error::InvalidPair(_))));
        assert!(matches!(CompensationMode::FullParity.pair(), Err(Error::FullParityUnsupported)));
        p.chip2.chi = 0.0;
        assert!(matches!(comp_transfer(0.0, &p, StatePair::odd()), Err(Error::DegenerateDenominator)));
        p = SystemParams::device_defaults();
        p.chip2.kappa_w = 0.0;
        assert!(matches!(comp_transfer(0.0, &p, StatePair::odd()), Err(Error::NoWeakPort)));
    }

    #[test]
    fn zero_drive_gives_zero_compensation() {
        let p = SystemParams::device_defaults();
        let ew = synthesize_compensation(&ComplexEnvelope::zeros(long_grid()), &p, StatePair::odd()).unwrap();
        assert_eq!(ew.peak(), 0.0);
    }

    #[test]
    fn synthesized_drive_matches_pair_exactly() {
        let p = SystemParams::device_defaults();
        let grid = long_grid();
        let s = strong(1.0, grid);
        for pair in [StatePair::odd(), StatePair::even()] {
            let pulses = compensated_pulses(&s, &p, if pair == StatePair::odd() { CompensationMode::Odd } else { CompensationMode::Even }).unwrap();
            let sol = solve_fields_fourier(&pulses, &p).unwrap();
            assert!(max_mismatch(&sol, pair) < 1e-8, "{pair:?}: {:e}", max_mismatch(&sol, pair));
            assert!(matching_cost(&sol, pair) < 1e-7);
        }
    }

    #[test]
    fn compensation_widens_the_other_pair() {
        let p = SystemParams::device_defaults();
        let grid = long_grid();
        let s = strong(1.0, grid);
        let bare = solve_fields_fourier(&compensated_pulses(&s, &p, CompensationMode::None).unwrap(), &p).unwrap();
        let d0 = pair_differences(&bare);
        let odd = solve_fields_fourier(&compensated_pulses(&s, &p, CompensationMode::Odd).unwrap(), &p).unwrap();
        let d1 = pair_differences(&odd);
        assert!(d1[0][3] > d0[0][3]);
        assert!(d1[1][2] < d0[1][2]);
        assert!(matching_cost(&bare, StatePair::odd()) > matching_cost(&odd, StatePair::odd()));
    }

    #[test]
    fn even_pair_needs_stronger_drive() {
        let p = SystemParams::device_defaults();
        let s = strong(1.0, long_grid());
        let odd = synthesize_compensation(&s.eps_s, &p, StatePair::odd()).unwrap();
        let even = synthesize_compensation(&s.eps_s, &p, StatePair::even()).unwrap();
        assert!(even.energy() > odd.energy());
    }

    #[test]
    fn uncompensated_identical_chips_even_cost_positive() {
        let p = identical_chips();
        let s = strong(1.0, long_grid());
        let sol = solve_fields_fourier(&s, &p).unwrap();
        assert!(matching_cost(&sol, StatePair::even()) > 0.0);
    }

    #[test]
    fn tune_up_requires_parameters() {
        let p = SystemParams::device_defaults();
        let s = strong(1.0, long_grid());
        assert!(optimize_params(&p, &[], &p, &s, StatePair::odd(), 10, None).is_err());
    }

    #[test]
    fn tune_up_restores_matching_after_phase_error() {
        let truth = SystemParams::device_defaults();
        let grid = TimeGrid::new(0.5e-9, 3000).unwrap();
        let s = strong(1.0, grid);
        let mut model = truth.clone();
        model.phi += 0.3;
        let unc = [Uncertain::around(TunableParam::Phi, &model)];
        let before = {
            let pulses = compensated_pulses(&s, &model, CompensationMode::Odd).unwrap();
            matching_cost(&solve_fields_fourier(&pulses, &truth).unwrap(), StatePair::odd())
        };
        let r = optimize_params(&model, &unc, &truth, &s, StatePair::odd(), 200, None).unwrap();
        assert!(before > 1e-2);
        assert!(r.cost < 1e-3, "cost {}", r.cost);
        assert!(r.evaluations <= 200);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(12))]
        #[test]
        fn compensation_is_linear_in_drive(re in -2.0f64..2.0, im in -2.0f64..2.0) {
            let p = SystemParams::device_defaults();
            let s = strong(1.0, TimeGrid::new(0.5e-9, 2000).unwrap());
            let g = cplx(re, im);
            let a = synthesize_compensation(&s.eps_s, &p, StatePair::odd()).unwrap();
            let b = synthesize_compensation(&s.eps_s.scaled(g), &p, StatePair::odd()).unwrap();
            let scale = a.peak() * g.norm().max(1e-3);
            for (x, y) in a.samples.iter().zip(&b.samples) {
                prop_assert!((*x * g - *y).norm() <= 1e-10 * scale.max(1e-30));
            }
        }
    }
}
