//! Conditioned evolution under continuous homodyne monitoring of the
//! cascaded output, and reduction of the records to complex outcomes.
//!
//! Every measurement-related term is diagonal in the computational basis,
//! so the generator acts on `rho` elementwise. A step multiplies `rho` by
//! the exact exponential of the unmonitored part, applies the diagonal
//! Kraus operator of the monitored part (second-order Rouchon form) and
//! renormalizes. Relaxation and pure dephasing are applied as exact
//! channels around it (Strang splitting). The scheme is positivity
//! preserving and reduces to the Itô SME as `dt -> 0`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::fields::FieldSolution;
use crate::master_eq::{from_block, polaron_coefficients, DensityMatrix};
use crate::num::{cis, creal, czero, Complex, Real};
use crate::measures::Parity;
use crate::params::{SystemParams, TimeGrid};

type Block<T> = [[Complex<T>; 4]; 4];

/// Bound on the per-step deterministic norm drift `(eta |m|^2 dt)^2 / 4`.
pub const MAX_NORM_DRIFT: f64 = 1.0e-3;

/// Per-step measurement strength `eta max|m_c|^2 dt` targeted by
/// [`required_substeps`]; the weak error of the Kraus step grows with it.
pub const TARGET_STEP_STRENGTH: f64 = 1.0e-3;

/// State-dependent output amplitudes `m_s(t)` of the monitored quadrature:
/// `e^{i theta} (-sqrt(kappa_s1 eta_l) e^{i phi} alpha_s + sqrt(kappa_s2) beta_s)`.
#[derive(Clone, Debug, PartialEq)]
pub struct MeasurementOperator<T> {
    pub grid: TimeGrid<T>,
    pub m: Vec<[Complex<T>; 4]>,
}

impl<T: Real> MeasurementOperator<T> {
    /// The link phase multiplies the chip-1 term so that `m_s` equals the
    /// output field `y_s` up to a state-independent offset.
    pub fn from_fields(sol: &FieldSolution<T>, p: &SystemParams<T>) -> Self {
        let rot = cis(p.theta);
        let link = cis(p.phi).scale((p.chip1.kappa_s * p.eta_l).sqrt());
        let sk2 = p.chip2.kappa_s.sqrt();
        let m = (0..sol.grid.n_samples)
            .map(|t| {
                std::array::from_fn(|s| {
                    let (b1, b2) = (s >> 1, s & 1);
                    rot * (-link * sol.alpha[b1].samples[t] + sol.beta[b1][b2].samples[t].scale(sk2))
                })
            })
            .collect();
        Self { grid: sol.grid, m }
    }

    /// Largest `|m_s - mean_s m|^2` over the grid.
    pub fn max_centered_rate(&self) -> T {
        self.m
            .iter()
            .map(|ms| {
                let c = mean4(ms);
                ms.iter().map(|z| (*z - c).norm_sqr()).fold(T::zero(), T::max)
            })
            .fold(T::zero(), T::max)
    }
}

/// Smallest number of substeps per grid interval that keeps the per-step
/// measurement strength within [`TARGET_STEP_STRENGTH`].
pub fn required_substeps<T: Real>(sol: &FieldSolution<T>, p: &SystemParams<T>) -> usize {
    let rate = (p.eta_m * MeasurementOperator::from_fields(sol, p).max_centered_rate() * sol.grid.dt).to_f64_lossy();
    ((rate / TARGET_STEP_STRENGTH).ceil() as usize).max(1)
}

fn mean4<T: Real>(v: &[Complex<T>; 4]) -> Complex<T> {
    (v[0] + v[1] + v[2] + v[3]).scale(T::lit(0.25))
}

/// The two states whose outputs stay distinct when the `preserved` parity
/// subspace is matched, ordered `(low, high)`: `|00>, |11>` for odd and
/// `|01>, |10>` for even.
pub fn discriminating_states(preserved: Parity) -> (usize, usize) {
    match preserved {
        Parity::Odd => (0, 3),
        Parity::Even => (1, 2),
    }
}

/// Quadrature angle maximizing `integral Re(e^{i theta} d)^2 dt`, with `d`
/// the output difference of the discriminating states.
pub fn readout_angle<T: Real>(sol: &FieldSolution<T>, preserved: Parity) -> T {
    let (lo, hi) = discriminating_states(preserved);
    let d: Vec<Complex<T>> = sol.y_state(lo).samples.iter().zip(&sol.y_state(hi).samples).map(|(a, b)| *a - *b).collect();
    let sq = d.iter().fold(czero(), |acc: Complex<T>, z| acc + *z * *z);
    if sq.norm() > T::zero() {
        -sq.arg() * T::lit(0.5)
    } else {
        T::zero()
    }
}

/// Integrator settings.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SmeOptions {
    /// Integration steps per grid interval.
    pub substeps: usize,
    pub store_states: bool,
    pub store_record: bool,
}

impl Default for SmeOptions {
    fn default() -> Self {
        Self { substeps: 1, store_states: false, store_record: false }
    }
}

/// One stochastic run.
#[derive(Clone, Debug)]
pub struct Trajectory<T> {
    pub seed: u64,
    pub index: usize,
    pub rho_final: DensityMatrix<T>,
    /// Conditioned state at every grid sample, when requested.
    pub rho_t: Vec<DensityMatrix<T>>,
    /// `V(t)` per grid sample, when requested. Sample `k` is the record
    /// averaged over `[t_k, t_k + dt]`.
    pub record: Vec<T>,
    /// `sum_k w_k V_k dt`, zero when no weights were supplied.
    pub outcome: Complex<T>,
    pub kept: bool,
}

/// Per-step data shared by all trajectories of one field solution.
#[derive(Clone, Debug)]
pub struct SmePropagator<T> {
    grid: TimeGrid<T>,
    substeps: usize,
    h: T,
    eta: T,
    /// Centered amplitudes per substep.
    m: Vec<[Complex<T>; 4]>,
    /// `2 sqrt(eta) Re(mean_s m)` per grid sample (state-independent record offset).
    offset: Vec<T>,
    /// `m` at grid samples, centered, for the record's last interval.
    m_last: [Complex<T>; 4],
    /// Exact exponential of the unmonitored measurement part per substep.
    unmonitored: Vec<Block<T>>,
    decay: HalfStepChannel<T>,
    options: SmeOptions,
}

/// Relaxation and pure dephasing over half a substep, as exact channels.
#[derive(Clone, Copy, Debug)]
struct HalfStepChannel<T> {
    damp: [T; 2],
    dephase: [T; 2],
}

impl<T: Real> HalfStepChannel<T> {
    fn new(p: &SystemParams<T>, tau: T) -> Self {
        let damp = p.gamma1.map(|g| T::one() - (-g * tau).exp());
        let dephase = p.gamma_phi.map(|g| (-(g + g) * tau).exp());
        Self { damp, dephase }
    }

    fn apply(&self, rho: &mut Block<T>) {
        for q in 0..2 {
            let mask = 1usize << (1 - q);
            let pd = self.damp[q];
            if pd > T::zero() {
                let keep = (T::one() - pd).sqrt();
                let old = *rho;
                for r in 0..4 {
                    for c in 0..4 {
                        let f = |s: usize| if s & mask != 0 { keep } else { T::one() };
                        let mut v = old[r][c].scale(f(r) * f(c));
                        if r & mask == 0 && c & mask == 0 {
                            v = v + old[r | mask][c | mask].scale(pd);
                        }
                        rho[r][c] = v;
                    }
                }
            }
            let g = self.dephase[q];
            if g < T::one() {
                for r in 0..4 {
                    for c in 0..4 {
                        if (r & mask) != (c & mask) {
                            rho[r][c] = rho[r][c].scale(g);
                        }
                    }
                }
            }
        }
    }
}

impl<T: Real> SmePropagator<T> {
    pub fn new(sol: &FieldSolution<T>, p: &SystemParams<T>, options: SmeOptions) -> Result<Self> {
        if !(p.eta_m >= T::zero() && p.eta_m <= T::one()) {
            return Err(Error::InvalidParameter("eta_m outside [0,1]".into()));
        }
        if options.substeps == 0 {
            return Err(Error::InvalidParameter("substeps must be >= 1".into()));
        }
        let grid = sol.grid;
        let s = options.substeps;
        let h = grid.dt / T::from_usize_lossy(s);
        let eta = p.eta_m;
        let op = MeasurementOperator::from_fields(sol, p);
        let drift = eta * op.max_centered_rate() * h;
        if (drift * drift * T::lit(0.25)).to_f64_lossy() > MAX_NORM_DRIFT {
            return Err(Error::Unstable(format!(
                "measurement strength times dt = {:.3e} per step",
                drift.to_f64_lossy()
            )));
        }
        let coeffs = polaron_coefficients(sol, p);
        let n = grid.n_samples;
        let centered: Vec<[Complex<T>; 4]> = op
            .m
            .iter()
            .map(|ms| {
                let c = mean4(ms);
                ms.map(|z| z - c)
            })
            .collect();
        let offset: Vec<T> = op.m.iter().map(|ms| T::lit(2.0) * eta.sqrt() * mean4(ms).re).collect();
        // Unmonitored generator at a grid sample: a - eta D[M_c] (elementwise).
        let unmon = |k: usize| -> Block<T> {
            let mc = &centered[k];
            std::array::from_fn(|r| {
                std::array::from_fn(|c| {
                    let d = mc[r] * mc[c].conj() - creal(T::lit(0.5) * (mc[r].norm_sqr() + mc[c].norm_sqr()));
                    coeffs.a[k][r][c] - d.scale(eta)
                })
            })
        };
        let lerp = |x: Complex<T>, y: Complex<T>, f: T| x + (y - x).scale(f);
        let mut m = Vec::with_capacity((n - 1) * s);
        let mut unmonitored = Vec::with_capacity((n - 1) * s);
        let mut g_lo = unmon(0);
        for k in 0..n - 1 {
            let g_hi = unmon(k + 1);
            for j in 0..s {
                let f0 = T::from_usize_lossy(j) / T::from_usize_lossy(s);
                let f1 = T::from_usize_lossy(j + 1) / T::from_usize_lossy(s);
                m.push(std::array::from_fn(|q| lerp(centered[k][q], centered[k + 1][q], f0)));
                unmonitored.push(std::array::from_fn(|r| {
                    std::array::from_fn(|c| {
                        let a = lerp(g_lo[r][c], g_hi[r][c], f0);
                        let b = lerp(g_lo[r][c], g_hi[r][c], f1);
                        ((a + b).scale(h * T::lit(0.5))).exp()
                    })
                }));
            }
            g_lo = g_hi;
        }
        Ok(Self {
            grid,
            substeps: s,
            h,
            eta,
            m,
            offset,
            m_last: centered[n - 1],
            unmonitored,
            decay: HalfStepChannel::new(p, h * T::lit(0.5)),
            options,
        })
    }

    pub fn grid(&self) -> TimeGrid<T> {
        self.grid
    }

    /// Runs one trajectory from `rho0` with noise drawn from `seed`.
    /// `weights`, when given, must have one entry per grid sample.
    pub fn run(&self, rho0: &DensityMatrix<T>, seed: u64, index: usize, weights: Option<&[Complex<T>]>) -> Trajectory<T> {
        let mut rng = trajectory_rng(seed, index);
        let n = self.grid.n_samples;
        let dt = self.grid.dt;
        let h = self.h;
        let sqrt_eta = self.eta.sqrt();
        let sqrt_h = h.sqrt();
        let half = T::lit(0.5);
        let m0 = rho0.matrix();
        let mut rho: Block<T> = std::array::from_fn(|r| std::array::from_fn(|c| m0[(r, c)]));
        let mut rho_t = Vec::new();
        if self.options.store_states {
            rho_t.reserve(n);
            rho_t.push(rho0.clone());
        }
        let mut record = Vec::new();
        if self.options.store_record {
            record.reserve(n);
        }
        let mut outcome = czero();
        for k in 0..n {
            let mut dv_sum = T::zero();
            if k + 1 < n {
                for j in 0..self.substeps {
                    let idx = k * self.substeps + j;
                    let mc = &self.m[idx];
                    self.decay.apply(&mut rho);
                    // <M + M^dagger> = 2 Re sum_s m_s rho_ss.
                    let mean: T = (0..4).map(|s| (mc[s] * rho[s][s].re).re).sum::<T>() * T::lit(2.0);
                    let dw = T::lit(StandardNormal.sample(&mut rng)) * sqrt_h;
                    let dv = dw + sqrt_eta * mean * h;
                    dv_sum = dv_sum + dv;
                    let kraus: [Complex<T>; 4] = std::array::from_fn(|s| {
                        let z = mc[s];
                        creal(T::one() - half * self.eta * z.norm_sqr() * h)
                            + z.scale(sqrt_eta * dv)
                            + (z * z).scale(half * self.eta * (dv * dv - h))
                    });
                    let u = &self.unmonitored[idx];
                    for r in 0..4 {
                        for c in 0..4 {
                            rho[r][c] = rho[r][c] * u[r][c] * kraus[r] * kraus[c].conj();
                        }
                    }
                    self.decay.apply(&mut rho);
                    normalize(&mut rho);
                }
                if self.options.store_states {
                    rho_t.push(DensityMatrix::from_matrix_unchecked(from_block(&rho)));
                }
            } else {
                // Interval past the last sample: no state update, record only.
                let mean: T = (0..4).map(|s| (self.m_last[s] * rho[s][s].re).re).sum::<T>() * T::lit(2.0);
                let dw = T::lit(StandardNormal.sample(&mut rng)) * dt.sqrt();
                dv_sum = dw + sqrt_eta * mean * dt;
            }
            let v = dv_sum / dt + self.offset[k];
            if let Some(w) = weights {
                outcome = outcome + w[k].scale(v * dt);
            }
            if self.options.store_record {
                record.push(v);
            }
        }
        Trajectory {
            seed,
            index,
            rho_final: DensityMatrix::from_matrix_unchecked(from_block(&rho)),
            rho_t,
            record,
            outcome,
            kept: true,
        }
    }
}

fn normalize<T: Real>(rho: &mut Block<T>) {
    let tr = (0..4).fold(T::zero(), |acc, s| acc + rho[s][s].re);
    let inv = T::one() / tr;
    for r in 0..4 {
        for c in 0..4 {
            rho[r][c] = if r == c { creal(rho[r][c].re * inv) } else { rho[r][c].scale(inv) };
        }
    }
    // Enforce exact Hermiticity against rounding.
    for r in 0..4 {
        for c in (r + 1)..4 {
            let z = (rho[r][c] + rho[c][r].conj()).scale(T::lit(0.5));
            rho[r][c] = z;
            rho[c][r] = z.conj();
        }
    }
}

/// Independent, reproducible noise stream for trajectory `index` of a run
/// seeded with `seed`.
pub fn trajectory_rng(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    rng
}

/// Single trajectory with states and record stored.
pub fn evolve_sme<T: Real>(rho0: &DensityMatrix<T>, sol: &FieldSolution<T>, p: &SystemParams<T>, seed: u64) -> Result<Trajectory<T>> {
    let options = SmeOptions { store_states: true, store_record: true, ..Default::default() };
    let prop = SmePropagator::new(sol, p, options)?;
    Ok(prop.run(rho0, seed, 0, None))
}

/// Runs trajectories `0..n` in parallel; results are in index order.
pub fn run_ensemble<T: Real>(
    prop: &SmePropagator<T>,
    rho0: &DensityMatrix<T>,
    n: usize,
    seed: u64,
    weights: Option<&[Complex<T>]>,
) -> Result<Vec<Trajectory<T>>> {
    if let Some(w) = weights {
        if w.len() != prop.grid.n_samples {
            return Err(Error::LengthMismatch(w.len(), prop.grid.n_samples));
        }
    }
    Ok((0..n).into_par_iter().map(|i| prop.run(rho0, seed, i, weights)).collect())
}

/// Mean final state of the given trajectories.
pub fn ensemble_mean<T: Real>(trajectories: &[Trajectory<T>]) -> Result<DensityMatrix<T>> {
    mean_state(trajectories.iter().map(|t| &t.rho_final))
}

pub(crate) fn mean_state<'a, T: Real>(states: impl Iterator<Item = &'a DensityMatrix<T>>) -> Result<DensityMatrix<T>> {
    let mut acc = crate::linalg::ComplexMatrix::zeros(4, 4);
    let mut count = 0usize;
    for s in states {
        acc = &acc + s.matrix();
        count += 1;
    }
    if count == 0 {
        return Err(Error::InvalidInput("no states to average".into()));
    }
    let m = acc.scale_real(T::one() / T::from_usize_lossy(count));
    let tr = m.trace().re;
    Ok(DensityMatrix::from_matrix_unchecked(m.scale_real(T::one() / tr).hermitian_part()))
}

/// Integration weights: half the output difference of the discriminating
/// states, rotated into the readout frame. For odd parity this equals the
/// mean of the four differences between neighboring basis states, each
/// oriented toward the more excited state.
pub fn integration_weights<T: Real>(sol: &FieldSolution<T>, theta: T, preserved: Parity) -> Vec<Complex<T>> {
    let rot = cis(theta);
    let (lo, hi) = discriminating_states(preserved);
    let (ylo, yhi) = (&sol.y_state(lo).samples, &sol.y_state(hi).samples);
    ylo.iter().zip(yhi).map(|(a, b)| rot * (*b - *a).scale(T::lit(0.5))).collect()
}

/// `sum_k w_k V_k dt`.
pub fn integrate_record<T: Real>(record: &[T], weights: &[Complex<T>], dt: T) -> Result<Complex<T>> {
    if record.len() != weights.len() {
        return Err(Error::LengthMismatch(record.len(), weights.len()));
    }
    Ok(record.iter().zip(weights).fold(czero(), |acc, (v, w)| acc + w.scale(*v * dt)))
}

/// Variance of the outcome under a pure-noise record, `sum |w|^2 dt`
/// (split equally between the quadratures of a circular weight).
pub fn noise_variance<T: Real>(weights: &[Complex<T>], dt: T) -> T {
    weights.iter().map(|w| w.norm_sqr()).sum::<T>() * dt
}

/// Expected noiseless record `2 sqrt(eta) Re<M>` for a fixed basis state.
pub fn mean_record<T: Real>(sol: &FieldSolution<T>, p: &SystemParams<T>, s: usize) -> Vec<T> {
    let op = MeasurementOperator::from_fields(sol, p);
    op.m.iter().map(|ms| T::lit(2.0) * p.eta_m.sqrt() * ms[s].re).collect()
}
