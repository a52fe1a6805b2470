//! Unconditioned two-qubit evolution in the polaron frame: the resonators
//! are eliminated and enter only through time-dependent coefficients built
//! from the classical fields.

use rayon::prelude::*;

use crate::compensation::{compensated_pulses, CompensationMode};
use crate::error::{Error, Result};
use crate::fields::{solve_fields_fourier, state_bits, FieldSolution};
use crate::linalg::{hermitian_eigen, psd_sqrt, ComplexMatrix};
use crate::num::{cplx, creal, czero, Complex, Real};
use crate::optimize::{nelder_mead, SimplexOptions};
use crate::params::{Protocol, SystemParams, TimeGrid};

/// Upper-triangle index pairs of the six independent coherences, in the
/// order `(00,01) (00,10) (00,11) (01,10) (01,11) (10,11)`.
pub const COHERENCE_PAIRS: [(usize, usize); 6] = [(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)];

/// Labels matching [`COHERENCE_PAIRS`].
pub const COHERENCE_LABELS: [&str; 6] = ["00_01", "00_10", "00_11", "01_10", "01_11", "10_11"];

/// Two-qubit density matrix in the basis `|00>, |01>, |10>, |11>`.
#[derive(Clone, Debug, PartialEq)]
pub struct DensityMatrix<T> {
    m: ComplexMatrix<T>,
}

impl<T: Real> DensityMatrix<T> {
    /// Validates Hermiticity (1e-12), unit trace (1e-10) and positivity
    /// (eigenvalues >= -1e-9), loosened to the working precision.
    pub fn new(m: ComplexMatrix<T>) -> Result<Self> {
        if m.rows() != 4 || m.cols() != 4 {
            return Err(Error::InvalidState(format!("expected 4x4, got {}x{}", m.rows(), m.cols())));
        }
        if m.as_slice().iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::InvalidState("non-finite entry".into()));
        }
        let tol = |x: f64| T::lit(x).max(T::tight_tol());
        let defect = m.hermitian_defect();
        if defect > tol(1e-12) {
            return Err(Error::InvalidState(format!("not Hermitian (defect {:e})", defect.to_f64_lossy())));
        }
        let tr = m.trace();
        if (tr.re - T::one()).abs() > tol(1e-10) || tr.im.abs() > tol(1e-10) {
            return Err(Error::InvalidState(format!("trace {} != 1", tr.re)));
        }
        let m = m.hermitian_part();
        let low = hermitian_eigen(&m)?.values[3];
        if low < -tol(1e-9) {
            return Err(Error::InvalidState(format!("negative eigenvalue {:e}", low.to_f64_lossy())));
        }
        Ok(Self { m })
    }

    /// Wraps a matrix already known to be a state (used inside integrators).
    pub(crate) fn from_matrix_unchecked(m: ComplexMatrix<T>) -> Self {
        Self { m }
    }

    /// `|psi><psi|` for a (not necessarily normalized) vector.
    pub fn pure(psi: &[Complex<T>; 4]) -> Result<Self> {
        let norm: T = psi.iter().map(|z| z.norm_sqr()).sum();
        if !(norm > T::zero()) {
            return Err(Error::InvalidState("zero state vector".into()));
        }
        let s = T::one() / norm.sqrt();
        let v: Vec<Complex<T>> = psi.iter().map(|z| z.scale(s)).collect();
        Ok(Self { m: ComplexMatrix::outer(&v, &v) })
    }

    pub fn basis(s: usize) -> Self {
        let mut m = ComplexMatrix::zeros(4, 4);
        m[(s, s)] = creal(T::one());
        Self { m }
    }

    pub fn maximally_mixed() -> Self {
        Self { m: ComplexMatrix::identity(4).scale_real(T::lit(0.25)) }
    }

    /// `|++><++|`.
    pub fn plus_plus() -> Self {
        Self { m: ComplexMatrix::from_fn(4, 4, |_, _| creal(T::lit(0.25))) }
    }

    /// `(|01> + e^{i phase}|10>) / sqrt(2)` for odd parity, or the same with
    /// `|00>, |11>` for even parity.
    pub fn bell(odd: bool, phase: T) -> Self {
        let (a, b) = if odd { (1, 2) } else { (0, 3) };
        let mut psi = [czero(); 4];
        psi[a] = creal(T::one());
        psi[b] = cplx(phase.cos(), phase.sin());
        Self::pure(&psi).expect("nonzero vector")
    }

    /// Product of single-qubit mixed states with excited populations `p1`, `p2`.
    pub fn thermal(p1: T, p2: T) -> Self {
        let q = [T::one() - p1, p1];
        let r = [T::one() - p2, p2];
        let diag: Vec<Complex<T>> = (0..4).map(|s| creal(q[s >> 1] * r[s & 1])).collect();
        Self { m: ComplexMatrix::diagonal(&diag) }
    }

    /// `(1 - w) rho + w sigma`.
    pub fn mix(&self, other: &Self, w: T) -> Self {
        Self { m: &self.m.scale_real(T::one() - w) + &other.m.scale_real(w) }
    }

    pub fn matrix(&self) -> &ComplexMatrix<T> {
        &self.m
    }

    pub fn into_matrix(self) -> ComplexMatrix<T> {
        self.m
    }

    pub fn get(&self, r: usize, c: usize) -> Complex<T> {
        self.m[(r, c)]
    }

    pub fn population(&self, s: usize) -> T {
        self.m[(s, s)].re
    }

    pub fn populations(&self) -> [T; 4] {
        std::array::from_fn(|s| self.population(s))
    }

    /// The six upper-triangle coherences in [`COHERENCE_PAIRS`] order.
    pub fn coherences(&self) -> [Complex<T>; 6] {
        COHERENCE_PAIRS.map(|(r, c)| self.m[(r, c)])
    }

    /// Populations of `|01>` and `|10>`.
    pub fn odd_population(&self) -> T {
        self.population(1) + self.population(2)
    }

    pub fn trace(&self) -> T {
        self.m.trace().re
    }

    pub fn eigenvalues(&self) -> Result<Vec<T>> {
        Ok(hermitian_eigen(&self.m.hermitian_part())?.values)
    }

    pub fn min_eigenvalue(&self) -> Result<T> {
        Ok(self.eigenvalues()?[3])
    }

    /// `0.5 * ||rho - sigma||_1`.
    pub fn trace_distance(&self, other: &Self) -> Result<T> {
        let d = (&self.m - &other.m).hermitian_part();
        let sum: T = hermitian_eigen(&d)?.values.iter().map(|v| v.abs()).sum();
        Ok(sum * T::lit(0.5))
    }

    /// Uhlmann fidelity `(Tr sqrt(sqrt(rho) sigma sqrt(rho)))^2`.
    pub fn fidelity(&self, other: &Self) -> Result<T> {
        let s = psd_sqrt(&self.m.hermitian_part())?;
        let inner = (&(&s * &other.m) * &s).hermitian_part();
        let t: T = hermitian_eigen(&inner)?.values.iter().map(|v| v.max(T::zero()).sqrt()).sum();
        Ok(t * t)
    }

    /// Purity `Tr rho^2`.
    pub fn purity(&self) -> T {
        self.m.trace_product(&self.m).re
    }

    /// Four diagonal entries followed by Re/Im of the six upper coherences.
    pub fn to_reals(&self) -> [T; 16] {
        let mut out = [T::zero(); 16];
        for s in 0..4 {
            out[s] = self.population(s);
        }
        for (i, c) in self.coherences().iter().enumerate() {
            out[4 + 2 * i] = c.re;
            out[5 + 2 * i] = c.im;
        }
        out
    }

    /// Inverse of [`DensityMatrix::to_reals`]; validates the result.
    pub fn from_reals(v: &[T]) -> Result<Self> {
        if v.len() != 16 {
            return Err(Error::InvalidState(format!("expected 16 reals, got {}", v.len())));
        }
        let mut m = ComplexMatrix::zeros(4, 4);
        for s in 0..4 {
            m[(s, s)] = creal(v[s]);
        }
        for (i, (r, c)) in COHERENCE_PAIRS.iter().enumerate() {
            let z = cplx(v[4 + 2 * i], v[5 + 2 * i]);
            m[(*r, *c)] = z;
            m[(*c, *r)] = z.conj();
        }
        Self::new(m)
    }

    pub fn cast<U: Real>(&self) -> DensityMatrix<U> {
        DensityMatrix { m: self.m.cast() }
    }
}

/// Elementwise generator coefficients `a[s][s'](t)` of the measurement
/// part: `d rho_{s s'} / dt = a_{s s'} rho_{s s'}`.
#[derive(Clone, Debug, PartialEq)]
pub struct PolaronCoefficients<T> {
    pub grid: TimeGrid<T>,
    pub a: Vec<[[Complex<T>; 4]; 4]>,
}

impl<T: Real> PolaronCoefficients<T> {
    /// Coefficients scaled by a real factor (fields scaled by its square root).
    pub fn scaled(&self, factor: T) -> Self {
        let a = self.a.iter().map(|m| m.map(|row| row.map(|z| z.scale(factor)))).collect();
        Self { grid: self.grid, a }
    }

    /// Linear interpolation between samples `k` and `k + 1`.
    fn at(&self, k: usize, frac: T) -> [[Complex<T>; 4]; 4] {
        let lo = &self.a[k];
        let hi = &self.a[(k + 1).min(self.a.len() - 1)];
        std::array::from_fn(|r| std::array::from_fn(|c| lo[r][c] + (hi[r][c] - lo[r][c]).scale(frac)))
    }
}

/// Builds the polaron-frame coefficients from the classical fields.
///
/// For `s = (i, j)`, `s' = (k, l)`:
/// `a = 2i chi1 [i != k] (-1)^i alpha^k conj(alpha^i)
///    + 2i chi2 [j != l] (-1)^j beta^{kl} conj(beta^{ij})`.
/// The chip-2 sign follows the second-qubit index `j`; with `(-1)^i` the
/// generator would not preserve Hermiticity when `i == k`.
pub fn polaron_coefficients<T: Real>(sol: &FieldSolution<T>, p: &SystemParams<T>) -> PolaronCoefficients<T> {
    let two = T::lit(2.0);
    let c1 = cplx(T::zero(), two * p.chip1.chi);
    let c2 = cplx(T::zero(), two * p.chip2.chi);
    let sign = |b: usize| if b == 0 { T::one() } else { -T::one() };
    let n = sol.grid.n_samples;
    let a = (0..n)
        .map(|t| {
            let mut m = [[czero(); 4]; 4];
            for (s, row) in m.iter_mut().enumerate() {
                let (i, j) = state_bits(s);
                for (s2, out) in row.iter_mut().enumerate() {
                    let (k, l) = state_bits(s2);
                    let mut v = czero();
                    if i != k {
                        v = v + c1 * sol.alpha[k].samples[t] * sol.alpha[i].samples[t].conj() * creal(sign(i));
                    }
                    if j != l {
                        v = v + c2 * sol.beta[k][l].samples[t] * sol.beta[i][j].samples[t].conj() * creal(sign(j));
                    }
                    *out = v;
                }
            }
            m
        })
        .collect();
    PolaronCoefficients { grid: sol.grid, a }
}

/// Phenomenological relaxation and pure dephasing of both qubits.
#[derive(Clone, Copy, Debug, PartialEq)]
pub(crate) struct Decoherence<T> {
    gamma1: [T; 2],
    gamma_phi: [T; 2],
}

impl<T: Real> Decoherence<T> {
    pub(crate) fn from_params(p: &SystemParams<T>) -> Self {
        Self { gamma1: p.gamma1, gamma_phi: p.gamma_phi }
    }

    /// Adds `sum_q gamma_phi D[sz_q] rho + gamma1 D[s-_q] rho` to `out`.
    /// Qubit 1 is the high bit of the state index.
    pub(crate) fn apply(&self, rho: &[[Complex<T>; 4]; 4], out: &mut [[Complex<T>; 4]; 4]) {
        let two = T::lit(2.0);
        let half = T::lit(0.5);
        for q in 0..2 {
            let bit = 1 - q; // qubit 1 -> bit 1 (value 2), qubit 2 -> bit 0 (value 1)
            let mask = 1usize << bit;
            let (g1, gp) = (self.gamma1[q], self.gamma_phi[q]);
            for r in 0..4 {
                for c in 0..4 {
                    let (er, ec) = (r & mask != 0, c & mask != 0);
                    let mut rate = T::zero();
                    if er != ec {
                        rate = rate - two * gp;
                    }
                    let n_sum = T::from_usize_lossy(er as usize + ec as usize);
                    rate = rate - half * g1 * n_sum;
                    let mut v = rho[r][c].scale(rate);
                    if !er && !ec {
                        v = v + rho[r | mask][c | mask].scale(g1);
                    }
                    out[r][c] = out[r][c] + v;
                }
            }
        }
    }
}

type Block<T> = [[Complex<T>; 4]; 4];

fn to_block<T: Real>(m: &ComplexMatrix<T>) -> Block<T> {
    std::array::from_fn(|r| std::array::from_fn(|c| m[(r, c)]))
}

pub(crate) fn from_block<T: Real>(b: &Block<T>) -> ComplexMatrix<T> {
    ComplexMatrix::from_fn(4, 4, |r, c| b[r][c])
}

fn generator<T: Real>(a: &Block<T>, dec: &Decoherence<T>, rho: &Block<T>) -> Block<T> {
    let mut out: Block<T> = std::array::from_fn(|r| std::array::from_fn(|c| a[r][c] * rho[r][c]));
    dec.apply(rho, &mut out);
    out
}

/// Time series of unconditioned states.
#[derive(Clone, Debug)]
pub struct MeEvolution<T> {
    pub grid: TimeGrid<T>,
    pub states: Vec<DensityMatrix<T>>,
}

impl<T: Real> MeEvolution<T> {
    pub fn final_state(&self) -> &DensityMatrix<T> {
        self.states.last().expect("evolution has at least one state")
    }
}

/// Integrates the polaron master equation with classical RK4 on the
/// coefficient grid. Fails if the trace drifts by more than 1e-6.
pub fn evolve_me<T: Real>(
    rho0: &DensityMatrix<T>,
    coeffs: &PolaronCoefficients<T>,
    p: &SystemParams<T>,
) -> Result<MeEvolution<T>> {
    let grid = coeffs.grid;
    let dt = grid.dt;
    let half = T::lit(0.5);
    let dec = Decoherence::from_params(p);
    let mut rho = to_block(rho0.matrix());
    let mut states = Vec::with_capacity(grid.n_samples);
    states.push(rho0.clone());
    let axpy = |x: &Block<T>, k: &Block<T>, h: T| -> Block<T> {
        std::array::from_fn(|r| std::array::from_fn(|c| x[r][c] + k[r][c].scale(h)))
    };
    let tol = T::lit(1e-6).max(T::tight_tol());
    for k in 0..grid.n_samples - 1 {
        let a0 = coeffs.a[k];
        let am = coeffs.at(k, half);
        let a1 = coeffs.a[k + 1];
        let k1 = generator(&a0, &dec, &rho);
        let k2 = generator(&am, &dec, &axpy(&rho, &k1, dt * half));
        let k3 = generator(&am, &dec, &axpy(&rho, &k2, dt * half));
        let k4 = generator(&a1, &dec, &axpy(&rho, &k3, dt));
        let sixth = dt / T::lit(6.0);
        for r in 0..4 {
            for c in 0..4 {
                rho[r][c] = rho[r][c] + (k1[r][c] + (k2[r][c] + k3[r][c]).scale(T::lit(2.0)) + k4[r][c]).scale(sixth);
            }
        }
        let tr = (0..4).fold(T::zero(), |acc, s| acc + rho[s][s].re);
        if !((tr - T::one()).abs() <= tol) {
            return Err(Error::Unstable(format!("trace drifted to {} at step {k}", tr.to_f64_lossy())));
        }
        states.push(DensityMatrix::from_matrix_unchecked(from_block(&rho)));
    }
    Ok(MeEvolution { grid, states })
}

/// Fields on the protocol window for drive amplitude `amplitude` and the
/// given compensation mode. Compensation is synthesized from `model` and
/// played on `device`.
pub fn protocol_fields<T: Real>(
    amplitude: T,
    model: &SystemParams<T>,
    device: &SystemParams<T>,
    protocol: &Protocol<T>,
    mode: CompensationMode,
) -> Result<FieldSolution<T>> {
    let strong = protocol.strong_pulses(amplitude, device.amp_scale)?;
    let pulses = compensated_pulses(&strong, model, mode)?;
    let sol = solve_fields_fourier(&pulses, device)?;
    Ok(sol.truncated(protocol.window_grid()?.n_samples))
}

/// Final unconditioned state at one drive amplitude.
#[derive(Clone, Debug)]
pub struct SweepPoint<T> {
    pub amplitude: T,
    /// `amplitude^2`, the pre-scale measurement power.
    pub power: T,
    pub rho_final: DensityMatrix<T>,
}

/// Evolves `rho0` through the protocol at each amplitude.
pub fn dephasing_sweep<T: Real>(
    amplitudes: &[T],
    p: &SystemParams<T>,
    protocol: &Protocol<T>,
    mode: CompensationMode,
    rho0: &DensityMatrix<T>,
) -> Result<Vec<SweepPoint<T>>> {
    mode.pair()?;
    amplitudes
        .par_iter()
        .map(|&amplitude| {
            let sol = protocol_fields(amplitude, p, p, protocol, mode)?;
            let coeffs = polaron_coefficients(&sol, p);
            let evo = evolve_me(rho0, &coeffs, p)?;
            Ok(SweepPoint { amplitude, power: amplitude * amplitude, rho_final: evo.final_state().clone() })
        })
        .collect()
}

/// Measured unconditioned coherences at one amplitude.
#[derive(Clone, Debug, PartialEq)]
pub struct CoherencePoint {
    pub amplitude: f64,
    pub coherences: [Complex<f64>; 6],
}

/// Outcome of [`fit_eta_and_scale`].
#[derive(Clone, Debug)]
pub struct EtaScaleFit {
    pub params: SystemParams<f64>,
    pub eta_l: f64,
    pub amp_scale: f64,
    /// Model minus data, per amplitude and coherence.
    pub residuals: Vec<[Complex<f64>; 6]>,
    pub rms_residual: f64,
    pub converged: bool,
}

/// Least-squares fit of link transmission and amplitude scale to the six
/// complex coherences over an amplitude sweep, all other parameters fixed.
pub fn fit_eta_and_scale(
    data: &[CoherencePoint],
    start: &SystemParams<f64>,
    protocol: &Protocol<f64>,
    mode: CompensationMode,
    rho0: &DensityMatrix<f64>,
) -> Result<EtaScaleFit> {
    let mut amps: Vec<f64> = data.iter().map(|d| d.amplitude).collect();
    amps.sort_by(f64::total_cmp);
    amps.dedup();
    if amps.len() < 2 {
        return Err(Error::InvalidInput("fit needs at least two distinct amplitudes".into()));
    }
    mode.pair()?;
    // Coefficients scale with the square of the drive, so one field solve at
    // unit drive per link transmission serves every amplitude.
    let model = |eta_l: f64, scale: f64| -> Result<Vec<[Complex<f64>; 6]>> {
        let mut q = start.clone();
        q.eta_l = eta_l;
        q.amp_scale = scale;
        let unit = protocol_fields(1.0, &q, &q, protocol, mode)?;
        let base = polaron_coefficients(&unit, &q);
        data.par_iter()
            .map(|d| {
                let coeffs = base.scaled(d.amplitude * d.amplitude);
                Ok(evolve_me(rho0, &coeffs, &q)?.final_state().coherences())
            })
            .collect()
    };
    let cost = |x: &[f64]| -> f64 {
        match model(x[0], x[1].exp()) {
            Ok(pred) => pred
                .iter()
                .zip(data)
                .map(|(m, d)| m.iter().zip(&d.coherences).map(|(a, b)| (*a - *b).norm_sqr()).sum::<f64>())
                .sum(),
            Err(_) => f64::INFINITY,
        }
    };
    let x0 = [start.eta_l.clamp(0.0, 1.0), start.amp_scale.ln()];
    let lower = [0.0, x0[1] - 3.0];
    let upper = [1.0, x0[1] + 3.0];
    let opts = SimplexOptions { max_evaluations: 400, f_tol: 1e-22, x_tol: 1e-9, ..Default::default() };
    let m = nelder_mead(cost, &x0, &lower, &upper, &opts);
    let (eta_l, amp_scale) = (m.x[0], m.x[1].exp());
    let pred = model(eta_l, amp_scale)?;
    let residuals: Vec<[Complex<f64>; 6]> =
        pred.iter().zip(data).map(|(m, d)| std::array::from_fn(|i| m[i] - d.coherences[i])).collect();
    let count = (residuals.len() * 6) as f64;
    let rms_residual = (residuals.iter().flatten().map(|z| z.norm_sqr()).sum::<f64>() / count).sqrt();
    let mut params = start.clone();
    params.eta_l = eta_l;
    params.amp_scale = amp_scale;
    Ok(EtaScaleFit { params, eta_l, amp_scale, residuals, rms_residual, converged: m.converged })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::dephasing_integral;

    fn quiet(mut p: SystemParams<f64>) -> SystemParams<f64> {
        p.gamma1 = [0.0; 2];
        p.gamma_phi = [0.0; 2];
        p
    }

    #[test]
    fn density_matrix_validation() {
        assert!(DensityMatrix::new(ComplexMatrix::<f64>::identity(4)).is_err());
        let mut m = ComplexMatrix::<f64>::identity(4).scale_real(0.25);
        m[(0, 1)] = cplx(0.1, 0.0);
        assert!(DensityMatrix::new(m).is_err());
        let mut m = ComplexMatrix::<f64>::zeros(4, 4);
        m[(0, 0)] = creal(1.5);
        m[(1, 1)] = creal(-0.5);
        assert!(DensityMatrix::new(m).is_err());
        assert!(DensityMatrix::new(DensityMatrix::<f64>::plus_plus().into_matrix()).is_ok());
    }

    #[test]
    fn reals_round_trip() {
        let rho = DensityMatrix::<f64>::bell(true, 0.7).mix(&DensityMatrix::thermal(0.1, 0.2), 0.3);
        let back = DensityMatrix::from_reals(&rho.to_reals()).unwrap();
        assert!(rho.trace_distance(&back).unwrap() < 1e-15);
    }

    #[test]
    fn fidelity_and_distance_basics() {
        let a = DensityMatrix::<f64>::bell(true, 0.0);
        let b = DensityMatrix::<f64>::bell(false, 0.0);
        assert!((a.fidelity(&a).unwrap() - 1.0).abs() < 1e-10);
        assert!(a.fidelity(&b).unwrap().abs() < 1e-10);
        assert!((a.trace_distance(&b).unwrap() - 1.0).abs() < 1e-12);
        let mm = DensityMatrix::<f64>::maximally_mixed();
        assert!((a.fidelity(&mm).unwrap() - 0.25).abs() < 1e-10);
    }

    #[test]
    fn zero_fields_give_zero_coefficients() {
        let p = SystemParams::device_defaults();
        let protocol = Protocol::standard();
        let sol = protocol_fields(0.0, &p, &p, &protocol, CompensationMode::None).unwrap();
        let c = polaron_coefficients(&sol, &p);
        assert!(c.a.iter().flatten().flatten().all(|z| *z == czero()));
        let mut q = p.clone();
        q.chip1.chi = 0.0;
        q.chip2.chi = 0.0;
        let sol = protocol_fields(1.0, &q, &q, &protocol, CompensationMode::None).unwrap();
        assert!(polaron_coefficients(&sol, &q).a.iter().flatten().flatten().all(|z| *z == czero()));
    }

    #[test]
    fn coefficients_are_hermitian_and_trace_free() {
        let p = SystemParams::device_defaults();
        let sol = protocol_fields(1.0, &p, &p, &Protocol::standard(), CompensationMode::Odd).unwrap();
        let c = polaron_coefficients(&sol, &p);
        for m in &c.a {
            for r in 0..4 {
                assert_eq!(m[r][r], czero());
                for col in 0..4 {
                    assert!((m[r][col] - m[col][r].conj()).norm() <= 1e-12 * (1.0 + m[r][col].norm()));
                }
            }
        }
    }

    #[test]
    fn no_drive_no_decoherence_is_static() {
        let p = quiet(SystemParams::device_defaults());
        let sol = protocol_fields(0.0, &p, &p, &Protocol::standard(), CompensationMode::None).unwrap();
        let rho0 = DensityMatrix::plus_plus();
        let evo = evolve_me(&rho0, &polaron_coefficients(&sol, &p), &p).unwrap();
        assert!(evo.final_state().trace_distance(&rho0).unwrap() < 1e-14);
    }

    #[test]
    fn relaxation_follows_t1() {
        let mut p = quiet(SystemParams::device_defaults());
        p.gamma1 = [1.0 / 9.0e-6, 0.0];
        let protocol = Protocol::standard();
        let sol = protocol_fields(0.0, &p, &p, &protocol, CompensationMode::None).unwrap();
        let evo = evolve_me(&DensityMatrix::basis(2), &polaron_coefficients(&sol, &p), &p).unwrap();
        let t = sol.grid.duration();
        let excited = evo.final_state().population(2);
        assert!((excited - (-t / 9.0e-6).exp()).abs() < 1e-9);
        assert!((evo.final_state().population(0) - (1.0 - excited)).abs() < 1e-9);
    }

    #[test]
    fn pure_dephasing_decays_coherence_at_twice_the_rate() {
        let mut p = quiet(SystemParams::device_defaults());
        p.gamma_phi = [0.0, 1.0 / 20.0e-6];
        let protocol = Protocol::standard();
        let sol = protocol_fields(0.0, &p, &p, &protocol, CompensationMode::None).unwrap();
        let evo = evolve_me(&DensityMatrix::plus_plus(), &polaron_coefficients(&sol, &p), &p).unwrap();
        let t = sol.grid.duration();
        let c = evo.final_state().get(0, 1).norm();
        assert!((c - 0.25 * (-2.0 * t / 20.0e-6).exp()).abs() < 1e-10);
        assert!((evo.final_state().get(0, 2).norm() - 0.25).abs() < 1e-12);
    }

    #[test]
    fn single_chip_decay_matches_dephasing_integral() {
        let mut p = quiet(SystemParams::device_defaults());
        p.chip2.chi = 0.0;
        let protocol = Protocol::standard();
        for amp in [0.5, 1.0, 2.0] {
            let sol = protocol_fields(amp, &p, &p, &protocol, CompensationMode::None).unwrap();
            let evo = evolve_me(&DensityMatrix::plus_plus(), &polaron_coefficients(&sol, &p), &p).unwrap();
            let exponent = -(evo.final_state().get(0, 2).norm() / 0.25).ln();
            let d = dephasing_integral(&sol.alpha[0], &sol.alpha[1], p.chip1.chi).unwrap();
            assert!(d > 0.0);
            assert!((exponent - d).abs() <= 1e-4 * d, "amp {amp}: {exponent} vs {d}");
        }
    }

    #[test]
    fn populations_independent_of_drive() {
        let p = SystemParams::<f64>::device_defaults();
        let protocol = Protocol::standard();
        let pts = dephasing_sweep(&[0.0, 1.0, 2.0], &p, &protocol, CompensationMode::None, &DensityMatrix::plus_plus()).unwrap();
        for pt in &pts[1..] {
            for s in 0..4 {
                assert!((pt.rho_final.population(s) - pts[0].rho_final.population(s)).abs() < 1e-12);
            }
        }
        assert!(pts[2].rho_final.get(1, 2).norm() < pts[1].rho_final.get(1, 2).norm());
    }

    #[test]
    fn fit_rejects_single_amplitude() {
        let p = SystemParams::device_defaults();
        let data = vec![CoherencePoint { amplitude: 1.0, coherences: [czero(); 6] }];
        assert!(fit_eta_and_scale(&data, &p, &Protocol::standard(), CompensationMode::None, &DensityMatrix::plus_plus()).is_err());
    }
}
