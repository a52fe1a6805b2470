//! Joint-readout state tomography: simulated datasets, readout calibration,
//! linear-inversion and maximum-likelihood reconstruction, and correction
//! for residual excitation of the calibration states.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::linalg::{hermitian_eigen, least_squares, ComplexMatrix};
use crate::master_eq::DensityMatrix;
use crate::measures::{bell_fidelity, concurrence, log_negativity, Parity};
use crate::num::cplx;
use crate::optimize::bfgs;

/// Number of pre-rotations in the cardinal set.
pub const N_ROTATIONS: usize = 36;
/// Repeats of each calibration state per sequence.
pub const CALIBRATION_REPEATS: usize = 5;

/// Outcome categories per shot: bin 0, bin 1 and everything else.
pub const N_OUTCOMES: usize = 3;

type Mat = ComplexMatrix<f64>;

/// Residual excitation of each qubit at preparation.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct ResidualExcitation {
    pub q1: f64,
    pub q2: f64,
}

impl ResidualExcitation {
    pub fn new(q1: f64, q2: f64) -> Result<Self> {
        let re = Self { q1, q2 };
        re.validate()?;
        Ok(re)
    }

    pub fn validate(&self) -> Result<()> {
        for p in [self.q1, self.q2] {
            if !(0.0..=0.5).contains(&p) {
                return Err(Error::InvalidParameter(format!("residual excitation {p} outside [0, 0.5]")));
            }
        }
        Ok(())
    }

    /// `T[k][j]`: probability that preparing basis state `k` yields `j`.
    /// Each qubit ends in the opposite state with its excitation probability.
    pub fn mixing(&self) -> [[f64; 4]; 4] {
        let flip = |p: f64, a: usize, b: usize| if a == b { 1.0 - p } else { p };
        std::array::from_fn(|k| std::array::from_fn(|j| flip(self.q1, k >> 1, j >> 1) * flip(self.q2, k & 1, j & 1)))
    }
}

/// Probability that each basis state lands in each readout bin.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ReadoutModel {
    pub bins: [[f64; 4]; 2],
}

impl Default for ReadoutModel {
    /// Bin 0 collects mostly `|00>`, bin 1 mostly `|11>`.
    fn default() -> Self {
        Self { bins: [[0.96, 0.10, 0.06, 0.01], [0.01, 0.07, 0.12, 0.95]] }
    }
}

impl ReadoutModel {
    pub fn validate(&self) -> Result<()> {
        for k in 0..4 {
            let (a, b) = (self.bins[0][k], self.bins[1][k]);
            if !(a >= 0.0 && b >= 0.0 && a + b <= 1.0 + 1e-12) {
                return Err(Error::InvalidParameter(format!("bin probabilities for state {k} are not a distribution")));
            }
        }
        Ok(())
    }

    /// Outcome distribution for a diagonal of populations.
    fn outcome_probabilities(&self, pops: &[f64; 4]) -> [f64; N_OUTCOMES] {
        let p0: f64 = (0..4).map(|k| self.bins[0][k] * pops[k]).sum();
        let p1: f64 = (0..4).map(|k| self.bins[1][k] * pops[k]).sum();
        [p0, p1, (1.0 - p0 - p1).max(0.0)]
    }
}

fn single_rotation(k: usize) -> Mat {
    let (angle, axis) = match k {
        0 => (0.0, 0),
        1 => (std::f64::consts::PI, 0),
        2 => (std::f64::consts::FRAC_PI_2, 0),
        3 => (-std::f64::consts::FRAC_PI_2, 0),
        4 => (std::f64::consts::FRAC_PI_2, 1),
        _ => (-std::f64::consts::FRAC_PI_2, 1),
    };
    let (c, s) = ((0.5 * angle).cos(), (0.5 * angle).sin());
    // exp(-i angle sigma / 2) for sigma = X (axis 0) or Y (axis 1).
    let off = if axis == 0 { [cplx(0.0, -s), cplx(0.0, -s)] } else { [cplx(-s, 0.0), cplx(s, 0.0)] };
    ComplexMatrix::from_rows(2, 2, vec![cplx(c, 0.0), off[0], off[1], cplx(c, 0.0)])
}

/// The 36 products of `{I, X, X/2, -X/2, Y/2, -Y/2}` on each qubit; index
/// `6 * i1 + i2` with `i1` acting on qubit 1.
pub fn cardinal_rotations() -> Vec<Mat> {
    (0..N_ROTATIONS).map(|i| single_rotation(i / 6).kron(&single_rotation(i % 6))).collect()
}

/// Populations of `R rho R^dagger`.
fn rotated_populations(rho: &Mat, r: &Mat) -> [f64; 4] {
    let m = rho.conjugate_by(r);
    std::array::from_fn(|k| m[(k, k)].re)
}

/// Bin counts or frequencies for the rotations and calibration states.
#[derive(Clone, Debug, PartialEq)]
pub struct TomographyDataset {
    /// Outcome frequencies `(bin0, bin1, rest)` per rotation.
    pub rotations: Vec<[f64; N_OUTCOMES]>,
    /// Outcome frequencies per calibration state, averaged over repeats.
    pub calibration: [[f64; N_OUTCOMES]; 4],
    /// Shots per rotation and per calibration repeat; `None` for exact
    /// expectation values.
    pub shots: Option<u64>,
}

impl TomographyDataset {
    /// Number of equations (bins times rotations).
    pub fn n_equations(&self) -> usize {
        2 * self.rotations.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.rotations.len() != N_ROTATIONS {
            return Err(Error::InvalidInput(format!("expected {N_ROTATIONS} rotations, got {}", self.rotations.len())));
        }
        if self.shots == Some(0) {
            return Err(Error::InvalidInput("shots must be >= 1".into()));
        }
        let ok = |f: &[f64; N_OUTCOMES]| f.iter().all(|v| (0.0..=1.0 + 1e-12).contains(v));
        if !self.rotations.iter().chain(&self.calibration).all(ok) {
            return Err(Error::InvalidInput("frequencies must lie in [0, 1]".into()));
        }
        Ok(())
    }
}

/// Simulation settings.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TomographySettings {
    pub readout: ReadoutModel,
    /// Shots per rotation and per calibration repeat; `None` gives exact
    /// expectation values.
    pub shots: Option<u64>,
    /// Excitation of the calibration states.
    pub residual: ResidualExcitation,
}

impl Default for TomographySettings {
    fn default() -> Self {
        Self { readout: ReadoutModel::default(), shots: None, residual: ResidualExcitation::default() }
    }
}

fn sample_outcomes(probs: &[f64; N_OUTCOMES], shots: u64, rng: &mut ChaCha8Rng) -> [f64; N_OUTCOMES] {
    let mut counts = [0u64; N_OUTCOMES];
    let mut left = shots;
    let mut mass = 1.0;
    for k in 0..N_OUTCOMES - 1 {
        let p = if mass > 0.0 { (probs[k] / mass).clamp(0.0, 1.0) } else { 0.0 };
        counts[k] = Binomial::new(left, p).expect("probability clamped to [0, 1]").sample(rng);
        left -= counts[k];
        mass -= probs[k];
    }
    counts[N_OUTCOMES - 1] = left;
    counts.map(|c| c as f64 / shots as f64)
}

/// Simulates the tomography sequence on `rho`. Calibration states are
/// prepared with the settings' residual excitation; the measured state is
/// taken as given.
pub fn simulate_tomography(rho: &DensityMatrix<f64>, settings: &TomographySettings, seed: u64) -> Result<TomographyDataset> {
    settings.readout.validate()?;
    settings.residual.validate()?;
    if settings.shots == Some(0) {
        return Err(Error::InvalidInput("shots must be >= 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut draw = |probs: [f64; N_OUTCOMES]| match settings.shots {
        None => probs,
        Some(n) => sample_outcomes(&probs, n, &mut rng),
    };
    let rotations = cardinal_rotations()
        .iter()
        .map(|r| draw(settings.readout.outcome_probabilities(&rotated_populations(rho.matrix(), r))))
        .collect();
    let mix = settings.residual.mixing();
    let mut calibration = [[0.0; N_OUTCOMES]; 4];
    for (k, cal) in calibration.iter_mut().enumerate() {
        let probs = settings.readout.outcome_probabilities(&mix[k]);
        for _ in 0..CALIBRATION_REPEATS {
            let f = draw(probs);
            for (c, v) in cal.iter_mut().zip(f) {
                *c += v / CALIBRATION_REPEATS as f64;
            }
        }
    }
    Ok(TomographyDataset { rotations, calibration, shots: settings.shots })
}

/// Readout model inferred from the calibration segments. Without a
/// correction each calibration state is assumed pure; with one, the known
/// mixing of the prepared states is inverted.
pub fn calibrate(calibration: &[[f64; N_OUTCOMES]; 4], correction: Option<ResidualExcitation>) -> Result<ReadoutModel> {
    let mut bins = [[0.0; 4]; 2];
    for n in 0..2 {
        for k in 0..4 {
            bins[n][k] = calibration[k][n];
        }
    }
    if let Some(re) = correction {
        re.validate()?;
        // Qubit-wise inverse of the flip channel [[1-p, p], [p, 1-p]].
        let inv = |p: f64, a: usize, b: usize| {
            let d = 1.0 - 2.0 * p;
            if a == b { (1.0 - p) / d } else { -p / d }
        };
        if re.q1 >= 0.5 || re.q2 >= 0.5 {
            return Err(Error::InvalidParameter("residual excitation of 0.5 cannot be inverted".into()));
        }
        for row in bins.iter_mut() {
            let observed = *row;
            for (j, v) in row.iter_mut().enumerate() {
                *v = (0..4).map(|k| inv(re.q1, j >> 1, k >> 1) * inv(re.q2, j & 1, k & 1) * observed[k]).sum();
            }
        }
    }
    Ok(ReadoutModel { bins })
}

/// Two-qubit Pauli products excluding the identity, in the order
/// `sigma_a x sigma_b` for `(a, b) != (0, 0)`.
fn pauli_basis() -> Vec<Mat> {
    let (o, z, i) = (cplx(1.0, 0.0), cplx(0.0, 0.0), cplx(0.0, 1.0));
    let single = [
        ComplexMatrix::from_rows(2, 2, vec![o, z, z, o]),
        ComplexMatrix::from_rows(2, 2, vec![z, o, o, z]),
        ComplexMatrix::from_rows(2, 2, vec![z, -i, i, z]),
        ComplexMatrix::from_rows(2, 2, vec![o, z, z, -o]),
    ];
    (1..16).map(|k| single[k / 4].kron(&single[k % 4])).collect()
}

/// Measurement operators `R^dagger diag(a^n) R` and the observed
/// frequencies, one entry per (rotation, outcome).
struct Equations {
    ops: Vec<Mat>,
    freqs: Vec<f64>,
}

fn build_equations(data: &TomographyDataset, readout: &ReadoutModel) -> Equations {
    let rest: [f64; 4] = std::array::from_fn(|k| 1.0 - readout.bins[0][k] - readout.bins[1][k]);
    let diags = [readout.bins[0], readout.bins[1], rest];
    let mut ops = Vec::with_capacity(N_OUTCOMES * data.rotations.len());
    let mut freqs = Vec::with_capacity(ops.capacity());
    for (r, f) in cardinal_rotations().iter().zip(&data.rotations) {
        let radj = r.adjoint();
        for (d, v) in diags.iter().zip(f) {
            let m = ComplexMatrix::diagonal(&d.map(|x| cplx(x, 0.0)));
            ops.push(m.conjugate_by(&radj));
            freqs.push(*v);
        }
    }
    Equations { ops, freqs }
}

/// Linear-inversion estimate over the 15 Pauli coefficients using the two
/// bin equations per rotation. The result has unit trace but need not be
/// positive.
pub fn linear_inversion(data: &TomographyDataset, readout: &ReadoutModel) -> Result<Mat> {
    data.validate()?;
    let eq = build_equations(data, readout);
    let paulis = pauli_basis();
    let mut design = Vec::new();
    let mut rhs = Vec::new();
    for (idx, (m, f)) in eq.ops.iter().zip(&eq.freqs).enumerate() {
        if idx % N_OUTCOMES == N_OUTCOMES - 1 {
            continue;
        }
        // Tr(M rho) = Tr(M)/4 + sum_P c_P Tr(M P)/4.
        design.extend(paulis.iter().map(|p| 0.25 * m.trace_product(p).re));
        rhs.push(f - 0.25 * m.trace().re);
    }
    let coeffs = least_squares(&design, paulis.len(), &rhs, 1e-10)?;
    let mut rho = ComplexMatrix::identity(4).scale_real(0.25);
    for (c, p) in coeffs.iter().zip(&paulis) {
        rho = &rho + &p.scale_real(0.25 * c);
    }
    Ok(rho.hermitian_part())
}

/// Lower-triangular `L` packed as 4 real diagonal entries followed by the
/// real and imaginary parts of the 6 entries below the diagonal.
const N_PARAMS: usize = 16;

fn unpack(x: &[f64]) -> Mat {
    let mut l = ComplexMatrix::zeros(4, 4);
    for k in 0..4 {
        l[(k, k)] = cplx(x[k], 0.0);
    }
    let mut idx = 4;
    for r in 1..4 {
        for c in 0..r {
            l[(r, c)] = cplx(x[idx], x[idx + 1]);
            idx += 2;
        }
    }
    l
}

fn pack_gradient(g: &Mat) -> Vec<f64> {
    let mut out = Vec::with_capacity(N_PARAMS);
    for k in 0..4 {
        out.push(g[(k, k)].re);
    }
    for r in 1..4 {
        for c in 0..r {
            out.push(g[(r, c)].re);
            out.push(g[(r, c)].im);
        }
    }
    out
}

/// Cholesky factor of a positive-definite Hermitian matrix.
fn cholesky(a: &Mat) -> Result<Mat> {
    let n = a.rows();
    let mut l = ComplexMatrix::zeros(n, n);
    for j in 0..n {
        let d = a[(j, j)].re - (0..j).map(|k| l[(j, k)].norm_sqr()).sum::<f64>();
        if d <= 0.0 {
            return Err(Error::InvalidState(format!("factorization pivot {d:e} is not positive")));
        }
        let ljj = d.sqrt();
        l[(j, j)] = cplx(ljj, 0.0);
        for i in (j + 1)..n {
            let s = (0..j).fold(a[(i, j)], |acc, k| acc - l[(i, k)] * l[(j, k)].conj());
            l[(i, j)] = s / ljj;
        }
    }
    Ok(l)
}

/// Starting factor: the linear estimate with negative eigenvalues raised
/// to a small floor.
fn seed_factor(estimate: &Mat) -> Result<Vec<f64>> {
    let eig = hermitian_eigen(estimate)?;
    let floor = 1e-6;
    let clipped = eig.reconstruct_with(|v| v.max(floor));
    let tr = clipped.trace().re;
    let l = cholesky(&clipped.scale_real(1.0 / tr))?;
    let mut x = vec![0.0; N_PARAMS];
    for k in 0..4 {
        x[k] = l[(k, k)].re;
    }
    let mut idx = 4;
    for r in 1..4 {
        for c in 0..r {
            x[idx] = l[(r, c)].re;
            x[idx + 1] = l[(r, c)].im;
            idx += 2;
        }
    }
    Ok(x)
}

/// Negative log-likelihood `-sum_i f_i ln Tr(M_i rho)` with
/// `rho = L L^dagger / Tr(L L^dagger)`, and its gradient in the packed
/// parameters.
fn negative_log_likelihood(x: &[f64], eq: &Equations) -> (f64, Vec<f64>) {
    let l = unpack(x);
    let s = &l * &l.adjoint();
    let t = s.trace().re;
    if t <= 0.0 {
        return (f64::INFINITY, vec![0.0; N_PARAMS]);
    }
    let rho = s.scale_real(1.0 / t);
    let mut value = 0.0;
    let mut g = ComplexMatrix::zeros(4, 4);
    for (m, &f) in eq.ops.iter().zip(&eq.freqs) {
        if f <= 0.0 {
            continue;
        }
        let p = m.trace_product(&rho).re;
        if p <= 0.0 {
            return (f64::INFINITY, vec![0.0; N_PARAMS]);
        }
        value -= f * p.ln();
        g = &g - &m.scale_real(f / p);
    }
    // d/dS of the value at rho = S/t is (G - Tr(G rho) I) / t.
    let shift = g.trace_product(&rho).re;
    let gp = (&g - &ComplexMatrix::identity(4).scale_real(shift)).scale_real(1.0 / t);
    let grad = (&gp * &l).scale_real(2.0);
    (value, pack_gradient(&grad))
}

/// Maximum-likelihood reconstruction. The readout model comes from the
/// dataset's calibration segments, corrected for `correction` if given.
pub fn reconstruct(data: &TomographyDataset, correction: Option<ResidualExcitation>) -> Result<DensityMatrix<f64>> {
    let readout = calibrate(&data.calibration, correction)?;
    reconstruct_with_readout(data, &readout)
}

/// Maximum-likelihood reconstruction with a given readout model.
pub fn reconstruct_with_readout(data: &TomographyDataset, readout: &ReadoutModel) -> Result<DensityMatrix<f64>> {
    let estimate = linear_inversion(data, readout)?;
    let eq = build_equations(data, readout);
    let x0 = seed_factor(&estimate)?;
    let fit = bfgs(|x| negative_log_likelihood(x, &eq), &x0, 2000, 1e-12);
    let l = unpack(&fit.x);
    let s = &l * &l.adjoint();
    let tr = s.trace().re;
    DensityMatrix::new(s.scale_real(1.0 / tr).hermitian_part())
}

/// Standard errors of the measures under multinomial resampling.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BootstrapErrors {
    pub concurrence: f64,
    pub bell_fidelity: f64,
    pub log_negativity: f64,
    pub n_resamples: usize,
}

fn std_dev(v: &[f64]) -> f64 {
    if v.len() < 2 {
        return 0.0;
    }
    let mean = v.iter().sum::<f64>() / v.len() as f64;
    (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (v.len() - 1) as f64).sqrt()
}

/// Redraws every rotation and calibration segment from its observed
/// frequencies with the dataset's shot count.
pub fn resample(data: &TomographyDataset, rng: &mut ChaCha8Rng) -> TomographyDataset {
    let Some(n) = data.shots else {
        return data.clone();
    };
    let rotations = data.rotations.iter().map(|f| sample_outcomes(f, n, rng)).collect();
    let calibration = data.calibration.map(|f| {
        let mut acc = [0.0; N_OUTCOMES];
        for _ in 0..CALIBRATION_REPEATS {
            for (a, v) in acc.iter_mut().zip(sample_outcomes(&f, n, rng)) {
                *a += v / CALIBRATION_REPEATS as f64;
            }
        }
        acc
    });
    TomographyDataset { rotations, calibration, shots: data.shots }
}

/// Bootstrap standard errors of concurrence, Bell fidelity for `parity`
/// and log negativity.
pub fn bootstrap_errors(
    data: &TomographyDataset,
    n_resamples: usize,
    seed: u64,
    correction: Option<ResidualExcitation>,
    parity: Parity,
) -> Result<BootstrapErrors> {
    if n_resamples == 0 {
        return Err(Error::InvalidInput("n_resamples must be >= 1".into()));
    }
    let samples = (0..n_resamples)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(i as u64);
            let rho = reconstruct(&resample(data, &mut rng), correction)?;
            Ok([concurrence(&rho)?, bell_fidelity(&rho, parity).0, log_negativity(&rho)?])
        })
        .collect::<Result<Vec<_>>>()?;
    let col = |k: usize| std_dev(&samples.iter().map(|s| s[k]).collect::<Vec<_>>());
    Ok(BootstrapErrors { concurrence: col(0), bell_fidelity: col(1), log_negativity: col(2), n_resamples })
}
