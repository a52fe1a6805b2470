//! Entanglement and fidelity measures of two-qubit states.

use crate::error::Result;
use crate::linalg::{hermitian_eigen, psd_sqrt, ComplexMatrix};
use crate::master_eq::DensityMatrix;
use crate::num::Real;

/// Default repetition rate for ebit-rate reporting (Hz).
pub const DEFAULT_REP_RATE: f64 = 1.0e4;

/// Which Bell family a fidelity refers to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Parity {
    Odd,
    Even,
}

impl Parity {
    /// Indices of the two basis states the Bell family superposes.
    pub fn states(&self) -> (usize, usize) {
        match self {
            Self::Odd => (1, 2),
            Self::Even => (0, 3),
        }
    }
}

/// Wootters concurrence `max(0, l1 - l2 - l3 - l4)`, with `l` the
/// descending eigenvalues of `sqrt(sqrt(rho) rho~ sqrt(rho))` and
/// `rho~ = (Y x Y) conj(rho) (Y x Y)`.
pub fn concurrence<T: Real>(rho: &DensityMatrix<T>) -> Result<T> {
    let m = rho.matrix();
    // Y x Y is anti-diagonal with entries (-1, 1, 1, -1), so
    // rho~_{rc} = s_r s_c conj(rho_{3-r, 3-c}).
    let sign = |i: usize| if i == 0 || i == 3 { -T::one() } else { T::one() };
    let tilde = ComplexMatrix::from_fn(4, 4, |r, c| m[(3 - r, 3 - c)].conj().scale(sign(r) * sign(c)));
    let s = psd_sqrt(&m.hermitian_part())?;
    let r = (&(&s * &tilde) * &s).hermitian_part();
    let l: Vec<T> = hermitian_eigen(&r)?.values.iter().map(|v| v.max(T::zero()).sqrt()).collect();
    Ok((l[0] - l[1] - l[2] - l[3]).max(T::zero()))
}

/// Partial transpose on the second qubit.
pub fn partial_transpose<T: Real>(m: &ComplexMatrix<T>) -> ComplexMatrix<T> {
    ComplexMatrix::from_fn(4, 4, |r, c| {
        let (r1, r2) = (r >> 1, r & 1);
        let (c1, c2) = (c >> 1, c & 1);
        m[(2 * r1 + c2, 2 * c1 + r2)]
    })
}

/// `log2 || rho^{T_B} ||_1`.
pub fn log_negativity<T: Real>(rho: &DensityMatrix<T>) -> Result<T> {
    let pt = partial_transpose(rho.matrix()).hermitian_part();
    let norm: T = hermitian_eigen(&pt)?.values.iter().map(|v| v.abs()).sum();
    Ok(norm.max(T::one()).log2())
}

/// Largest overlap with `(|a> + e^{i phi}|b>) / sqrt(2)` in the chosen
/// parity family, and the phase attaining it:
/// `(rho_aa + rho_bb) / 2 + |rho_ab|` at `phi = -arg(rho_ab)`.
pub fn bell_fidelity<T: Real>(rho: &DensityMatrix<T>, parity: Parity) -> (T, T) {
    let (a, b) = parity.states();
    let half = T::lit(0.5);
    let ab = rho.get(a, b);
    let f = half * (rho.population(a) + rho.population(b)) + ab.norm();
    let phase = if ab.norm() > T::zero() { -ab.arg() } else { T::zero() };
    (f, phase)
}

/// `E_N * fraction * rep_rate`.
pub fn ebit_rate<T: Real>(log_neg: T, fraction_kept: T, rep_rate: T) -> T {
    log_neg * fraction_kept * rep_rate
}

/// All measures of one state.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EntanglementReport<T> {
    pub concurrence: T,
    pub bell_fidelity: T,
    pub best_bell_phase: T,
    pub log_negativity: T,
    pub ebit_rate: T,
}

impl<T: Real> EntanglementReport<T> {
    pub fn evaluate(rho: &DensityMatrix<T>, parity: Parity, fraction_kept: T, rep_rate: T) -> Result<Self> {
        let concurrence = concurrence(rho)?;
        let (bell_fidelity, best_bell_phase) = bell_fidelity(rho, parity);
        let log_negativity = log_negativity(rho)?;
        Ok(Self {
            concurrence,
            bell_fidelity,
            best_bell_phase,
            log_negativity,
            ebit_rate: ebit_rate(log_negativity, fraction_kept, rep_rate),
        })
    }
}

/// `rho` mixed with the maximally mixed state: `(1 - w) rho + w I / 4`.
pub fn depolarize<T: Real>(rho: &DensityMatrix<T>, w: T) -> DensityMatrix<T> {
    rho.mix(&DensityMatrix::maximally_mixed(), w)
}

/// Werner state `p |Phi+><Phi+| + (1 - p) I / 4`.
pub fn werner<T: Real>(p: T) -> DensityMatrix<T> {
    depolarize(&DensityMatrix::bell(false, T::zero()), T::one() - p)
}

/// Applies `diag(1, e^{i a}) x diag(1, e^{i b})` to `rho`.
pub fn local_phase<T: Real>(rho: &DensityMatrix<T>, a: T, b: T) -> DensityMatrix<T> {
    let ph = |s: usize| T::from_usize_lossy(s >> 1) * a + T::from_usize_lossy(s & 1) * b;
    let u = ComplexMatrix::diagonal(&(0..4).map(|s| crate::num::cis(ph(s))).collect::<Vec<_>>());
    DensityMatrix::from_matrix_unchecked(rho.matrix().conjugate_by(&u))
}
