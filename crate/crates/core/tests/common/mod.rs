#![allow(dead_code)]

use bounce_core::linalg::ComplexMatrix;
use bounce_core::master_eq::DensityMatrix;
use bounce_core::num::Complex;
use nalgebra::Matrix4;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub type C64 = nalgebra::Complex<f64>;

/// Random full-rank state `G G^dagger / Tr` with Gaussian-like entries; a
/// share of them is mixed with a Bell state so entangled cases are common.
pub fn random_state(seed: u64) -> DensityMatrix<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let g = ComplexMatrix::from_fn(4, 4, |_, _| Complex::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)));
    let m = &g * &g.adjoint();
    let tr = m.trace().re;
    let rho = DensityMatrix::new(m.scale_real(1.0 / tr).hermitian_part()).unwrap();
    let w = rng.random_range(0.0..1.0);
    DensityMatrix::bell(rng.random_bool(0.5), rng.random_range(-3.0..3.0)).mix(&rho, w)
}

pub fn to_nalgebra(rho: &DensityMatrix<f64>) -> Matrix4<C64> {
    Matrix4::from_fn(|r, c| {
        let z = rho.get(r, c);
        C64::new(z.re, z.im)
    })
}

/// Partial transpose on the second qubit by explicit index swapping.
pub fn partial_transpose(m: &Matrix4<C64>) -> Matrix4<C64> {
    Matrix4::from_fn(|r, c| {
        let (i, j) = (r / 2, r % 2);
        let (k, l) = (c / 2, c % 2);
        m[(2 * i + l, 2 * k + j)]
    })
}

/// `log2 ||rho^{T_B}||_1` from the eigenvalues of the partial transpose.
pub fn log_negativity(rho: &DensityMatrix<f64>) -> f64 {
    let pt = partial_transpose(&to_nalgebra(rho));
    let eig = pt.symmetric_eigen().eigenvalues;
    eig.iter().map(|v| v.abs()).sum::<f64>().log2()
}

/// Wootters concurrence from the eigenvalues of `rho (sy x sy) rho* (sy x sy)`.
pub fn concurrence(rho: &DensityMatrix<f64>) -> f64 {
    let m = to_nalgebra(rho);
    let i = C64::new(0.0, 1.0);
    let o = C64::new(0.0, 0.0);
    let sy = nalgebra::Matrix2::new(o, -i, i, o);
    let yy = sy.kronecker(&sy);
    let tilde = yy * m.conjugate() * yy;
    let prod = m * tilde;
    let eig = prod.schur().eigenvalues().expect("triangular Schur form");
    let mut l: Vec<f64> = eig.iter().map(|z| z.re.max(0.0).sqrt()).collect();
    l.sort_by(|a, b| b.total_cmp(a));
    (l[0] - l[1] - l[2] - l[3]).max(0.0)
}
