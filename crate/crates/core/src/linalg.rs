//! Small dense complex linear algebra and the unitary DFT pair.
//!
//! Everything here is sized for two-qubit work (4x4 states, 16x16 design
//! matrices); no attempt is made at cache blocking or sparsity.

use std::ops::{Add, Index, IndexMut, Mul, Sub};

use rustfft::FftPlanner;

use crate::error::{Error, Result};
use crate::num::{creal, czero, Complex, Real};

/// Row-major dense complex matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct ComplexMatrix<T> {
    rows: usize,
    cols: usize,
    data: Vec<Complex<T>>,
}

impl<T: Real> ComplexMatrix<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![czero(); rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = creal(T::one());
        }
        m
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> Complex<T>) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                data.push(f(r, c));
            }
        }
        Self { rows, cols, data }
    }

    /// Builds a matrix from row-major entries; panics on a size mismatch.
    pub fn from_rows(rows: usize, cols: usize, data: Vec<Complex<T>>) -> Self {
        assert_eq!(data.len(), rows * cols, "from_rows: wrong element count");
        Self { rows, cols, data }
    }

    pub fn diagonal(diag: &[Complex<T>]) -> Self {
        let mut m = Self::zeros(diag.len(), diag.len());
        for (i, d) in diag.iter().enumerate() {
            m[(i, i)] = *d;
        }
        m
    }

    /// Outer product `|a><b|`.
    pub fn outer(a: &[Complex<T>], b: &[Complex<T>]) -> Self {
        Self::from_fn(a.len(), b.len(), |r, c| a[r] * b[c].conj())
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn as_slice(&self) -> &[Complex<T>] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [Complex<T>] {
        &mut self.data
    }

    pub fn adjoint(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |r, c| self[(c, r)].conj())
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |r, c| self[(c, r)])
    }

    pub fn conj(&self) -> Self {
        Self { rows: self.rows, cols: self.cols, data: self.data.iter().map(|z| z.conj()).collect() }
    }

    pub fn scale(&self, s: Complex<T>) -> Self {
        Self { rows: self.rows, cols: self.cols, data: self.data.iter().map(|z| *z * s).collect() }
    }

    pub fn scale_real(&self, s: T) -> Self {
        self.scale(creal(s))
    }

    pub fn trace(&self) -> Complex<T> {
        (0..self.rows.min(self.cols)).fold(czero(), |acc, i| acc + self[(i, i)])
    }

    pub fn frobenius_norm(&self) -> T {
        self.data.iter().map(|z| z.norm_sqr()).sum::<T>().sqrt()
    }

    pub fn max_abs(&self) -> T {
        self.data.iter().fold(T::zero(), |m, z| m.max(z.norm()))
    }

    /// Largest `|A_ij - conj(A_ji)|`.
    pub fn hermitian_defect(&self) -> T {
        let mut worst = T::zero();
        for r in 0..self.rows {
            for c in 0..self.cols {
                worst = worst.max((self[(r, c)] - self[(c, r)].conj()).norm());
            }
        }
        worst
    }

    pub fn is_hermitian(&self, tol: T) -> bool {
        self.is_square() && self.hermitian_defect() <= tol
    }

    /// `(A + A^dagger) / 2`.
    pub fn hermitian_part(&self) -> Self {
        let half = T::lit(0.5);
        Self::from_fn(self.rows, self.cols, |r, c| (self[(r, c)] + self[(c, r)].conj()).scale(half))
    }

    /// Kronecker product `self (x) other`.
    pub fn kron(&self, other: &Self) -> Self {
        let (r2, c2) = (other.rows, other.cols);
        Self::from_fn(self.rows * r2, self.cols * c2, |r, c| self[(r / r2, c / c2)] * other[(r % r2, c % c2)])
    }

    pub fn mat_vec(&self, v: &[Complex<T>]) -> Vec<Complex<T>> {
        assert_eq!(v.len(), self.cols);
        (0..self.rows)
            .map(|r| (0..self.cols).fold(czero(), |acc, c| acc + self[(r, c)] * v[c]))
            .collect()
    }

    /// `U A U^dagger`.
    pub fn conjugate_by(&self, u: &Self) -> Self {
        &(u * self) * &u.adjoint()
    }

    pub fn map(&self, f: impl Fn(Complex<T>) -> Complex<T>) -> Self {
        Self { rows: self.rows, cols: self.cols, data: self.data.iter().map(|z| f(*z)).collect() }
    }

    /// Elementwise (Hadamard) product.
    pub fn hadamard(&self, other: &Self) -> Self {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&other.data).map(|(a, b)| *a * *b).collect(),
        }
    }

    /// `Tr(A B)` without forming the product.
    pub fn trace_product(&self, other: &Self) -> Complex<T> {
        assert_eq!(self.cols, other.rows);
        assert_eq!(self.rows, other.cols);
        let mut acc = czero();
        for r in 0..self.rows {
            for k in 0..self.cols {
                acc = acc + self[(r, k)] * other[(k, r)];
            }
        }
        acc
    }

    pub fn cast<U: Real>(&self) -> ComplexMatrix<U> {
        ComplexMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self
                .data
                .iter()
                .map(|z| Complex::new(U::lit(z.re.to_f64_lossy()), U::lit(z.im.to_f64_lossy())))
                .collect(),
        }
    }
}

impl<T> Index<(usize, usize)> for ComplexMatrix<T> {
    type Output = Complex<T>;
    #[inline]
    fn index(&self, (r, c): (usize, usize)) -> &Complex<T> {
        &self.data[r * self.cols + c]
    }
}

impl<T> IndexMut<(usize, usize)> for ComplexMatrix<T> {
    #[inline]
    fn index_mut(&mut self, (r, c): (usize, usize)) -> &mut Complex<T> {
        &mut self.data[r * self.cols + c]
    }
}

impl<T: Real> Mul for &ComplexMatrix<T> {
    type Output = ComplexMatrix<T>;
    fn mul(self, rhs: Self) -> ComplexMatrix<T> {
        assert_eq!(self.cols, rhs.rows, "matrix product shape mismatch");
        let mut out = ComplexMatrix::zeros(self.rows, rhs.cols);
        for r in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(r, k)];
                if a.re == T::zero() && a.im == T::zero() {
                    continue;
                }
                for c in 0..rhs.cols {
                    out.data[r * rhs.cols + c] = out.data[r * rhs.cols + c] + a * rhs[(k, c)];
                }
            }
        }
        out
    }
}

impl<T: Real> Add for &ComplexMatrix<T> {
    type Output = ComplexMatrix<T>;
    fn add(self, rhs: Self) -> ComplexMatrix<T> {
        assert_eq!((self.rows, self.cols), (rhs.rows, rhs.cols));
        ComplexMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&rhs.data).map(|(a, b)| *a + *b).collect(),
        }
    }
}

impl<T: Real> Sub for &ComplexMatrix<T> {
    type Output = ComplexMatrix<T>;
    fn sub(self, rhs: Self) -> ComplexMatrix<T> {
        assert_eq!((self.rows, self.cols), (rhs.rows, rhs.cols));
        ComplexMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&rhs.data).map(|(a, b)| *a - *b).collect(),
        }
    }
}

/// Eigen-decomposition of a Hermitian matrix.
#[derive(Clone, Debug)]
pub struct HermitianEigen<T> {
    /// Eigenvalues in descending order.
    pub values: Vec<T>,
    /// Column `k` is the unit eigenvector for `values[k]`.
    pub vectors: ComplexMatrix<T>,
}

impl<T: Real> HermitianEigen<T> {
    pub fn vector(&self, k: usize) -> Vec<Complex<T>> {
        (0..self.vectors.rows()).map(|r| self.vectors[(r, k)]).collect()
    }

    /// Rebuilds `V f(Lambda) V^dagger`.
    pub fn reconstruct_with(&self, f: impl Fn(T) -> T) -> ComplexMatrix<T> {
        let n = self.values.len();
        let mut out = ComplexMatrix::zeros(n, n);
        for (k, &lam) in self.values.iter().enumerate() {
            let w = f(lam);
            if w == T::zero() {
                continue;
            }
            for r in 0..n {
                let vr = self.vectors[(r, k)].scale(w);
                for c in 0..n {
                    out[(r, c)] = out[(r, c)] + vr * self.vectors[(c, k)].conj();
                }
            }
        }
        out
    }
}

/// Cyclic complex Jacobi diagonalisation of a Hermitian matrix.
///
/// Input asymmetry beyond `T::tight_tol()` relative to the matrix scale is
/// rejected; smaller defects are removed by symmetrising first.
pub fn hermitian_eigen<T: Real>(a: &ComplexMatrix<T>) -> Result<HermitianEigen<T>> {
    if !a.is_square() {
        return Err(Error::InvalidInput(format!("eigen of non-square {}x{} matrix", a.rows(), a.cols())));
    }
    let n = a.rows();
    let scale = a.max_abs().max(T::one());
    let defect = a.hermitian_defect();
    if defect > T::tight_tol() * scale {
        return Err(Error::NotHermitian(defect.to_f64_lossy()));
    }
    let mut m = a.hermitian_part();
    let mut v = ComplexMatrix::identity(n);
    let off_norm = |m: &ComplexMatrix<T>| {
        let mut s = T::zero();
        for r in 0..n {
            for c in 0..n {
                if r != c {
                    s = s + m[(r, c)].norm_sqr();
                }
            }
        }
        s.sqrt()
    };
    let target = T::epsilon() * m.frobenius_norm().max(T::min_positive_value());
    for _sweep in 0..100 {
        if off_norm(&m) <= target {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = m[(p, q)];
                let b = apq.norm();
                if b <= T::min_positive_value() {
                    continue;
                }
                // Phase that makes the (p,q) entry real and positive.
                let phase = apq / creal(b);
                let app = m[(p, p)].re;
                let aqq = m[(q, q)].re;
                let tau = (aqq - app) / (T::lit(2.0) * b);
                let t = if tau >= T::zero() {
                    T::one() / (tau + (T::one() + tau * tau).sqrt())
                } else {
                    -T::one() / (-tau + (T::one() + tau * tau).sqrt())
                };
                let c = T::one() / (T::one() + t * t).sqrt();
                let s = t * c;
                // U acts on columns p,q: U = [[c, s], [-s e^{-i phi}, c e^{-i phi}]].
                let u_pp = creal(c);
                let u_pq = creal(s);
                let u_qp = phase.conj().scale(-s);
                let u_qq = phase.conj().scale(c);
                // A <- A U
                for r in 0..n {
                    let arp = m[(r, p)];
                    let arq = m[(r, q)];
                    m[(r, p)] = arp * u_pp + arq * u_qp;
                    m[(r, q)] = arp * u_pq + arq * u_qq;
                }
                // A <- U^dagger A
                for col in 0..n {
                    let apc = m[(p, col)];
                    let aqc = m[(q, col)];
                    m[(p, col)] = u_pp.conj() * apc + u_qp.conj() * aqc;
                    m[(q, col)] = u_pq.conj() * apc + u_qq.conj() * aqc;
                }
                m[(p, q)] = czero();
                m[(q, p)] = czero();
                m[(p, p)] = creal(m[(p, p)].re);
                m[(q, q)] = creal(m[(q, q)].re);
                for r in 0..n {
                    let vrp = v[(r, p)];
                    let vrq = v[(r, q)];
                    v[(r, p)] = vrp * u_pp + vrq * u_qp;
                    v[(r, q)] = vrp * u_pq + vrq * u_qq;
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    // Stable sort keeps the original index order for degenerate eigenvalues.
    order.sort_by(|&i, &j| m[(j, j)].re.partial_cmp(&m[(i, i)].re).unwrap_or(std::cmp::Ordering::Equal));
    let values = order.iter().map(|&i| m[(i, i)].re).collect();
    let vectors = ComplexMatrix::from_fn(n, n, |r, k| v[(r, order[k])]);
    Ok(HermitianEigen { values, vectors })
}

/// Principal square root of a positive semidefinite Hermitian matrix
/// (negative eigenvalues are clipped to zero).
pub fn psd_sqrt<T: Real>(a: &ComplexMatrix<T>) -> Result<ComplexMatrix<T>> {
    Ok(hermitian_eigen(a)?.reconstruct_with(|l| l.max(T::zero()).sqrt()))
}

/// Unitary-normalised forward DFT, `X_k = N^{-1/2} sum_n x_n e^{-2 pi i k n / N}`.
pub fn dft<T: Real>(x: &[Complex<T>]) -> Vec<Complex<T>> {
    transform(x, false)
}

/// Inverse of [`dft`].
pub fn idft<T: Real>(x: &[Complex<T>]) -> Vec<Complex<T>> {
    transform(x, true)
}

fn transform<T: Real>(x: &[Complex<T>], inverse: bool) -> Vec<Complex<T>> {
    let n = x.len();
    if n == 0 {
        return Vec::new();
    }
    let mut planner = FftPlanner::<T>::new();
    let fft = if inverse { planner.plan_fft_inverse(n) } else { planner.plan_fft_forward(n) };
    let mut buf = x.to_vec();
    fft.process(&mut buf);
    let norm = T::one() / T::from_usize_lossy(n).sqrt();
    for z in &mut buf {
        *z = z.scale(norm);
    }
    buf
}

/// Angular frequency of DFT bin `k` for `n` samples spaced `dt` apart,
/// mapped to the symmetric range `[-pi/dt, pi/dt)`.
pub fn bin_frequency<T: Real>(k: usize, n: usize, dt: T) -> T {
    let two_pi = T::PI() + T::PI();
    let kk = if 2 * k >= n { k as i64 - n as i64 } else { k as i64 };
    two_pi * T::lit(kk as f64) / (T::from_usize_lossy(n) * dt)
}

/// Solves the real least-squares problem `min |A x - b|` via the normal
/// equations and a Hermitian eigen-decomposition.
///
/// `design` is row-major with `cols` columns. Fails when the smallest
/// eigenvalue of `A^T A` is below `rcond` times the largest.
pub fn least_squares<T: Real>(design: &[T], cols: usize, rhs: &[T], rcond: T) -> Result<Vec<T>> {
    let rows = rhs.len();
    if design.len() != rows * cols {
        return Err(Error::LengthMismatch(design.len(), rows * cols));
    }
    let mut ata = ComplexMatrix::zeros(cols, cols);
    let mut atb = vec![T::zero(); cols];
    for r in 0..rows {
        let row = &design[r * cols..(r + 1) * cols];
        for i in 0..cols {
            atb[i] = atb[i] + row[i] * rhs[r];
            for j in 0..cols {
                ata[(i, j)] = ata[(i, j)] + creal(row[i] * row[j]);
            }
        }
    }
    let eig = hermitian_eigen(&ata)?;
    let lmax = eig.values.first().copied().unwrap_or(T::zero());
    let lmin = eig.values.last().copied().unwrap_or(T::zero());
    if lmax <= T::zero() || lmin <= rcond * lmax {
        let cond = if lmin > T::zero() { (lmax / lmin).to_f64_lossy() } else { f64::INFINITY };
        return Err(Error::RankDeficient(cond));
    }
    let mut x = vec![T::zero(); cols];
    for (k, &lam) in eig.values.iter().enumerate() {
        let proj: T = (0..cols).map(|i| eig.vectors[(i, k)].re * atb[i]).sum();
        for (i, xi) in x.iter_mut().enumerate() {
            *xi = *xi + eig.vectors[(i, k)].re * proj / lam;
        }
    }
    Ok(x)
}
