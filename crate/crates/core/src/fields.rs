//! Qubit-state-conditioned classical fields of the cascaded two-chip system.
//!
//! The strong-port drive reflects off chip 1, crosses the lossy link, and
//! reflects off chip 2; the weak-port drive enters chip 2 only. For qubit
//! bits `(b1, b2)` the fields are `alpha[b1]`, `z[b1]` (chip-1 reflection),
//! `beta[b1][b2]` and `y[b1][b2]` (monitored output). Joint states are
//! indexed `s = 2 * b1 + b2`, i.e. `|00>, |01>, |10>, |11>`.

use crate::error::{Error, Result};
use crate::linalg::{bin_frequency, dft, idft};
use crate::num::{cis, cplx, creal, czero, Complex, Real};
use crate::params::{trapezoid, ChipParams, ComplexEnvelope, PulseSequence, SystemParams, TimeGrid};

/// Zero-padding factor applied before transforming.
pub const FOURIER_PADDING: usize = 4;

/// Splits a joint state index into `(b1, b2)`.
#[inline]
pub fn state_bits(s: usize) -> (usize, usize) {
    (s >> 1, s & 1)
}

/// `H(omega) = sqrt(kappa_s) / (i omega + i (delta +- chi) + kappa_bar / 2)`.
pub fn transfer_into<T: Real>(omega: T, chip: &ChipParams<T>, bit: usize) -> Complex<T> {
    let denom = cplx(chip.kappa_bar() * T::lit(0.5), omega + chip.detuning(bit));
    creal(chip.kappa_s.sqrt()) / denom
}

/// Reflection transfer `sqrt(kappa_s) H - 1`.
pub fn transfer_reflected<T: Real>(omega: T, chip: &ChipParams<T>, bit: usize) -> Complex<T> {
    transfer_into(omega, chip, bit).scale(chip.kappa_s.sqrt()) - creal(T::one())
}

/// The twelve state-conditioned field envelopes on one grid.
#[derive(Clone, Debug, PartialEq)]
pub struct FieldSolution<T> {
    pub grid: TimeGrid<T>,
    pub alpha: [ComplexEnvelope<T>; 2],
    pub z: [ComplexEnvelope<T>; 2],
    pub beta: [[ComplexEnvelope<T>; 2]; 2],
    pub y: [[ComplexEnvelope<T>; 2]; 2],
}

impl<T: Real> FieldSolution<T> {
    fn from_series(grid: TimeGrid<T>, series: [Vec<Complex<T>>; 12]) -> Self {
        let [a0, a1, z0, z1, b00, b01, b10, b11, y00, y01, y10, y11] = series;
        let env = |v: Vec<Complex<T>>| ComplexEnvelope { grid, samples: v };
        Self {
            grid,
            alpha: [env(a0), env(a1)],
            z: [env(z0), env(z1)],
            beta: [[env(b00), env(b01)], [env(b10), env(b11)]],
            y: [[env(y00), env(y01)], [env(y10), env(y11)]],
        }
    }

    /// Output field for joint state `s`.
    pub fn y_state(&self, s: usize) -> &ComplexEnvelope<T> {
        let (b1, b2) = state_bits(s);
        &self.y[b1][b2]
    }

    pub fn beta_state(&self, s: usize) -> &ComplexEnvelope<T> {
        let (b1, b2) = state_bits(s);
        &self.beta[b1][b2]
    }

    fn envelopes(&self) -> impl Iterator<Item = &ComplexEnvelope<T>> {
        self.alpha.iter().chain(&self.z).chain(self.beta.iter().flatten()).chain(self.y.iter().flatten())
    }

    /// Largest modulus over all envelopes.
    pub fn peak(&self) -> T {
        self.envelopes().fold(T::zero(), |m, e| m.max(e.peak()))
    }

    /// Largest pointwise difference to another solution, relative to the
    /// peak of each envelope pair (absolute where both are zero).
    pub fn max_relative_difference(&self, other: &Self) -> T {
        self.envelopes()
            .zip(other.envelopes())
            .map(|(a, b)| {
                let scale = a.peak().max(b.peak());
                let diff = a.samples.iter().zip(&b.samples).fold(T::zero(), |m, (x, y)| m.max((*x - *y).norm()));
                if scale > T::zero() {
                    diff / scale
                } else {
                    diff
                }
            })
            .fold(T::zero(), T::max)
    }

    /// Restricts every envelope to the first `n` samples.
    pub fn truncated(&self, n: usize) -> Self {
        let t = |e: &ComplexEnvelope<T>| e.truncated(n);
        Self {
            grid: self.grid.truncated(n),
            alpha: [t(&self.alpha[0]), t(&self.alpha[1])],
            z: [t(&self.z[0]), t(&self.z[1])],
            beta: [[t(&self.beta[0][0]), t(&self.beta[0][1])], [t(&self.beta[1][0]), t(&self.beta[1][1])]],
            y: [[t(&self.y[0][0]), t(&self.y[0][1])], [t(&self.y[1][0]), t(&self.y[1][1])]],
        }
    }
}

/// Solves the cascaded linear system by multiplying transfer functions in
/// the (zero-padded) Fourier domain.
pub fn solve_fields_fourier<T: Real>(pulses: &PulseSequence<T>, p: &SystemParams<T>) -> Result<FieldSolution<T>> {
    // Also rejects drives that do not vanish at the grid edges.
    pulses.validate()?;
    let grid = pulses.grid();
    let n = grid.n_samples;
    let n_pad = n * FOURIER_PADDING;
    let pad = |env: &ComplexEnvelope<T>| {
        let mut v = env.samples.clone();
        v.resize(n_pad, czero());
        dft(&v)
    };
    let es = pad(&pulses.eps_s);
    let ew = pad(&pulses.eps_w);
    let link = cis(p.phi).scale(p.eta_l.sqrt());
    let (c1, c2) = (&p.chip1, &p.chip2);
    let weak_ratio = (c2.kappa_w / c2.kappa_s).sqrt();
    let weak_gain = c2.kappa_w.sqrt();

    let mut spectra: [Vec<Complex<T>>; 12] = std::array::from_fn(|_| vec![czero(); n_pad]);
    for k in 0..n_pad {
        let omega = bin_frequency(k, n_pad, grid.dt);
        let h1 = [transfer_into(omega, c1, 0), transfer_into(omega, c1, 1)];
        let h1r = [transfer_reflected(omega, c1, 0), transfer_reflected(omega, c1, 1)];
        let h2 = [transfer_into(omega, c2, 0), transfer_into(omega, c2, 1)];
        let h2r = [transfer_reflected(omega, c2, 0), transfer_reflected(omega, c2, 1)];
        for b1 in 0..2 {
            spectra[b1][k] = h1[b1] * es[k];
            spectra[2 + b1][k] = h1r[b1] * es[k];
            for b2 in 0..2 {
                let s = 2 * b1 + b2;
                spectra[4 + s][k] = link * h2[b2] * h1r[b1] * es[k] + h2[b2].scale(weak_ratio) * ew[k];
                spectra[8 + s][k] = link * h1r[b1] * h2r[b2] * es[k] + h2[b2].scale(weak_gain) * ew[k];
            }
        }
    }
    let series = spectra.map(|spec| {
        let mut v = idft(&spec);
        v.truncate(n);
        v
    });
    Ok(FieldSolution::from_series(grid, series))
}

/// Four-point Lagrange value halfway between samples `k` and `k + 1`.
/// Near the ends the stencil shifts inward rather than padding.
#[inline]
fn midpoint<T: Real>(v: &[Complex<T>], k: usize) -> Complex<T> {
    let n = v.len();
    if n < 4 {
        return (v[k] + v[(k + 1).min(n - 1)]).scale(T::lit(0.5));
    }
    let w = |a: f64, b: f64, c: f64, d: f64, i: usize| {
        v[i].scale(T::lit(a)) + v[i + 1].scale(T::lit(b)) + v[i + 2].scale(T::lit(c)) + v[i + 3].scale(T::lit(d))
    };
    if k == 0 {
        w(5.0 / 16.0, 15.0 / 16.0, -5.0 / 16.0, 1.0 / 16.0, 0)
    } else if k + 2 >= n {
        w(1.0 / 16.0, -5.0 / 16.0, 15.0 / 16.0, 5.0 / 16.0, n - 4)
    } else {
        w(-1.0 / 16.0, 9.0 / 16.0, 9.0 / 16.0, -1.0 / 16.0, k - 1)
    }
}

/// Integrates the coupled field equations with classical fourth-order
/// Runge-Kutta from vacuum; the independent check on
/// [`solve_fields_fourier`].
pub fn solve_fields_ode<T: Real>(pulses: &PulseSequence<T>, p: &SystemParams<T>) -> Result<FieldSolution<T>> {
    if pulses.eps_s.len() != pulses.eps_w.len() {
        return Err(Error::LengthMismatch(pulses.eps_s.len(), pulses.eps_w.len()));
    }
    let grid = pulses.grid();
    let n = grid.n_samples;
    let (c1, c2) = (&p.chip1, &p.chip2);
    let half = T::lit(0.5);
    let rate1 = [0, 1].map(|b| cplx(-c1.kappa_bar() * half, -c1.detuning(b)));
    let rate2 = [0, 1].map(|b| cplx(-c2.kappa_bar() * half, -c2.detuning(b)));
    let sk1 = c1.kappa_s.sqrt();
    let sk2 = c2.kappa_s.sqrt();
    let link = cis(p.phi).scale(p.eta_l.sqrt());
    let weak = c2.kappa_w.sqrt();

    // State: alpha[0..2], beta[2..6] indexed 2 + 2*b1 + b2.
    let deriv = |x: &[Complex<T>; 6], es: Complex<T>, ew: Complex<T>| {
        let mut d = [czero(); 6];
        for b1 in 0..2 {
            d[b1] = rate1[b1] * x[b1] + es.scale(sk1);
            let z = x[b1].scale(sk1) - es;
            for b2 in 0..2 {
                let i = 2 + 2 * b1 + b2;
                d[i] = rate2[b2] * x[i] + link * z.scale(sk2) + ew.scale(weak);
            }
        }
        d
    };
    let axpy = |x: &[Complex<T>; 6], k: &[Complex<T>; 6], h: T| std::array::from_fn::<_, 6, _>(|i| x[i] + k[i].scale(h));

    let es = &pulses.eps_s.samples;
    let ew = &pulses.eps_w.samples;
    let dt = grid.dt;
    let mut state = [czero(); 6];
    let mut hist = Vec::with_capacity(n);
    hist.push(state);
    for k in 0..n - 1 {
        let (es0, ew0) = (es[k], ew[k]);
        let (esm, ewm) = (midpoint(es, k), midpoint(ew, k));
        let (es1, ew1) = (es[k + 1], ew[k + 1]);
        let k1 = deriv(&state, es0, ew0);
        let k2 = deriv(&axpy(&state, &k1, dt * half), esm, ewm);
        let k3 = deriv(&axpy(&state, &k2, dt * half), esm, ewm);
        let k4 = deriv(&axpy(&state, &k3, dt), es1, ew1);
        let sixth = dt / T::lit(6.0);
        for i in 0..6 {
            state[i] = state[i] + (k1[i] + (k2[i] + k3[i]).scale(T::lit(2.0)) + k4[i]).scale(sixth);
        }
        hist.push(state);
    }

    let mut series: [Vec<Complex<T>>; 12] = std::array::from_fn(|_| Vec::with_capacity(n));
    for (k, x) in hist.iter().enumerate() {
        for b1 in 0..2 {
            let z = x[b1].scale(sk1) - es[k];
            series[b1].push(x[b1]);
            series[2 + b1].push(z);
            for b2 in 0..2 {
                let s = 2 * b1 + b2;
                let beta = x[2 + s];
                series[4 + s].push(beta);
                series[8 + s].push(-(link * z) + beta.scale(sk2));
            }
        }
    }
    Ok(FieldSolution::from_series(grid, series))
}

/// Coherence-decay exponent `-2 chi integral Im[alpha0 conj(alpha1)] dt`
/// accumulated by a qubit whose resonator follows `alpha0` / `alpha1` for
/// bit 0 / 1. Non-negative for a physical measurement.
pub fn dephasing_integral<T: Real>(alpha0: &ComplexEnvelope<T>, alpha1: &ComplexEnvelope<T>, chi: T) -> Result<T> {
    if alpha0.len() != alpha1.len() {
        return Err(Error::LengthMismatch(alpha0.len(), alpha1.len()));
    }
    let integrand = alpha0.samples.iter().zip(&alpha1.samples).map(|(a, b)| (*a * b.conj()).im);
    Ok(-(chi + chi) * trapezoid(alpha0.grid.dt, integrand))
}

/// Pointwise `|y_a - y_b|`.
pub fn transient_difference<T: Real>(y_a: &ComplexEnvelope<T>, y_b: &ComplexEnvelope<T>) -> Result<Vec<T>> {
    if y_a.len() != y_b.len() {
        return Err(Error::LengthMismatch(y_a.len(), y_b.len()));
    }
    Ok(y_a.samples.iter().zip(&y_b.samples).map(|(a, b)| (*a - *b).norm()).collect())
}

/// Integrated output power per joint state and peak intracavity photon numbers.
#[derive(Clone, Debug, PartialEq)]
pub struct OutputPower<T> {
    /// `integral |y_s|^2 dt` (photons) indexed by joint state.
    pub per_state: [T; 4],
    pub max_photons_chip1: T,
    pub max_photons_chip2: T,
}

pub fn integrated_output_power<T: Real>(sol: &FieldSolution<T>) -> OutputPower<T> {
    let per_state = std::array::from_fn(|s| sol.y_state(s).energy());
    let peak_sq = |e: &ComplexEnvelope<T>| e.samples.iter().fold(T::zero(), |m, z| m.max(z.norm_sqr()));
    let max_photons_chip1 = sol.alpha.iter().map(peak_sq).fold(T::zero(), T::max);
    let max_photons_chip2 = sol.beta.iter().flatten().map(peak_sq).fold(T::zero(), T::max);
    OutputPower { per_state, max_photons_chip1, max_photons_chip2 }
}
