//! Physical parameters, the sampling grid, and drive envelopes.
//!
//! All rates (`kappa_*`, `chi`, `delta`) are angular (rad/s). Drive
//! envelopes carry units of sqrt(photons/s), so a constant drive `eps` on a
//! chip holds `|eps|^2 kappa_s / ((delta +- chi)^2 + kappa_bar^2 / 4)`
//! photons in steady state.

use crate::error::{Error, Result};
use crate::num::{creal, czero, Complex, Real};

/// Largest `|edge sample| / peak` still treated as an undriven grid edge.
pub const EDGE_TOLERANCE: f64 = 1.0e-3;

/// Largest `dt * rate` accepted for any system rate.
pub const MAX_DT_RATE: f64 = 0.05;

/// Maps a qubit bit to the sign of its dispersive shift (bit 0 -> +1).
#[inline]
pub fn bit_sign<T: Real>(bit: usize) -> T {
    if bit == 0 {
        T::one()
    } else {
        -T::one()
    }
}

/// One qubit-resonator chip.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ChipParams<T> {
    /// Strongly coupled (reflection) port.
    pub kappa_s: T,
    /// Weakly coupled (compensation) port.
    pub kappa_w: T,
    /// Intrinsic loss.
    pub kappa_i: T,
    /// Dispersive shift; may be negative.
    pub chi: T,
    /// Resonator detuning from the drive.
    pub delta: T,
}

impl<T: Real> ChipParams<T> {
    pub fn kappa_bar(&self) -> T {
        self.kappa_s + self.kappa_w + self.kappa_i
    }

    /// `delta +- chi` for the given qubit bit.
    pub fn detuning(&self, bit: usize) -> T {
        self.delta + bit_sign::<T>(bit) * self.chi
    }

    /// Fastest rate relevant for time stepping.
    pub fn max_rate(&self) -> T {
        self.kappa_bar().max(self.detuning(0).abs()).max(self.detuning(1).abs())
    }

    pub fn validate(&self, name: &str) -> Result<()> {
        let finite = [self.kappa_s, self.kappa_w, self.kappa_i, self.chi, self.delta].iter().all(|v| v.is_finite());
        if !finite {
            return Err(Error::InvalidParameter(format!("{name}: non-finite rate")));
        }
        if self.kappa_s <= T::zero() {
            return Err(Error::InvalidParameter(format!("{name}.kappa_s must be > 0")));
        }
        if self.kappa_w < T::zero() {
            return Err(Error::InvalidParameter(format!("{name}.kappa_w must be >= 0")));
        }
        if self.kappa_i < T::zero() {
            return Err(Error::InvalidParameter(format!("{name}.kappa_i must be >= 0")));
        }
        Ok(())
    }
}

/// Both chips plus link, detection and decoherence parameters.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SystemParams<T> {
    pub chip1: ChipParams<T>,
    pub chip2: ChipParams<T>,
    /// Inter-chip power transmission (1 = lossless).
    pub eta_l: T,
    /// Inter-chip phase (rad).
    pub phi: T,
    /// Measurement quantum efficiency.
    pub eta_m: T,
    /// Homodyne quadrature angle (rad).
    pub theta: T,
    /// Relaxation rates of qubit 1 and 2 (1/s).
    pub gamma1: [T; 2],
    /// Pure dephasing rates of qubit 1 and 2 (1/s), entering as `D[sigma_z]`.
    pub gamma_phi: [T; 2],
    /// Maps a dimensionless drive amplitude onto sqrt(photons/s).
    pub amp_scale: T,
}

impl<T: Real> SystemParams<T> {
    pub fn chip(&self, index: usize) -> &ChipParams<T> {
        if index == 0 {
            &self.chip1
        } else {
            &self.chip2
        }
    }

    pub fn max_rate(&self) -> T {
        self.chip1.max_rate().max(self.chip2.max_rate())
    }

    pub fn validate(&self) -> Result<()> {
        self.chip1.validate("chip1")?;
        self.chip2.validate("chip2")?;
        let unit = |v: T| v >= T::zero() && v <= T::one();
        if !unit(self.eta_l) {
            return Err(Error::InvalidParameter("eta_l outside [0,1]".into()));
        }
        if !unit(self.eta_m) {
            return Err(Error::InvalidParameter("eta_m outside [0,1]".into()));
        }
        if !self.phi.is_finite() || !self.theta.is_finite() {
            return Err(Error::InvalidParameter("phi and theta must be finite".into()));
        }
        for (i, (g1, gp)) in self.gamma1.iter().zip(&self.gamma_phi).enumerate() {
            if !(*g1 >= T::zero() && g1.is_finite()) {
                return Err(Error::InvalidParameter(format!("gamma1 of qubit {} must be >= 0", i + 1)));
            }
            if !(*gp >= T::zero() && gp.is_finite()) {
                return Err(Error::InvalidParameter(format!("gamma_phi of qubit {} must be >= 0", i + 1)));
            }
        }
        if !(self.amp_scale > T::zero() && self.amp_scale.is_finite()) {
            return Err(Error::InvalidParameter("amp_scale must be > 0".into()));
        }
        Ok(())
    }

    /// Parameters measured in the device table: kappa/2pi = 3.01 and 4.53 MHz,
    /// chi/2pi = -335 kHz, driven at the symmetric point. The port split, loss,
    /// link phase and coherence rates are not tabulated and are chosen here.
    pub fn device_defaults() -> Self {
        let mhz = |f: f64| T::lit(2.0 * std::f64::consts::PI * 1.0e6 * f);
        Self {
            chip1: ChipParams {
                kappa_s: mhz(2.96),
                kappa_w: mhz(0.02),
                kappa_i: mhz(0.03),
                chi: mhz(-0.335),
                delta: T::zero(),
            },
            chip2: ChipParams {
                kappa_s: mhz(4.43),
                kappa_w: mhz(0.06),
                kappa_i: mhz(0.04),
                chi: mhz(-0.335),
                delta: T::zero(),
            },
            eta_l: T::lit(0.882),
            phi: T::zero(),
            eta_m: T::lit(0.5),
            theta: T::zero(),
            gamma1: [T::lit(1.0 / 9.0e-6), T::lit(1.0 / 12.0e-6)],
            gamma_phi: [T::lit(1.0 / 60.0e-6), T::lit(1.0 / 60.0e-6)],
            amp_scale: T::lit(1.0e4),
        }
    }
}

/// Uniform sampling grid `t_k = k dt`, `k = 0..n_samples`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TimeGrid<T> {
    pub dt: T,
    pub n_samples: usize,
}

impl<T: Real> TimeGrid<T> {
    pub fn new(dt: T, n_samples: usize) -> Result<Self> {
        if !(dt > T::zero() && dt.is_finite()) {
            return Err(Error::InvalidParameter("dt must be > 0".into()));
        }
        if n_samples < 2 {
            return Err(Error::InvalidParameter("grid needs at least 2 samples".into()));
        }
        Ok(Self { dt, n_samples })
    }

    /// Grid covering `[0, duration]` inclusive.
    pub fn spanning(dt: T, duration: T) -> Result<Self> {
        let n = (duration / dt).round().to_usize().unwrap_or(0) + 1;
        Self::new(dt, n)
    }

    /// Time between first and last sample.
    pub fn duration(&self) -> T {
        self.dt * T::from_usize_lossy(self.n_samples - 1)
    }

    pub fn time(&self, k: usize) -> T {
        self.dt * T::from_usize_lossy(k)
    }

    pub fn times(&self) -> impl Iterator<Item = T> + '_ {
        (0..self.n_samples).map(|k| self.time(k))
    }

    /// Fails unless `dt * max_rate < 0.05`.
    pub fn check_resolves(&self, params: &SystemParams<T>) -> Result<()> {
        let product = (self.dt * params.max_rate()).to_f64_lossy();
        if product >= MAX_DT_RATE {
            return Err(Error::GridTooCoarse { product });
        }
        Ok(())
    }

    /// First `n` samples of this grid.
    pub fn truncated(&self, n: usize) -> Self {
        Self { dt: self.dt, n_samples: n.min(self.n_samples).max(2) }
    }
}

/// Complex time series sampled on a [`TimeGrid`].
#[derive(Clone, Debug, PartialEq)]
pub struct ComplexEnvelope<T> {
    pub grid: TimeGrid<T>,
    pub samples: Vec<Complex<T>>,
}

impl<T: Real> ComplexEnvelope<T> {
    pub fn zeros(grid: TimeGrid<T>) -> Self {
        Self { grid, samples: vec![czero(); grid.n_samples] }
    }

    pub fn from_samples(grid: TimeGrid<T>, samples: Vec<Complex<T>>) -> Result<Self> {
        if samples.len() != grid.n_samples {
            return Err(Error::LengthMismatch(samples.len(), grid.n_samples));
        }
        Ok(Self { grid, samples })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn peak(&self) -> T {
        self.samples.iter().fold(T::zero(), |m, z| m.max(z.norm()))
    }

    /// `|edge| / peak` over the first and last sample; zero for an all-zero envelope.
    pub fn edge_ratio(&self) -> T {
        let peak = self.peak();
        if peak == T::zero() {
            return T::zero();
        }
        let first = self.samples.first().map_or(T::zero(), |z| z.norm());
        let last = self.samples.last().map_or(T::zero(), |z| z.norm());
        first.max(last) / peak
    }

    pub fn scaled(&self, g: Complex<T>) -> Self {
        Self { grid: self.grid, samples: self.samples.iter().map(|z| *z * g).collect() }
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        if self.len() != other.len() {
            return Err(Error::LengthMismatch(self.len(), other.len()));
        }
        Ok(Self { grid: self.grid, samples: self.samples.iter().zip(&other.samples).map(|(a, b)| *a + *b).collect() })
    }

    /// Trapezoidal `integral |x|^2 dt`.
    pub fn energy(&self) -> T {
        trapezoid(self.grid.dt, self.samples.iter().map(|z| z.norm_sqr()))
    }

    pub fn truncated(&self, n: usize) -> Self {
        let grid = self.grid.truncated(n);
        Self { grid, samples: self.samples[..grid.n_samples].to_vec() }
    }
}

/// Trapezoidal rule over uniformly spaced samples.
pub fn trapezoid<T: Real>(dt: T, values: impl IntoIterator<Item = T>) -> T {
    let mut it = values.into_iter();
    let Some(first) = it.next() else { return T::zero() };
    let mut sum = T::zero();
    let mut last = first;
    let mut count = 1usize;
    for v in it {
        sum = sum + v;
        last = v;
        count += 1;
    }
    if count == 1 {
        return T::zero();
    }
    // `sum` holds every sample after the first.
    (sum - last * T::lit(0.5) + first * T::lit(0.5)) * dt
}

/// Shape of a smoothed square pulse.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PulseShape<T> {
    pub start: T,
    pub rise: T,
    pub plateau: T,
}

impl<T: Real> PulseShape<T> {
    pub fn total(&self) -> T {
        self.plateau + self.rise + self.rise
    }

    pub fn end(&self) -> T {
        self.start + self.total()
    }

    /// Unit-amplitude envelope value at time `t`.
    pub fn value(&self, t: T) -> T {
        let u = t - self.start;
        if u < T::zero() {
            return T::zero();
        }
        if self.rise > T::zero() && u < self.rise {
            return half_cosine(u / self.rise);
        }
        let u = u - self.rise;
        if u < self.plateau {
            return T::one();
        }
        let u = u - self.plateau;
        if self.rise > T::zero() && u < self.rise {
            return half_cosine(T::one() - u / self.rise);
        }
        T::zero()
    }
}

fn half_cosine<T: Real>(x: T) -> T {
    T::lit(0.5) * (T::one() - (T::PI() * x).cos())
}

/// Square pulse of height `amplitude` whose edges rise and fall as half
/// cosines over `rise`, starting at `start`.
pub fn smoothed_square<T: Real>(
    amplitude: Complex<T>,
    start: T,
    plateau: T,
    rise: T,
    grid: TimeGrid<T>,
) -> Result<ComplexEnvelope<T>> {
    if start < T::zero() || plateau < T::zero() || rise < T::zero() {
        return Err(Error::InvalidParameter("pulse start, plateau and rise must be >= 0".into()));
    }
    let shape = PulseShape { start, rise, plateau };
    // Small slack so a pulse that ends exactly on the last sample is accepted.
    let slack = grid.dt * T::lit(1.0e-6);
    if shape.end() > grid.duration() + slack {
        return Err(Error::PulseTooLong {
            needed_s: shape.end().to_f64_lossy(),
            available_s: grid.duration().to_f64_lossy(),
        });
    }
    let samples = grid.times().map(|t| amplitude.scale(shape.value(t))).collect();
    Ok(ComplexEnvelope { grid, samples })
}

/// Strong- and weak-port drives on a shared grid.
#[derive(Clone, Debug, PartialEq)]
pub struct PulseSequence<T> {
    pub eps_s: ComplexEnvelope<T>,
    pub eps_w: ComplexEnvelope<T>,
    /// Shape of the strong-port pulse, when it was synthesised as a smoothed square.
    pub shape: Option<PulseShape<T>>,
}

impl<T: Real> PulseSequence<T> {
    pub fn new(eps_s: ComplexEnvelope<T>, eps_w: ComplexEnvelope<T>) -> Result<Self> {
        let seq = Self { eps_s, eps_w, shape: None };
        seq.validate()?;
        Ok(seq)
    }

    /// Strong-port pulse only.
    pub fn strong_only(eps_s: ComplexEnvelope<T>) -> Result<Self> {
        let eps_w = ComplexEnvelope::zeros(eps_s.grid);
        Self::new(eps_s, eps_w)
    }

    /// Smoothed square on the strong port with drive `amp_scale * amplitude`.
    pub fn smoothed(amplitude: T, amp_scale: T, shape: PulseShape<T>, grid: TimeGrid<T>) -> Result<Self> {
        let eps_s = smoothed_square(creal(amplitude * amp_scale), shape.start, shape.plateau, shape.rise, grid)?;
        let mut seq = Self::strong_only(eps_s)?;
        seq.shape = Some(shape);
        Ok(seq)
    }

    pub fn grid(&self) -> TimeGrid<T> {
        self.eps_s.grid
    }

    pub fn with_weak(&self, eps_w: ComplexEnvelope<T>) -> Result<Self> {
        let seq = Self { eps_s: self.eps_s.clone(), eps_w, shape: self.shape };
        seq.validate()?;
        Ok(seq)
    }

    pub fn validate(&self) -> Result<()> {
        if self.eps_s.grid != self.eps_w.grid || self.eps_s.len() != self.eps_w.len() {
            return Err(Error::LengthMismatch(self.eps_s.len(), self.eps_w.len()));
        }
        for env in [&self.eps_s, &self.eps_w] {
            let ratio = env.edge_ratio().to_f64_lossy();
            if ratio > EDGE_TOLERANCE {
                return Err(Error::EdgeNotVanishing { ratio });
            }
        }
        Ok(())
    }

    /// Sum of two sequences on the same grid.
    pub fn superpose(&self, other: &Self) -> Result<Self> {
        Self::new(self.eps_s.add(&other.eps_s)?, self.eps_w.add(&other.eps_w)?)
    }

    pub fn scaled(&self, g: Complex<T>) -> Self {
        Self { eps_s: self.eps_s.scaled(g), eps_w: self.eps_w.scaled(g), shape: self.shape }
    }
}

/// Timing of one entangling run: the measurement pulse, the window over
/// which the qubits are tracked (pulse plus ring-down), and a longer field
/// grid so the Fourier solution does not wrap around.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Protocol<T> {
    pub dt: T,
    pub shape: PulseShape<T>,
    /// Pulse plus ring-down.
    pub window: T,
    /// Span of the grid the fields are solved on; at least `window`.
    pub field_span: T,
}

impl<T: Real> Protocol<T> {
    /// 300 ns smoothed square (20 ns edges) followed by ring-down to 1 us,
    /// sampled at 0.5 ns on a 1.5 us field grid.
    pub fn standard() -> Self {
        Self {
            dt: T::lit(0.5e-9),
            shape: PulseShape { start: T::lit(10.0e-9), rise: T::lit(20.0e-9), plateau: T::lit(260.0e-9) },
            window: T::lit(1.0e-6),
            field_span: T::lit(1.5e-6),
        }
    }

    pub fn field_grid(&self) -> Result<TimeGrid<T>> {
        TimeGrid::spanning(self.dt, self.field_span)
    }

    pub fn window_grid(&self) -> Result<TimeGrid<T>> {
        TimeGrid::spanning(self.dt, self.window)
    }

    /// Ring-down time after the pulse ends.
    pub fn ring_down(&self) -> T {
        self.window - self.shape.end()
    }

    pub fn validate(&self, p: &SystemParams<T>) -> Result<()> {
        if self.field_span < self.window {
            return Err(Error::InvalidParameter("field grid shorter than protocol window".into()));
        }
        if self.shape.end() > self.window {
            return Err(Error::PulseTooLong {
                needed_s: self.shape.end().to_f64_lossy(),
                available_s: self.window.to_f64_lossy(),
            });
        }
        let slowest = p.chip1.kappa_bar().min(p.chip2.kappa_bar());
        if self.ring_down() * slowest < T::lit(5.0) {
            return Err(Error::InvalidParameter("ring-down shorter than 5 / kappa_bar".into()));
        }
        self.field_grid()?.check_resolves(p)
    }

    /// Strong-port pulse of dimensionless amplitude `amplitude` on the field grid.
    pub fn strong_pulses(&self, amplitude: T, amp_scale: T) -> Result<PulseSequence<T>> {
        PulseSequence::smoothed(amplitude, amp_scale, self.shape, self.field_grid()?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn grid() -> TimeGrid<f64> {
        TimeGrid::new(0.5e-9, 1001).unwrap()
    }

    #[test]
    fn zero_amplitude_gives_zero_envelope() {
        let env = smoothed_square(creal(0.0), 10e-9, 300e-9, 20e-9, grid()).unwrap();
        assert!(env.samples.iter().all(|z| z.norm() == 0.0));
    }

    #[test]
    fn zero_rise_is_rectangular() {
        let g = grid();
        let env = smoothed_square(creal(2.0), 10e-9, 300e-9, 0.0, g).unwrap();
        for (k, z) in env.samples.iter().enumerate() {
            let t = g.time(k);
            let inside = t >= 10e-9 - 1e-15 && t < 310e-9 - 1e-15;
            assert_eq!(z.re, if inside { 2.0 } else { 0.0 }, "sample {k}");
        }
    }

    #[test]
    fn smoothed_pulse_has_expected_support_and_continuity() {
        let g = grid();
        let env = smoothed_square(creal(1.0), 10e-9, 300e-9, 20e-9, g).unwrap();
        assert!((env.peak() - 1.0).abs() < 1e-15);
        let nonzero = env.samples.iter().filter(|z| z.norm() > 0.0).count();
        let support = nonzero as f64 * g.dt;
        assert!((support - 340e-9).abs() <= 2.0 * g.dt, "support {support}");
        // Half-cosine edges: first differences bounded by pi/(2 rise) * dt.
        let bound = std::f64::consts::PI / (2.0 * 20e-9) * g.dt * 1.0001;
        for w in env.samples.windows(2) {
            assert!((w[1] - w[0]).norm() <= bound);
        }
    }

    #[test]
    fn pulse_longer_than_grid_rejected() {
        let err = smoothed_square(creal(1.0), 0.0, 600e-9, 20e-9, grid()).unwrap_err();
        assert!(matches!(err, Error::PulseTooLong { .. }));
    }

    #[test]
    fn table_one_grid_check() {
        let p = SystemParams::<f64>::device_defaults();
        assert!(TimeGrid::new(1.0e-9, 100).unwrap().check_resolves(&p).is_ok());
        let product = 1.0e-9 * p.chip2.kappa_bar();
        assert!((product - 0.02846).abs() < 1e-4);
        assert!(matches!(TimeGrid::new(2.0e-9, 100).unwrap().check_resolves(&p), Err(Error::GridTooCoarse { .. })));
    }

    #[test]
    fn eta_out_of_range_rejected() {
        let mut p = SystemParams::<f64>::device_defaults();
        p.eta_l = 1.3;
        assert_eq!(p.validate().unwrap_err().to_string(), "eta_l outside [0,1]");
    }

    #[test]
    fn edge_drive_rejected_by_sequence() {
        let g = grid();
        let env = ComplexEnvelope::from_samples(g, vec![creal(1.0); g.n_samples]).unwrap();
        assert!(matches!(PulseSequence::strong_only(env), Err(Error::EdgeNotVanishing { .. })));
    }

    #[test]
    fn trapezoid_of_linear_ramp_is_exact() {
        let v = (0..11).map(|k| k as f64);
        assert!((trapezoid(0.1, v) - 5.0).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn smoothed_square_is_symmetric_and_monotone(
            rise in 0.0f64..40e-9,
            plateau in 0.0f64..300e-9,
        ) {
            let g = TimeGrid::new(0.5e-9, 1001).unwrap();
            let shape = PulseShape { start: 5e-9, rise, plateau };
            let center = shape.start + 0.5 * shape.total();
            let env = smoothed_square(creal(1.0), shape.start, plateau, rise, g).unwrap();
            for k in 0..200 {
                let u = 0.5 * shape.total() * k as f64 / 200.0;
                let a = shape.value(center - u);
                let b = shape.value(center + u);
                prop_assert!((a - b).abs() < 1e-9);
            }
            let mid = (center / g.dt).floor() as usize;
            let rising: Vec<f64> = env.samples[..=mid].iter().map(|z| z.re).collect();
            prop_assert!(rising.windows(2).all(|w| w[1] >= w[0]));
            let falling: Vec<f64> = env.samples[mid + 1..].iter().map(|z| z.re).collect();
            prop_assert!(falling.windows(2).all(|w| w[1] <= w[0]));
        }
    }
}
