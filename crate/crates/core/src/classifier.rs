//! Two-class Gaussian-mixture discriminant on the complex outcome plane,
//! plus post-selection and conditioned-state assembly.

use crate::error::{Error, Result};
use crate::master_eq::DensityMatrix;
use crate::num::{Complex, Real};
use crate::sme::mean_state;

/// Every `HOLDOUT_STRIDE`-th point of each class is held out for validation.
pub const HOLDOUT_STRIDE: usize = 10;

const EM_ITERATIONS: usize = 300;
const EM_TOL: f64 = 1e-10;

/// One bivariate Gaussian component.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Component {
    pub weight: f64,
    pub mean: [f64; 2],
    /// `[sxx, sxy, syy]`.
    pub cov: [f64; 3],
}

impl Component {
    fn log_density(&self, x: [f64; 2]) -> f64 {
        let [a, b, c] = self.cov;
        let det = a * c - b * b;
        let (dx, dy) = (x[0] - self.mean[0], x[1] - self.mean[1]);
        let q = (c * dx * dx - 2.0 * b * dx * dy + a * dy * dy) / det;
        -0.5 * q - 0.5 * det.ln() - std::f64::consts::LN_2 - std::f64::consts::PI.ln()
    }
}

/// Gaussian mixture for one class.
#[derive(Clone, Debug, PartialEq)]
pub struct Mixture {
    pub components: Vec<Component>,
}

impl Mixture {
    pub fn log_density(&self, x: [f64; 2]) -> f64 {
        log_sum_exp(self.components.iter().map(|c| c.weight.ln() + c.log_density(x)))
    }

    fn log_likelihood(&self, pts: &[[f64; 2]]) -> f64 {
        pts.iter().map(|x| self.log_density(*x)).sum()
    }

    /// Fits one or two components and keeps the one with the lower BIC.
    pub fn fit(pts: &[[f64; 2]]) -> Result<Self> {
        if pts.len() < 3 {
            return Err(Error::InvalidInput("need at least 3 points per class".into()));
        }
        let one = Self { components: vec![moments(pts, None)] };
        if pts.len() < 12 {
            return Ok(one);
        }
        let two = fit_two(pts);
        if two.components.len() < 2 {
            return Ok(one);
        }
        let n = pts.len() as f64;
        let bic = |m: &Self| {
            let k = (6 * m.components.len() - 1) as f64;
            k * n.ln() - 2.0 * m.log_likelihood(pts)
        };
        Ok(if bic(&two) < bic(&one) { two } else { one })
    }
}

fn log_sum_exp(v: impl Iterator<Item = f64>) -> f64 {
    let v: Vec<f64> = v.collect();
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    max + v.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}

/// Weighted mean and covariance, with a small ridge for degenerate data.
fn moments(pts: &[[f64; 2]], resp: Option<&[f64]>) -> Component {
    let w = |i: usize| resp.map_or(1.0, |r| r[i]);
    let total: f64 = (0..pts.len()).map(w).sum();
    let mut mean = [0.0; 2];
    for (i, p) in pts.iter().enumerate() {
        mean[0] += w(i) * p[0];
        mean[1] += w(i) * p[1];
    }
    mean = [mean[0] / total, mean[1] / total];
    let mut cov = [0.0; 3];
    for (i, p) in pts.iter().enumerate() {
        let (dx, dy) = (p[0] - mean[0], p[1] - mean[1]);
        cov[0] += w(i) * dx * dx;
        cov[1] += w(i) * dx * dy;
        cov[2] += w(i) * dy * dy;
    }
    cov = cov.map(|v| v / total);
    let ridge = 1e-9 * (cov[0] + cov[2]).max(1e-300);
    cov[0] += ridge;
    cov[2] += ridge;
    Component { weight: total / pts.len() as f64, mean, cov }
}

/// EM for two components, initialized by splitting along the principal
/// axis at the median projection.
fn fit_two(pts: &[[f64; 2]]) -> Mixture {
    let base = moments(pts, None);
    let [a, b, c] = base.cov;
    let angle = 0.5 * (2.0 * b).atan2(a - c);
    let axis = [angle.cos(), angle.sin()];
    let proj: Vec<f64> = pts.iter().map(|p| (p[0] - base.mean[0]) * axis[0] + (p[1] - base.mean[1]) * axis[1]).collect();
    let mut sorted = proj.clone();
    sorted.sort_by(f64::total_cmp);
    let median = sorted[sorted.len() / 2];
    let mut resp: Vec<[f64; 2]> = proj.iter().map(|&v| if v < median { [1.0, 0.0] } else { [0.0, 1.0] }).collect();
    let mut comps = [base; 2];
    let mut last_ll = f64::NEG_INFINITY;
    for _ in 0..EM_ITERATIONS {
        for (k, comp) in comps.iter_mut().enumerate() {
            let r: Vec<f64> = resp.iter().map(|v| v[k]).collect();
            if r.iter().sum::<f64>() < 1e-9 {
                *comp = Component { weight: 1e-12, ..base };
            } else {
                *comp = moments(pts, Some(&r));
            }
        }
        let mut ll = 0.0;
        for (i, p) in pts.iter().enumerate() {
            let l = [comps[0].weight.ln() + comps[0].log_density(*p), comps[1].weight.ln() + comps[1].log_density(*p)];
            let tot = log_sum_exp(l.into_iter());
            ll += tot;
            resp[i] = [(l[0] - tot).exp(), (l[1] - tot).exp()];
        }
        if (ll - last_ll).abs() <= EM_TOL * ll.abs().max(1.0) {
            break;
        }
        last_ll = ll;
    }
    let components = comps.into_iter().filter(|c| c.weight > 1e-9).collect();
    Mixture { components }
}

/// A labeled outcome; `odd` is true for the odd-parity subspace.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Labeled {
    pub outcome: Complex<f64>,
    pub odd: bool,
}

/// Discriminant between the odd (`|01>, |10>`) and even (`|00>, |11>`)
/// outcome distributions.
#[derive(Clone, Debug, PartialEq)]
pub struct Classifier {
    pub odd: Mixture,
    pub even: Mixture,
    pub prior_odd: f64,
    /// `1 - (P(even | odd) + P(odd | even)) / 2` on the held-out points.
    pub holdout_fidelity: f64,
    /// Outcomes are divided by this before evaluation.
    pub scale: f64,
}

impl Classifier {
    /// `P(odd | outcome)`.
    pub fn prob_odd<T: Real>(&self, z: Complex<T>) -> f64 {
        let x = [z.re.to_f64_lossy() / self.scale, z.im.to_f64_lossy() / self.scale];
        let lo = self.prior_odd.ln() + self.odd.log_density(x);
        let le = (1.0 - self.prior_odd).ln() + self.even.log_density(x);
        let m = lo.max(le);
        if !m.is_finite() {
            return 0.5;
        }
        let (eo, ee) = ((lo - m).exp(), (le - m).exp());
        eo / (eo + ee)
    }

    pub fn prob_even<T: Real>(&self, z: Complex<T>) -> f64 {
        1.0 - self.prob_odd(z)
    }
}

/// Assignment fidelity `1 - (e_odd + e_even) / 2` of hard decisions at 1/2.
pub fn assignment_fidelity(classifier: &Classifier, points: &[Labeled]) -> f64 {
    let (mut n, mut err) = ([0usize; 2], [0usize; 2]);
    for p in points {
        let class = p.odd as usize;
        n[class] += 1;
        if (classifier.prob_odd(p.outcome) > 0.5) != p.odd {
            err[class] += 1;
        }
    }
    let rate = |c: usize| if n[c] > 0 { err[c] as f64 / n[c] as f64 } else { 0.0 };
    1.0 - 0.5 * (rate(0) + rate(1))
}

/// Fits one mixture per class on 90% of the points and reports the
/// assignment fidelity on the held-out 10%.
pub fn train_classifier(points: &[Labeled]) -> Result<Classifier> {
    let has = |odd: bool| points.iter().any(|p| p.odd == odd);
    if !has(true) || !has(false) {
        return Err(Error::SingleClass);
    }
    // Stratified: the stride counts within each class.
    let mut rank = [0usize; 2];
    let (train, hold): (Vec<(usize, &Labeled)>, Vec<(usize, &Labeled)>) = points
        .iter()
        .map(|p| {
            let r = rank[p.odd as usize];
            rank[p.odd as usize] += 1;
            (r, p)
        })
        .partition(|(r, _)| r % HOLDOUT_STRIDE != HOLDOUT_STRIDE - 1);
    let scale = {
        let s: f64 = train.iter().map(|(_, p)| p.outcome.norm_sqr()).sum::<f64>() / train.len().max(1) as f64;
        if s > 0.0 {
            s.sqrt()
        } else {
            1.0
        }
    };
    let pts = |odd: bool| -> Vec<[f64; 2]> {
        train.iter().filter(|(_, p)| p.odd == odd).map(|(_, p)| [p.outcome.re / scale, p.outcome.im / scale]).collect()
    };
    let (po, pe) = (pts(true), pts(false));
    if po.is_empty() || pe.is_empty() {
        return Err(Error::SingleClass);
    }
    let prior_odd = po.len() as f64 / (po.len() + pe.len()) as f64;
    let mut c = Classifier { odd: Mixture::fit(&po)?, even: Mixture::fit(&pe)?, prior_odd, holdout_fidelity: 0.0, scale };
    let held: Vec<Labeled> = hold.into_iter().map(|(_, p)| *p).collect();
    c.holdout_fidelity = assignment_fidelity(&c, &held);
    Ok(c)
}

/// Indices of the `ceil(fraction * N)` entries with the highest score,
/// ties broken by lower index.
pub fn postselect(scores: &[f64], fraction: f64) -> Result<Vec<usize>> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::InvalidInput(format!("fraction kept {fraction} outside (0, 1]")));
    }
    let n = scores.len();
    let keep = ((fraction * n as f64) - 1e-9).ceil().max(0.0) as usize;
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    idx.truncate(keep.min(n));
    idx.sort_unstable();
    Ok(idx)
}

/// Normalized average of the kept final states.
pub fn conditioned_state<T: Real>(finals: &[DensityMatrix<T>], kept: &[usize]) -> Result<DensityMatrix<T>> {
    if let Some(&bad) = kept.iter().find(|&&i| i >= finals.len()) {
        return Err(Error::InvalidInput(format!("kept index {bad} out of range")));
    }
    mean_state(kept.iter().map(|&i| &finals[i]))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    fn clusters(sep: f64, n: usize, seed: u64) -> Vec<Labeled> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g = Normal::new(0.0, 1.0).unwrap();
        (0..n)
            .map(|i| {
                let odd = i % 2 == 0;
                let center = if odd {
                    0.0
                } else if i % 4 == 1 {
                    -sep
                } else {
                    sep
                };
                Labeled { outcome: Complex::new(center + g.sample(&mut rng), g.sample(&mut rng)), odd }
            })
            .collect()
    }

    #[test]
    fn separable_clusters_classified_perfectly() {
        let c = train_classifier(&clusters(12.0, 4000, 1)).unwrap();
        assert!(c.holdout_fidelity >= 0.99);
        assert_eq!(c.even.components.len(), 2);
    }

    #[test]
    fn overlapping_clusters_match_bayes_rate() {
        // Odd at 0 (prior 1/2), even at +-s (1/4 each), unit variance. The
        // Bayes boundary solves 2 phi(x) = phi(x - s), i.e. x* = s/2 + ln2/s
        // (the far lobe is negligible).
        let s = 2.0;
        let c = train_classifier(&clusters(s, 40000, 2)).unwrap();
        let x = s / 2.0 + std::f64::consts::LN_2 / s;
        let upper = |v: f64| 0.5 * libm_erfc(v / std::f64::consts::SQRT_2);
        let err_odd = 2.0 * upper(x);
        let err_even = upper(s - x) - upper(s + x);
        let ideal = 1.0 - 0.5 * (err_odd + err_even);
        assert!((c.holdout_fidelity - ideal).abs() < 0.02, "{} vs {ideal}", c.holdout_fidelity);
    }

    fn libm_erfc(x: f64) -> f64 {
        // Abramowitz-Stegun 7.1.26 (|error| < 1.5e-7).
        let t = 1.0 / (1.0 + 0.3275911 * x);
        let poly = t * (0.254829592 + t * (-0.284496736 + t * (1.421413741 + t * (-1.453152027 + t * 1.061405429))));
        poly * (-x * x).exp()
    }

    #[test]
    fn probabilities_sum_to_one() {
        let c = train_classifier(&clusters(3.0, 1000, 3)).unwrap();
        for p in clusters(3.0, 50, 4) {
            let (a, b) = (c.prob_odd(p.outcome), c.prob_even(p.outcome));
            assert!((a + b - 1.0).abs() < 1e-15 && (0.0..=1.0).contains(&a));
        }
    }

    #[test]
    fn single_class_rejected() {
        let pts: Vec<Labeled> = clusters(3.0, 100, 5).into_iter().filter(|p| p.odd).collect();
        assert!(matches!(train_classifier(&pts), Err(Error::SingleClass)));
    }

    #[test]
    fn postselect_counts_and_ties() {
        let scores: Vec<f64> = (0..1000).map(|i| ((i * 37) % 101) as f64).collect();
        assert_eq!(postselect(&scores, 1.0).unwrap().len(), 1000);
        assert_eq!(postselect(&scores, 0.25).unwrap().len(), 250);
        assert_eq!(postselect(&[1.0, 1.0, 1.0], 0.5).unwrap(), vec![0, 1]);
        assert!(postselect(&scores, 0.0).is_err());
        let monotone: Vec<f64> = scores.iter().map(|s| (s * 0.3).exp()).collect();
        assert_eq!(postselect(&scores, 0.3).unwrap(), postselect(&monotone, 0.3).unwrap());
    }

    #[test]
    fn conditioned_state_averages_kept() {
        let finals = vec![DensityMatrix::<f64>::basis(0), DensityMatrix::basis(1), DensityMatrix::basis(2)];
        let rho = conditioned_state(&finals, &[1, 2]).unwrap();
        assert!((rho.population(1) - 0.5).abs() < 1e-15 && (rho.population(2) - 0.5).abs() < 1e-15);
        assert!(conditioned_state(&finals, &[3]).is_err());
    }
}
