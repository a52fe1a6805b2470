//! Small derivative-free and quasi-Newton minimizers over `f64` vectors.

/// Outcome of a minimization.
#[derive(Clone, Debug, PartialEq)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub value: f64,
    pub evaluations: usize,
    pub converged: bool,
}

/// Nelder-Mead settings.
#[derive(Clone, Debug)]
pub struct SimplexOptions {
    pub max_evaluations: usize,
    /// Stop when the spread of simplex values drops below this.
    pub f_tol: f64,
    /// Stop when the simplex diameter (in box-normalized units) drops below this.
    pub x_tol: f64,
    /// Initial step as a fraction of each box width.
    pub initial_step: f64,
    pub max_restarts: usize,
}

impl Default for SimplexOptions {
    fn default() -> Self {
        Self { max_evaluations: 400, f_tol: 1e-12, x_tol: 1e-7, initial_step: 0.1, max_restarts: 2 }
    }
}

/// Nelder-Mead with dimension-adaptive coefficients inside the box
/// `lower..upper`. Trial points are clamped to the box. After convergence
/// the simplex is rebuilt around the best point up to `max_restarts` times,
/// which guards against premature collapse.
pub fn nelder_mead<F>(mut f: F, x0: &[f64], lower: &[f64], upper: &[f64], opts: &SimplexOptions) -> Minimum
where
    F: FnMut(&[f64]) -> f64,
{
    let n = x0.len();
    assert!(n > 0 && lower.len() == n && upper.len() == n);
    let nf = n as f64;
    let (alpha, beta, gamma, delta) = (1.0, 1.0 + 2.0 / nf, 0.75 - 0.5 / nf, 1.0 - 1.0 / nf);
    let width: Vec<f64> = lower.iter().zip(upper).map(|(l, u)| (u - l).max(f64::MIN_POSITIVE)).collect();
    let clamp = |x: &mut Vec<f64>| {
        for i in 0..n {
            x[i] = x[i].clamp(lower[i], upper[i]);
        }
    };
    let mut evals = 0usize;
    let mut eval = |x: &[f64], evals: &mut usize| {
        *evals += 1;
        let v = f(x);
        if v.is_nan() {
            f64::INFINITY
        } else {
            v
        }
    };

    let mut best = x0.to_vec();
    clamp(&mut best);
    let mut best_val = eval(&best, &mut evals);
    let mut converged = false;

    for restart in 0..=opts.max_restarts {
        // Initial simplex: step along each axis, reflected inward at the box edge.
        let mut simplex = vec![(best.clone(), best_val)];
        for i in 0..n {
            let mut x = best.clone();
            let step = opts.initial_step * width[i];
            x[i] = if x[i] + step <= upper[i] { x[i] + step } else { x[i] - step };
            clamp(&mut x);
            let v = eval(&x, &mut evals);
            simplex.push((x, v));
        }
        converged = false;
        while evals < opts.max_evaluations {
            simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
            let spread = simplex[n].1 - simplex[0].1;
            let diameter = simplex[1..]
                .iter()
                .map(|(x, _)| (0..n).map(|i| ((x[i] - simplex[0].0[i]) / width[i]).abs()).fold(0.0, f64::max))
                .fold(0.0, f64::max);
            if spread.abs() <= opts.f_tol || diameter <= opts.x_tol {
                converged = true;
                break;
            }
            let centroid: Vec<f64> = (0..n).map(|i| simplex[..n].iter().map(|(x, _)| x[i]).sum::<f64>() / nf).collect();
            let towards = |t: f64, from: &[f64]| -> Vec<f64> {
                let mut x: Vec<f64> = (0..n).map(|i| centroid[i] + t * (centroid[i] - from[i])).collect();
                clamp(&mut x);
                x
            };
            let worst = simplex[n].0.clone();
            let xr = towards(alpha, &worst);
            let fr = eval(&xr, &mut evals);
            if fr < simplex[0].1 {
                let xe = towards(alpha * beta, &worst);
                let fe = eval(&xe, &mut evals);
                simplex[n] = if fe < fr { (xe, fe) } else { (xr, fr) };
                continue;
            }
            if fr < simplex[n - 1].1 {
                simplex[n] = (xr, fr);
                continue;
            }
            let (xc, fc) = if fr < simplex[n].1 {
                let x = towards(alpha * gamma, &worst);
                let v = eval(&x, &mut evals);
                (x, v)
            } else {
                let x = towards(-gamma, &worst);
                let v = eval(&x, &mut evals);
                (x, v)
            };
            if fc < fr.min(simplex[n].1) {
                simplex[n] = (xc, fc);
                continue;
            }
            let x0 = simplex[0].0.clone();
            for item in simplex.iter_mut().skip(1) {
                let mut x: Vec<f64> = (0..n).map(|i| x0[i] + delta * (item.0[i] - x0[i])).collect();
                clamp(&mut x);
                let v = eval(&x, &mut evals);
                *item = (x, v);
            }
        }
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        let improved = simplex[0].1 < best_val;
        if simplex[0].1 <= best_val {
            best = simplex[0].0.clone();
            best_val = simplex[0].1;
        }
        if !converged || evals >= opts.max_evaluations || (!improved && restart > 0) {
            break;
        }
    }
    Minimum { x: best, value: best_val, evaluations: evals, converged }
}

/// BFGS with backtracking line search. `fg` returns the value and gradient.
pub fn bfgs<F>(mut fg: F, x0: &[f64], max_iter: usize, g_tol: f64) -> Minimum
where
    F: FnMut(&[f64]) -> (f64, Vec<f64>),
{
    let n = x0.len();
    let mut x = x0.to_vec();
    let (mut fx, mut g) = fg(&x);
    let mut evals = 1;
    let mut h = identity(n);
    let mut converged = false;
    for _ in 0..max_iter {
        let gnorm = g.iter().map(|v| v * v).sum::<f64>().sqrt();
        if gnorm <= g_tol {
            converged = true;
            break;
        }
        let mut dir: Vec<f64> = (0..n).map(|i| -(0..n).map(|j| h[i][j] * g[j]).sum::<f64>()).collect();
        let mut slope: f64 = dir.iter().zip(&g).map(|(d, gi)| d * gi).sum();
        if slope >= 0.0 {
            h = identity(n);
            dir = g.iter().map(|v| -v).collect();
            slope = -gnorm * gnorm;
        }
        let mut step = 1.0;
        let mut accepted = None;
        for _ in 0..60 {
            let xn: Vec<f64> = x.iter().zip(&dir).map(|(a, d)| a + step * d).collect();
            let (fnew, gnew) = fg(&xn);
            evals += 1;
            if fnew.is_finite() && fnew <= fx + 1e-4 * step * slope {
                accepted = Some((xn, fnew, gnew));
                break;
            }
            step *= 0.5;
        }
        let Some((xn, fnew, gnew)) = accepted else {
            converged = gnorm <= g_tol.sqrt();
            break;
        };
        let s: Vec<f64> = xn.iter().zip(&x).map(|(a, b)| a - b).collect();
        let yv: Vec<f64> = gnew.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy: f64 = s.iter().zip(&yv).map(|(a, b)| a * b).sum();
        let df = fx - fnew;
        x = xn;
        fx = fnew;
        g = gnew;
        if sy > 1e-300 {
            let rho = 1.0 / sy;
            let hy: Vec<f64> = (0..n).map(|i| (0..n).map(|j| h[i][j] * yv[j]).sum()).collect();
            let yhy: f64 = yv.iter().zip(&hy).map(|(a, b)| a * b).sum();
            for i in 0..n {
                for j in 0..n {
                    h[i][j] += -rho * (hy[i] * s[j] + s[i] * hy[j]) + (rho * rho * yhy + rho) * s[i] * s[j];
                }
            }
        }
        if df.abs() <= 1e-16 * fx.abs().max(1e-300) && step < 1e-12 {
            break;
        }
    }
    Minimum { x, value: fx, evaluations: evals, converged }
}

fn identity(n: usize) -> Vec<Vec<f64>> {
    (0..n).map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rosenbrock(x: &[f64]) -> f64 {
        (1.0 - x[0]).powi(2) + 100.0 * (x[1] - x[0] * x[0]).powi(2)
    }

    #[test]
    fn simplex_finds_rosenbrock_minimum() {
        let opts = SimplexOptions { max_evaluations: 4000, f_tol: 1e-20, x_tol: 1e-10, ..Default::default() };
        let m = nelder_mead(rosenbrock, &[-1.2, 1.0], &[-3.0, -3.0], &[3.0, 3.0], &opts);
        assert!(m.converged);
        assert!((m.x[0] - 1.0).abs() < 1e-4 && (m.x[1] - 1.0).abs() < 1e-4, "{:?}", m.x);
    }

    #[test]
    fn simplex_respects_box() {
        let m = nelder_mead(|x| (x[0] - 5.0).powi(2), &[0.0], &[-1.0], &[1.0], &SimplexOptions::default());
        assert!((m.x[0] - 1.0).abs() < 1e-6);
    }

    #[test]
    fn simplex_reports_budget_exhaustion() {
        let opts = SimplexOptions { max_evaluations: 10, f_tol: 0.0, x_tol: 0.0, ..Default::default() };
        let m = nelder_mead(rosenbrock, &[-1.2, 1.0], &[-3.0, -3.0], &[3.0, 3.0], &opts);
        assert!(!m.converged);
        assert!(m.value <= rosenbrock(&[-1.2, 1.0]));
    }

    #[test]
    fn bfgs_minimizes_quadratic_and_rosenbrock() {
        let quad = |x: &[f64]| {
            let v = 3.0 * (x[0] - 1.0).powi(2) + (x[1] + 2.0).powi(2) + x[0] * x[1];
            (v, vec![6.0 * (x[0] - 1.0) + x[1], 2.0 * (x[1] + 2.0) + x[0]])
        };
        let m = bfgs(quad, &[0.0, 0.0], 100, 1e-10);
        // Stationary point of the quadratic solved by hand: 6a + b = 6, a + 2b = -4.
        let (a, b) = (16.0 / 11.0, -30.0 / 11.0);
        assert!(m.converged && (m.x[0] - a).abs() < 1e-8 && (m.x[1] - b).abs() < 1e-8);

        let rb = |x: &[f64]| {
            let g0 = -2.0 * (1.0 - x[0]) - 400.0 * x[0] * (x[1] - x[0] * x[0]);
            let g1 = 200.0 * (x[1] - x[0] * x[0]);
            (rosenbrock(x), vec![g0, g1])
        };
        let m = bfgs(rb, &[-1.2, 1.0], 500, 1e-9);
        assert!((m.x[0] - 1.0).abs() < 1e-6 && (m.x[1] - 1.0).abs() < 1e-6);
    }
}
