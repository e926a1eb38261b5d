//! Damped Gauss-Newton (Levenberg-Marquardt) on weighted residuals.

use nalgebra::{DMatrix, DVector};

pub(crate) struct LmOptions {
    /// Relative parameter-change threshold.
    pub xtol: f64,
    pub max_iter: usize,
    /// Typical magnitude of each parameter; keeps the relative test sane
    /// for parameters that converge to zero.
    pub scales: Vec<f64>,
}

impl LmOptions {
    pub fn new(scales: Vec<f64>) -> Self {
        Self { xtol: 1e-8, max_iter: 200, scales }
    }
}

pub(crate) struct LmOutcome {
    pub x: DVector<f64>,
    pub chi2: f64,
    /// `(JᵀJ)⁻¹` at the optimum, unscaled.
    pub covariance: Option<DMatrix<f64>>,
    pub iterations: usize,
    pub converged: bool,
}

fn chi2(r: &DVector<f64>) -> f64 {
    r.norm_squared()
}

/// Minimizes `Σ rᵢ(x)²` where `residuals` returns weighted residuals and
/// `jacobian` their derivatives (rows: residuals, columns: parameters).
pub(crate) fn minimize<F, J>(residuals: F, jacobian: J, x0: DVector<f64>, opts: &LmOptions) -> LmOutcome
where
    F: Fn(&DVector<f64>) -> DVector<f64>,
    J: Fn(&DVector<f64>) -> DMatrix<f64>,
{
    let n = x0.len();
    let mut x = x0;
    let mut r = residuals(&x);
    let mut cost = chi2(&r);
    let mut lambda = 1e-3;
    let mut converged = false;
    let mut iterations = 0;

    let small_step =
        |dx: &DVector<f64>, x: &DVector<f64>| (0..n).all(|i| dx[i].abs() <= opts.xtol * x[i].abs().max(opts.scales[i]));

    if !cost.is_finite() {
        return LmOutcome { x, chi2: cost, covariance: None, iterations, converged };
    }

    'outer: while iterations < opts.max_iter {
        iterations += 1;
        let j = jacobian(&x);
        let a = j.transpose() * &j;
        let g = j.transpose() * &r;
        let diag_floor = a.diagonal().max() * 1e-12;
        loop {
            let mut damped = a.clone();
            for i in 0..n {
                damped[(i, i)] += lambda * a[(i, i)].max(diag_floor).max(f64::MIN_POSITIVE);
            }
            let Some(dx) = damped.cholesky().map(|c| -c.solve(&g)) else {
                lambda *= 10.0;
                if lambda > 1e20 {
                    break 'outer;
                }
                continue;
            };
            let trial = &x + &dx;
            let r_trial = residuals(&trial);
            let trial_cost = chi2(&r_trial);
            if trial_cost.is_finite() && trial_cost <= cost {
                let done = small_step(&dx, &x);
                x = trial;
                r = r_trial;
                cost = trial_cost;
                lambda = (lambda / 10.0).max(1e-12);
                if done || cost == 0.0 {
                    converged = true;
                    break 'outer;
                }
                break;
            }
            // No descent even for a step below the tolerance: the
            // optimum is resolved to working precision.
            if small_step(&dx, &x) {
                converged = true;
                break 'outer;
            }
            lambda *= 10.0;
            if lambda > 1e20 {
                break 'outer;
            }
        }
    }

    let j = jacobian(&x);
    let covariance = (j.transpose() * &j)
        .try_inverse()
        .filter(|c| c.iter().all(|v| v.is_finite()) && (0..n).all(|i| c[(i, i)] >= 0.0));
    LmOutcome { x, chi2: cost, covariance, iterations, converged }
}

/// Central-difference Jacobian.
#[cfg(test)]
pub(crate) fn numeric_jacobian<F>(f: &F, x: &DVector<f64>, scales: &[f64]) -> DMatrix<f64>
where
    F: Fn(&DVector<f64>) -> DVector<f64>,
{
    let r0 = f(x);
    let mut j = DMatrix::zeros(r0.len(), x.len());
    for k in 0..x.len() {
        let h = 1e-6 * x[k].abs().max(scales[k]);
        let mut xp = x.clone();
        let mut xm = x.clone();
        xp[k] += h;
        xm[k] -= h;
        let col = (f(&xp) - f(&xm)) / (2.0 * h);
        j.set_column(k, &col);
    }
    j
}
