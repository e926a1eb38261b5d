//! Fit of heralding efficiency and system noise to visibility-vs-n̄ data.
//!
//! The solver works in unconstrained coordinates, `μ = logistic(a)` and
//! `N_sys = exp(b)`, and maps the covariance back with the delta method.

use std::io::BufRead;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::lm::{minimize, LmOptions};
use super::{FitFlag, FitResult};
use crate::error::{domain, Error, Result};
use crate::hom::{spectral_factor, AngularBandwidth};

pub const VIS_PARAMS: [&str; 2] = ["mu", "n_sys"];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VisibilityPoint {
    pub n_bar: f64,
    pub visibility: f64,
    pub sigma: f64,
}

fn logistic(a: f64) -> f64 {
    1.0 / (1.0 + (-a).exp())
}

/// Weighted least squares of the zero-delay visibility model over
/// `(μ, N_sys)` with the bandwidths held fixed.
///
/// A single point cannot determine two parameters: the result is returned
/// unconverged with [`FitFlag::Underdetermined`].
pub fn fit_visibility_model(
    points: &[VisibilityPoint],
    bw_a: AngularBandwidth,
    bw_b: AngularBandwidth,
) -> Result<FitResult> {
    if points.is_empty() {
        return Err(domain("no visibility points to fit"));
    }
    for (i, p) in points.iter().enumerate() {
        if !(p.n_bar > 0.0 && p.n_bar.is_finite()) {
            return Err(domain(format!("point {}: n_bar must be > 0, got {}", i + 1, p.n_bar)));
        }
        if !(p.sigma > 0.0 && p.sigma.is_finite()) {
            return Err(domain(format!("point {}: sigma must be > 0, got {}", i + 1, p.sigma)));
        }
        if !p.visibility.is_finite() {
            return Err(domain(format!("point {}: visibility must be finite", i + 1)));
        }
    }
    let s0 = spectral_factor(bw_a, bw_b, 0.0);
    let m = points.len();
    let model = |a: f64, b: f64, n: f64| {
        let mu = logistic(a);
        s0 / (n / mu + 2.0 + b.exp() / (n * mu))
    };
    let residuals = |x: &DVector<f64>| {
        DVector::from_fn(m, |i, _| {
            let p = &points[i];
            (model(x[0], x[1], p.n_bar) - p.visibility) / p.sigma
        })
    };
    let jacobian = |x: &DVector<f64>| {
        let (mu, ns) = (logistic(x[0]), x[1].exp());
        let mut j = DMatrix::zeros(m, 2);
        for (i, p) in points.iter().enumerate() {
            let n = p.n_bar;
            let d = n / mu + 2.0 + ns / (n * mu);
            let v = s0 / d;
            // ∂V/∂μ = V/d · (n + N/n)/μ², ∂μ/∂a = μ(1−μ)
            let dv_dmu = v / d * (n + ns / n) / (mu * mu);
            // ∂V/∂N = −V/d · 1/(nμ), ∂N/∂b = N
            let dv_dns = -v / d / (n * mu);
            j[(i, 0)] = dv_dmu * mu * (1.0 - mu) / p.sigma;
            j[(i, 1)] = dv_dns * ns / p.sigma;
        }
        j
    };

    let opts = LmOptions::new(vec![1.0, 1.0]);
    let mut best = None;
    // Multi-start grid; the cost surface has long flat valleys.
    for mu0 in [0.005f64, 0.02, 0.08, 0.3] {
        for ns0 in [1e-6f64, 1e-5, 1e-4, 1e-3] {
            let x0 = DVector::from_vec(vec![(mu0 / (1.0 - mu0)).ln(), ns0.ln()]);
            let out = minimize(residuals, jacobian, x0, &opts);
            let better = match &best {
                None => true,
                Some(b) => {
                    let b: &super::lm::LmOutcome = b;
                    (out.converged && !b.converged) || (out.converged == b.converged && out.chi2 < b.chi2)
                }
            };
            if better {
                best = Some(out);
            }
        }
    }
    let out = best.expect("grid is non-empty");

    let (a, b) = (out.x[0], out.x[1]);
    let (mu, ns) = (logistic(a), b.exp());
    let mut flags = Vec::new();
    if m < 2 {
        flags.push(FitFlag::Underdetermined);
    }
    if mu > 1.0 - 1e-6 {
        flags.push(FitFlag::BoundaryPinned("mu".into()));
    }
    if ns < 1e-12 {
        flags.push(FitFlag::BoundaryPinned("n_sys".into()));
    }
    if !out.converged && out.iterations >= opts.max_iter {
        flags.push(FitFlag::IterationLimit);
    }
    let dof = m.saturating_sub(2);
    let reduced_chi2 = if dof > 0 { out.chi2 / dof as f64 } else { f64::NAN };
    let cov = if m < 2 {
        None
    } else {
        out.covariance.map(|c| {
            let scale = if dof > 0 && reduced_chi2 > 0.0 { reduced_chi2 } else { 1.0 };
            let d = [mu * (1.0 - mu), ns];
            (0..2).map(|r| (0..2).map(|k| c[(r, k)] * d[r] * d[k] * scale).collect()).collect()
        })
    };
    let converged = out.converged && m >= 2 && flags.iter().all(|f| !matches!(f, FitFlag::BoundaryPinned(_)));
    Ok(FitResult::assemble(&VIS_PARAMS, &[mu, ns], cov, reduced_chi2, converged, out.iterations, flags))
}

/// Reads `n_bar,visibility,sigma` rows; a non-numeric first line is taken
/// as a header.
pub fn read_visibility_points<R: BufRead>(r: R) -> Result<Vec<VisibilityPoint>> {
    let mut points = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        let lineno = i + 1;
        let text = line.trim();
        if text.is_empty() || text.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = text.split(',').map(str::trim).collect();
        let parsed: std::result::Result<Vec<f64>, _> = fields.iter().map(|f| f.parse::<f64>()).collect();
        let bad = |msg: String| Error::Parse { line: lineno, msg };
        match parsed {
            Ok(v) if v.len() == 3 => {
                if !(v[0] > 0.0) {
                    return Err(bad(format!("n_bar must be > 0, got {}", v[0])));
                }
                if !(v[2] > 0.0) {
                    return Err(bad(format!("sigma must be > 0, got {}", v[2])));
                }
                points.push(VisibilityPoint { n_bar: v[0], visibility: v[1], sigma: v[2] });
            }
            Ok(v) => return Err(bad(format!("expected 3 fields, found {}", v.len()))),
            Err(_) if i == 0 => continue,
            Err(_) => return Err(bad(format!("expected numbers, got '{text}'"))),
        }
    }
    Ok(points)
}
