//! Interferograms and the weighted least-squares fits of the dip and the
//! visibility model.

mod dip;
mod interferogram;
mod lm;
mod vismodel;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};

pub use dip::{bootstrap_dip, fit_dip, fit_dip_values, guess_dip_params, sigma_from_tau, DIP_PARAMS};
pub use interferogram::{poisson_sigma, Interferogram, InterferogramPoint};
pub use vismodel::{fit_visibility_model, read_visibility_points, VisibilityPoint, VIS_PARAMS};

/// Two-sided 95% normal quantile.
pub const Z95: f64 = 1.959_963_984_540_054;

/// Visibility from the plateau and the dip minimum.
pub fn visibility_from_extrema(c_max: f64, c_min: f64) -> Result<f64> {
    if !(c_max > 0.0) {
        return Err(domain(format!("c_max must be > 0, got {c_max}")));
    }
    if !(c_min >= 0.0) {
        return Err(domain(format!("c_min must be >= 0, got {c_min}")));
    }
    if c_min > c_max {
        return Err(domain(format!("c_min {c_min} exceeds c_max {c_max}")));
    }
    Ok((c_max - c_min) / c_max)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FitFlag {
    /// Normal equations could not be inverted at the optimum.
    SingularNormalEquations,
    /// Iteration cap hit before the step size settled.
    IterationLimit,
    /// Visibility estimate outside [−0.1, 1.1].
    VisibilityOutOfRange,
    /// Fewer data points than free parameters, or data with no signal at
    /// all.
    Underdetermined,
    /// The named parameter sits on the edge of its allowed range.
    BoundaryPinned(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub params: BTreeMap<String, f64>,
    pub std_errors: BTreeMap<String, f64>,
    pub ci95: BTreeMap<String, [f64; 2]>,
    pub reduced_chi2: f64,
    pub converged: bool,
    /// Row/column order follows `param_order`.
    pub covariance: Vec<Vec<f64>>,
    pub param_order: Vec<String>,
    pub iterations: usize,
    pub flags: Vec<FitFlag>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bootstrap_ci95: Option<BTreeMap<String, [f64; 2]>>,
}

impl FitResult {
    pub(crate) fn assemble(
        names: &[&str],
        values: &[f64],
        covariance: Option<Vec<Vec<f64>>>,
        reduced_chi2: f64,
        converged: bool,
        iterations: usize,
        mut flags: Vec<FitFlag>,
    ) -> Self {
        let k = names.len();
        let cov = covariance.unwrap_or_else(|| vec![vec![f64::NAN; k]; k]);
        if cov.iter().flatten().any(|c| !c.is_finite()) && !flags.contains(&FitFlag::SingularNormalEquations) {
            flags.push(FitFlag::SingularNormalEquations);
        }
        let converged = converged && !flags.contains(&FitFlag::SingularNormalEquations);
        let mut params = BTreeMap::new();
        let mut std_errors = BTreeMap::new();
        let mut ci95 = BTreeMap::new();
        for (i, name) in names.iter().enumerate() {
            let se = cov[i][i].max(0.0).sqrt();
            params.insert(name.to_string(), values[i]);
            std_errors.insert(name.to_string(), se);
            ci95.insert(name.to_string(), [values[i] - Z95 * se, values[i] + Z95 * se]);
        }
        Self {
            params,
            std_errors,
            ci95,
            reduced_chi2,
            converged,
            covariance: cov,
            param_order: names.iter().map(|s| s.to_string()).collect(),
            iterations,
            flags,
            bootstrap_ci95: None,
        }
    }

    /// Estimate of `name`; panics on an unknown parameter name.
    pub fn param(&self, name: &str) -> f64 {
        self.params[name]
    }

    pub fn std_error(&self, name: &str) -> f64 {
        self.std_errors[name]
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("fit results always serialize")
    }
}
