use serde::{Deserialize, Serialize};

use super::spectral::{spectral_factor, AngularBandwidth};
use crate::error::{domain, Result};

/// Parameters of the inverted-Gaussian dip `C·(1 − V·exp(−((t−t₀)/τ)²))`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DipModelParams {
    /// Plateau (fully distinguishable) coincidence level.
    pub c_max: f64,
    pub visibility: f64,
    /// 1/e half-width in seconds.
    pub tau: f64,
    /// Delay of the dip minimum in seconds.
    pub center: f64,
}

impl DipModelParams {
    pub fn new(c_max: f64, visibility: f64, tau: f64, center: f64) -> Result<Self> {
        let p = Self { c_max, visibility, tau, center };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.c_max >= 0.0 && self.c_max.is_finite()) {
            return Err(domain(format!("c_max must be >= 0, got {}", self.c_max)));
        }
        if !(0.0..=1.0).contains(&self.visibility) {
            return Err(domain(format!("visibility must lie in [0, 1], got {}", self.visibility)));
        }
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            return Err(domain(format!("tau must be > 0, got {}", self.tau)));
        }
        if !self.center.is_finite() {
            return Err(domain("dip center must be finite"));
        }
        Ok(())
    }

    /// Expected coincidences at `delay`.
    pub fn counts_at(&self, delay: f64) -> f64 {
        dip_curve(self.c_max, self.visibility, self.tau, self.center, delay)
    }
}

/// Dip curve without parameter validation; fits explore outside the physical box.
pub fn dip_curve(c_max: f64, visibility: f64, tau: f64, center: f64, delay: f64) -> f64 {
    let x = (delay - center) / tau;
    c_max * (1.0 - visibility * (-x * x).exp())
}

/// Inputs of the WCS/heralded-photon visibility model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VisibilityModelParams {
    /// Probability that a heralded photon reaches the beamsplitter.
    pub mu: f64,
    /// Per-pulse probability of a spurious threefold.
    pub n_sys: f64,
    pub bw_a: AngularBandwidth,
    pub bw_b: AngularBandwidth,
}

impl VisibilityModelParams {
    pub fn new(mu: f64, n_sys: f64, bw_a: AngularBandwidth, bw_b: AngularBandwidth) -> Result<Self> {
        if !(mu > 0.0 && mu <= 1.0) {
            return Err(domain(format!("mu must lie in (0, 1], got {mu}")));
        }
        if !(n_sys >= 0.0 && n_sys.is_finite()) {
            return Err(domain(format!("n_sys must be >= 0, got {n_sys}")));
        }
        Ok(Self { mu, n_sys, bw_a, bw_b })
    }
}

/// Denominator `n̄/μ + 2 + N_sys/(n̄μ)` shared by the model and its fit.
pub(crate) fn visibility_denominator(n_bar: f64, mu: f64, n_sys: f64) -> f64 {
    n_bar / mu + 2.0 + n_sys / (n_bar * mu)
}

/// HOM visibility expected for a WCS of mean `n_bar` against heralded photons.
pub fn predict_visibility(n_bar: f64, params: &VisibilityModelParams, delay: f64) -> Result<f64> {
    if !(n_bar > 0.0 && n_bar.is_finite()) {
        return Err(domain(format!("mean photon number must be > 0 (model diverges at 0), got {n_bar}")));
    }
    let s = spectral_factor(params.bw_a, params.bw_b, delay);
    Ok(s / visibility_denominator(n_bar, params.mu, params.n_sys))
}

/// Mean photon number maximising the predicted visibility: `√N_sys`.
pub fn optimal_n_bar(params: &VisibilityModelParams) -> Result<f64> {
    if params.n_sys <= 0.0 {
        return Err(domain("no interior optimum without system noise (n_sys = 0)"));
    }
    Ok(params.n_sys.sqrt())
}
