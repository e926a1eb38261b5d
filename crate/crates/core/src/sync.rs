//! Clock distribution: the recovered clock at the WCS node and the effect of
//! its jitter on the dip.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};
use crate::hom::DipModelParams;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClockModel {
    pub rep_rate: f64,
    /// RMS of the white Gaussian timing jitter of the recovered clock, s.
    pub recovered_jitter_rms: f64,
    /// Fixed offset of the recovered clock, recovery latency included, s.
    pub static_offset: f64,
}

impl ClockModel {
    pub fn validate(&self) -> Result<()> {
        if !(self.rep_rate > 0.0 && self.rep_rate.is_finite()) {
            return Err(domain(format!("clock rate must be positive, got {}", self.rep_rate)));
        }
        if !(self.recovered_jitter_rms >= 0.0 && self.recovered_jitter_rms.is_finite()) {
            return Err(domain("jitter RMS must be >= 0"));
        }
        if !self.static_offset.is_finite() {
            return Err(domain("clock offset must be finite"));
        }
        Ok(())
    }

    pub fn period(&self) -> f64 {
        self.rep_rate.recip()
    }
}

/// Tick `pulse_index` of the recovered clock.
pub fn recovered_pulse_time<R: Rng + ?Sized>(clock: &ClockModel, pulse_index: u64, rng: &mut R) -> f64 {
    let nominal = pulse_index as f64 / clock.rep_rate + clock.static_offset;
    if clock.recovered_jitter_rms > 0.0 {
        let n = Normal::new(0.0, clock.recovered_jitter_rms).expect("finite jitter");
        nominal + n.sample(rng)
    } else {
        nominal
    }
}

/// Dip after convolution with Gaussian timing jitter: the width grows to
/// `√(τ² + 2σ²)` while the area `V·τ` is conserved.
pub fn jitter_corrected_dip(params: &DipModelParams, jitter_rms: f64) -> Result<DipModelParams> {
    if !(params.tau > 0.0) {
        return Err(domain("tau must be > 0"));
    }
    if !(jitter_rms >= 0.0 && jitter_rms.is_finite()) {
        return Err(domain(format!("jitter must be >= 0, got {jitter_rms}")));
    }
    let tau = (params.tau * params.tau + 2.0 * jitter_rms * jitter_rms).sqrt();
    Ok(DipModelParams { visibility: params.visibility * params.tau / tau, tau, ..*params })
}


#[cfg(test)]
mod props {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn jitter_only_broadens(v in 0.0f64..=1.0, tau in 1e-12f64..1e-9, s in 0.0f64..1e-10) {
            let p = DipModelParams::new(10.0, v, tau, 0.0).unwrap();
            let q = jitter_corrected_dip(&p, s).unwrap();
            prop_assert!(q.tau >= p.tau);
            prop_assert!(q.visibility <= p.visibility);
        }
    }
}
