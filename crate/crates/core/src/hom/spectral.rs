use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};

/// FWHM time-bandwidth product of a transform-limited Gaussian pulse.
pub const GAUSSIAN_TIME_BANDWIDTH: f64 = 0.441;

/// Spectral bandwidth expressed as an angular frequency in rad/s.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct AngularBandwidth(f64);

impl AngularBandwidth {
    pub fn new(rad_per_s: f64) -> Result<Self> {
        if rad_per_s.is_finite() && rad_per_s > 0.0 {
            Ok(Self(rad_per_s))
        } else {
            Err(domain(format!("angular bandwidth must be positive and finite, got {rad_per_s}")))
        }
    }

    /// From an ordinary frequency in GHz (`2π·f`).
    pub fn from_ghz(ghz: f64) -> Result<Self> {
        Self::new(2.0 * PI * ghz * 1e9)
    }

    pub fn value(self) -> f64 {
        self.0
    }

    pub fn ghz(self) -> f64 {
        self.0 / (2.0 * PI * 1e9)
    }
}

impl TryFrom<f64> for AngularBandwidth {
    type Error = crate::Error;

    fn try_from(v: f64) -> Result<Self> {
        Self::new(v)
    }
}

impl From<AngularBandwidth> for f64 {
    fn from(bw: AngularBandwidth) -> f64 {
        bw.0
    }
}

/// Spectral FWHM of a transform-limited Gaussian pulse of the given temporal
/// FWHM, as an angular frequency.
pub fn pulse_to_angular_bandwidth(fwhm_duration: f64) -> Result<AngularBandwidth> {
    if !(fwhm_duration.is_finite() && fwhm_duration > 0.0) {
        return Err(domain(format!("pulse duration must be positive, got {fwhm_duration}")));
    }
    AngularBandwidth::new(2.0 * PI * GAUSSIAN_TIME_BANDWIDTH / fwhm_duration)
}

/// The narrower of a pulse bandwidth and the filter it passes through.
pub fn effective_bandwidth(pulse_bw: AngularBandwidth, filter_bw: AngularBandwidth) -> AngularBandwidth {
    if filter_bw.0 < pulse_bw.0 {
        filter_bw
    } else {
        pulse_bw
    }
}

/// Rate `a²b²/(a²+b²)` (s⁻²) of the Gaussian fall-off of the overlap with delay.
pub fn overlap_decay_rate(bw_a: AngularBandwidth, bw_b: AngularBandwidth) -> f64 {
    let (a2, b2) = (bw_a.0 * bw_a.0, bw_b.0 * bw_b.0);
    a2 * b2 / (a2 + b2)
}

/// 1/e half-width of the dip implied by two bandwidths.
pub fn dip_tau(bw_a: AngularBandwidth, bw_b: AngularBandwidth) -> f64 {
    overlap_decay_rate(bw_a, bw_b).sqrt().recip()
}

/// `4ab/(a²+b²) · exp(−a²b²t²/(a²+b²))`. Lies in (0, 2], reaching 2 only for
/// equal bandwidths at zero delay.
pub fn spectral_factor(bw_a: AngularBandwidth, bw_b: AngularBandwidth, delay: f64) -> f64 {
    let (a, b) = (bw_a.0, bw_b.0);
    let prefactor = 4.0 * a * b / (a * a + b * b);
    prefactor * (-overlap_decay_rate(bw_a, bw_b) * delay * delay).exp()
}

/// Intensity overlap `|⟨A|B⟩|²` of the two wavepackets: half the spectral
/// factor, so that a perfect match gives 1.
pub fn mode_overlap(bw_a: AngularBandwidth, bw_b: AngularBandwidth, delay: f64) -> f64 {
    0.5 * spectral_factor(bw_a, bw_b, delay)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn paper_pair() -> (AngularBandwidth, AngularBandwidth) {
        (AngularBandwidth::new(11.0 * PI * 1e9).unwrap(), AngularBandwidth::new(10.0 * PI * 1e9).unwrap())
    }

    #[test]
    fn eighty_ps_pulse_is_about_five_and_a_half_ghz() {
        let bw = pulse_to_angular_bandwidth(80e-12).unwrap();
        assert_close!(bw.ghz(), 5.5125, 1e-9);
        assert_close!(bw.value(), 3.4636e10, 1e6);
    }

    #[test]
    fn sixty_ps_pulse() {
        let bw = pulse_to_angular_bandwidth(60e-12).unwrap();
        assert_close!(bw.ghz(), 7.35, 1e-9);
    }

    #[test]
    fn doubling_duration_halves_bandwidth() {
        for d in [1e-12, 37e-12, 80e-12, 3e-9] {
            let a = pulse_to_angular_bandwidth(d).unwrap().value();
            let b = pulse_to_angular_bandwidth(2.0 * d).unwrap().value();
            assert_close!(a / b, 2.0, 1e-12);
        }
    }

    #[test]
    fn non_positive_duration_rejected() {
        assert!(pulse_to_angular_bandwidth(0.0).is_err());
        assert!(pulse_to_angular_bandwidth(-1e-12).is_err());
        assert!(AngularBandwidth::new(0.0).is_err());
    }

    #[test]
    fn narrower_element_sets_effective_bandwidth() {
        let pulse = pulse_to_angular_bandwidth(80e-12).unwrap();
        let herald_filter = AngularBandwidth::from_ghz(5.0).unwrap();
        let hom_filter = AngularBandwidth::from_ghz(10.0).unwrap();
        assert_eq!(effective_bandwidth(pulse, herald_filter), herald_filter);
        assert_eq!(effective_bandwidth(pulse, hom_filter), pulse);
        assert_eq!(effective_bandwidth(pulse, pulse), pulse);
    }

    #[test]
    fn spectral_factor_reference_values() {
        let (a, b) = paper_pair();
        assert_close!(spectral_factor(a, b, 0.0), 440.0 / 221.0, 1e-12);
        assert_close!(spectral_factor(a, a, 0.0), 2.0, 1e-12);
        // exponent rate 5.404e20 s^-2 puts 1/e near 43 ps
        assert_close!(overlap_decay_rate(a, b), 5.404e20, 1e17);
        assert_close!(spectral_factor(a, b, 43.0e-12), 0.732, 2e-3);
        assert_close!(dip_tau(a, b), 43.0e-12, 0.1e-12);
    }

    #[test]
    fn spectral_factor_symmetric_and_decreasing() {
        let (a, b) = paper_pair();
        let mut prev = f64::INFINITY;
        for k in 0..50 {
            let t = k as f64 * 5e-12;
            let v = spectral_factor(a, b, t);
            assert_close!(v, spectral_factor(b, a, t), 1e-15);
            assert_close!(v, spectral_factor(a, b, -t), 1e-15);
            assert!(v < prev);
            prev = v;
        }
    }
}
