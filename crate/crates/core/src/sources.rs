//! Per-pulse emission from the weak coherent source and the heralded
//! photon-pair source.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{config, domain, Result};
use crate::rng::{bernoulli, binomial, poisson};

/// WCS mean photon numbers above this are unusually bright for HOM work.
pub const BRIGHT_WCS_WARNING: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WcsSourceConfig {
    /// Mean photon number per pulse at the coupler input.
    pub n_bar: f64,
    /// Temporal FWHM of the carved pulse, s.
    pub pulse_fwhm: f64,
    pub rep_rate: f64,
    /// Fixed emission offset relative to the recovered clock, s.
    pub center_offset: f64,
}

impl WcsSourceConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.n_bar >= 0.0 && self.n_bar.is_finite()) {
            return Err(domain(format!("WCS n_bar must be >= 0, got {}", self.n_bar)));
        }
        if self.n_bar > BRIGHT_WCS_WARNING {
            log::warn!("WCS n_bar = {} is above {BRIGHT_WCS_WARNING}", self.n_bar);
        }
        if !(self.pulse_fwhm > 0.0) {
            return Err(domain("WCS pulse FWHM must be positive"));
        }
        if !(self.rep_rate > 0.0 && self.rep_rate.is_finite()) {
            return Err(domain("WCS repetition rate must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpsSourceConfig {
    /// Mean number of pairs per pump pulse.
    pub pair_prob: f64,
    /// Coincidence-to-accidental ratio the source is specified at.
    pub car: f64,
    /// Current pump delay, s; an integer multiple of `delay_step`.
    pub pump_delay: f64,
    pub delay_step: f64,
    /// Probability that the idler of a pair reaches the herald detector.
    pub herald_efficiency: f64,
    /// Probability that the signal of a pair reaches the coupler.
    pub signal_efficiency: f64,
    pub rep_rate: f64,
    /// Pump pulse FWHM, s.
    pub pump_fwhm: f64,
}

/// Pair probability implied by a CAR under `CAR = 1 + 1/p`.
pub fn car_to_pair_prob(car: f64) -> Result<f64> {
    if !(car > 1.0 && car.is_finite()) {
        return Err(domain(format!("CAR must exceed 1, got {car}")));
    }
    let p = 1.0 / (car - 1.0);
    if p >= 1.0 {
        return Err(domain(format!("CAR {car} implies a pair probability {p} >= 1")));
    }
    Ok(p)
}

impl EpsSourceConfig {
    /// Source whose pair probability is derived from its CAR.
    pub fn from_car(
        car: f64,
        delay_step: f64,
        herald_efficiency: f64,
        signal_efficiency: f64,
        rep_rate: f64,
        pump_fwhm: f64,
    ) -> Result<Self> {
        let cfg = Self {
            pair_prob: car_to_pair_prob(car)?,
            car,
            pump_delay: 0.0,
            delay_step,
            herald_efficiency,
            signal_efficiency,
            rep_rate,
            pump_fwhm,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.pair_prob > 0.0 && self.pair_prob < 1.0) {
            return Err(domain(format!("pair_prob must lie in (0, 1), got {}", self.pair_prob)));
        }
        if !(self.car >= 1.0 && self.car.is_finite()) {
            return Err(domain(format!("CAR must be >= 1, got {}", self.car)));
        }
        for (name, v) in [("herald_efficiency", self.herald_efficiency), ("signal_efficiency", self.signal_efficiency)]
        {
            if !(0.0..=1.0).contains(&v) {
                return Err(domain(format!("{name} must lie in [0, 1], got {v}")));
            }
        }
        if !(self.delay_step > 0.0) {
            return Err(domain("pump delay step must be positive"));
        }
        if !(self.rep_rate > 0.0 && self.rep_rate.is_finite()) {
            return Err(domain("EPS repetition rate must be positive"));
        }
        if !(self.pump_fwhm > 0.0) {
            return Err(domain("pump FWHM must be positive"));
        }
        let steps = self.pump_delay / self.delay_step;
        if (steps - steps.round()).abs() > 1e-6 {
            return Err(config(format!(
                "pump delay {} s is not a multiple of the {} s step",
                self.pump_delay, self.delay_step
            )));
        }
        self.accidental_herald_prob().map(|_| ())
    }

    pub fn pump_delay_steps(&self) -> i64 {
        (self.pump_delay / self.delay_step).round() as i64
    }

    /// Per-pulse probability of an uncorrelated photon at the herald
    /// detector, chosen so the measured CAR equals `car` despite the
    /// intrinsic `1 + 1/pair_prob`. Zero when the two agree.
    pub fn accidental_herald_prob(&self) -> Result<f64> {
        let (p, c, eta) = (self.pair_prob, self.car, self.herald_efficiency);
        if c <= 1.0 {
            return Ok(1.0);
        }
        let excess = 1.0 + p - c * p;
        let prob = eta * excess / (c - 1.0);
        if prob < -1e-12 {
            return Err(config(format!("CAR {c} exceeds the intrinsic 1 + 1/p = {} of pair_prob {p}", 1.0 + 1.0 / p)));
        }
        Ok(prob.clamp(0.0, 1.0))
    }
}

/// Move the pump delay to `steps` increments; `max_steps` bounds the scan.
pub fn set_pump_delay(cfg: &EpsSourceConfig, steps: i64, max_steps: i64) -> Result<EpsSourceConfig> {
    if steps.abs() > max_steps {
        return Err(domain(format!("pump delay step {steps} outside the scan range ±{max_steps}")));
    }
    Ok(EpsSourceConfig { pump_delay: steps as f64 * cfg.delay_step, ..*cfg })
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct WcsEmission {
    pub pulse_index: u64,
    pub photons: u32,
    pub emission_time: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct EpsEmission {
    pub pulse_index: u64,
    pub pairs: u32,
    /// Idlers that reach the herald detector.
    pub herald_photons: u32,
    /// Signals that reach the coupler.
    pub signal_photons: u32,
    /// Uncorrelated photons delivered to the herald detector.
    pub accidental_heralds: u32,
    pub emission_time: f64,
}

/// Everything both sources emitted in one pulse slot.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct EmissionRecord {
    pub pulse_index: u64,
    pub photons_a: u32,
    pub pairs: u32,
    pub herald_photons: u32,
    pub signal_photons: u32,
    pub accidental_heralds: u32,
    pub wcs_emission_time: f64,
    /// Pair emission time, including the pump delay.
    pub emission_time: f64,
}

impl EmissionRecord {
    pub fn combine(wcs: WcsEmission, eps: EpsEmission) -> Self {
        debug_assert_eq!(wcs.pulse_index, eps.pulse_index);
        Self {
            pulse_index: eps.pulse_index,
            photons_a: wcs.photons,
            pairs: eps.pairs,
            herald_photons: eps.herald_photons,
            signal_photons: eps.signal_photons,
            accidental_heralds: eps.accidental_heralds,
            wcs_emission_time: wcs.emission_time,
            emission_time: eps.emission_time,
        }
    }
}

pub fn sample_wcs<R: Rng + ?Sized>(cfg: &WcsSourceConfig, pulse_index: u64, rng: &mut R) -> WcsEmission {
    WcsEmission {
        pulse_index,
        photons: poisson(rng, cfg.n_bar),
        emission_time: pulse_index as f64 / cfg.rep_rate + cfg.center_offset,
    }
}

/// Poisson pair emission with independent idler and signal losses.
pub fn sample_eps<R: Rng + ?Sized>(cfg: &EpsSourceConfig, pulse_index: u64, rng: &mut R) -> EpsEmission {
    let pairs = poisson(rng, cfg.pair_prob);
    let herald_photons = binomial(rng, pairs, cfg.herald_efficiency);
    let signal_photons = binomial(rng, pairs, cfg.signal_efficiency);
    let accidental = cfg.accidental_herald_prob().unwrap_or(0.0);
    EpsEmission {
        pulse_index,
        pairs,
        herald_photons,
        signal_photons,
        accidental_heralds: bernoulli(rng, accidental) as u32,
        emission_time: pulse_index as f64 / cfg.rep_rate + cfg.pump_delay,
    }
}
