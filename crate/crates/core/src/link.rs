//! Fiber loss budgets and the classical-coexistence noise surrogate.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};
use crate::rng::binomial;

/// Group index of standard single-mode fiber near 1550 nm.
pub const FIBER_GROUP_INDEX: f64 = 1.4682;
const SPEED_OF_LIGHT: f64 = 299_792_458.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FiberLink {
    /// m
    pub length: f64,
    /// Total loss including splices and connectors, dB.
    pub loss_db: f64,
    /// One-way propagation delay, s.
    pub prop_delay: f64,
    /// Noise photons per second in the quantum channel per mW of classical
    /// launch power.
    pub raman_coeff: f64,
}

impl FiberLink {
    pub fn new(length: f64, loss_db: f64, raman_coeff: f64) -> Result<Self> {
        let link = Self { length, loss_db, prop_delay: length * FIBER_GROUP_INDEX / SPEED_OF_LIGHT, raman_coeff };
        link.validate()?;
        Ok(link)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.length >= 0.0 && self.length.is_finite()) {
            return Err(domain(format!("fiber length must be >= 0, got {}", self.length)));
        }
        if !(self.loss_db >= 0.0 && self.loss_db.is_finite()) {
            return Err(domain(format!("fiber loss must be >= 0 dB, got {}", self.loss_db)));
        }
        if !(self.prop_delay >= 0.0) {
            return Err(domain("propagation delay must be >= 0"));
        }
        if !(self.raman_coeff >= 0.0 && self.raman_coeff.is_finite()) {
            return Err(domain(format!("raman_coeff must be >= 0, got {}", self.raman_coeff)));
        }
        Ok(())
    }

    pub fn transmittance(&self) -> f64 {
        10f64.powf(-self.loss_db / 10.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Co,
    Counter,
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Direction::Co => "co",
            Direction::Counter => "counter",
        })
    }
}

impl FromStr for Direction {
    type Err = crate::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "co" => Ok(Direction::Co),
            "counter" => Ok(Direction::Counter),
            other => Err(domain(format!("direction must be 'co' or 'counter', got '{other}'"))),
        }
    }
}

/// Classical clock channel sharing the fiber with the quantum signal.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassicalChannel {
    pub launch_power_dbm: f64,
    pub direction: Direction,
    /// Noise multiplier applied when co-propagating; counter-propagation
    /// uses 1.
    pub co_factor: f64,
}

impl ClassicalChannel {
    pub fn direction_factor(&self) -> f64 {
        match self.direction {
            Direction::Counter => 1.0,
            Direction::Co => self.co_factor,
        }
    }
}

pub fn apply_loss_dbm(power_dbm: f64, loss_db: f64) -> Result<f64> {
    if !(loss_db >= 0.0) {
        return Err(domain(format!("loss must be >= 0 dB, got {loss_db}")));
    }
    Ok(power_dbm - loss_db)
}

/// Per-photon survival probability `10^(−loss/10)`.
pub fn transmittance(loss_db: f64) -> Result<f64> {
    if !(loss_db >= 0.0) {
        return Err(domain(format!("loss must be >= 0 dB, got {loss_db}")));
    }
    Ok(10f64.powf(-loss_db / 10.0))
}

pub fn dbm_to_mw(dbm: f64) -> f64 {
    10f64.powf(dbm / 10.0)
}

pub fn mw_to_dbm(mw: f64) -> f64 {
    10.0 * mw.log10()
}

/// Bernoulli thinning of a photon number through a lossy element.
pub fn thin<R: Rng + ?Sized>(photons: u32, transmittance: f64, rng: &mut R) -> u32 {
    binomial(rng, photons, transmittance)
}

fn noise_photons_per_coeff(channel: &ClassicalChannel, rep_rate: f64, detection_window: f64) -> f64 {
    let window = detection_window.min(rep_rate.recip());
    dbm_to_mw(channel.launch_power_dbm) * window * channel.direction_factor()
}

/// Probability that a Raman photon from the classical channel lands in a
/// pulse's detection window. Linear in launch power (mW) until clamped at 1.
pub fn raman_noise_prob_per_pulse(
    channel: &ClassicalChannel,
    link: &FiberLink,
    rep_rate: f64,
    detection_window: f64,
) -> f64 {
    (link.raman_coeff * noise_photons_per_coeff(channel, rep_rate, detection_window)).clamp(0.0, 1.0)
}

/// Coefficient that makes [`raman_noise_prob_per_pulse`] equal `target`.
pub fn calibrate_raman_coeff(
    target: f64,
    channel: &ClassicalChannel,
    rep_rate: f64,
    detection_window: f64,
) -> Result<f64> {
    if !(0.0..1.0).contains(&target) {
        return Err(domain(format!("target noise probability must lie in [0, 1), got {target}")));
    }
    let per = noise_photons_per_coeff(channel, rep_rate, detection_window);
    if per <= 0.0 {
        return Err(domain("classical channel delivers no power into the window"));
    }
    Ok(target / per)
}
