//! Scenario files: a complete experiment description in TOML, with units
//! spelled out in the key names.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::acquisition::{DetectorConfig, DetectorLabel};
use crate::error::{Error, Result};
use crate::hom::{effective_bandwidth, pulse_to_angular_bandwidth, AngularBandwidth};
use crate::link::{ClassicalChannel, Direction, FiberLink};
use crate::sources::{car_to_pair_prob, EpsSourceConfig, WcsSourceConfig};
use crate::sync::ClockModel;
use crate::PS;

pub const BASELINE: &str = include_str!("../../../presets/baseline.scenario");
pub const LOOP1: &str = include_str!("../../../presets/loop1.scenario");
pub const LOOP2: &str = include_str!("../../../presets/loop2.scenario");

/// Names of the bundled presets, in the order of [`preset`].
pub const PRESETS: [&str; 3] = ["baseline", "loop1", "loop2"];

pub fn preset(name: &str) -> Option<Scenario> {
    let text = match name {
        "baseline" => BASELINE,
        "loop1" => LOOP1,
        "loop2" => LOOP2,
        _ => return None,
    };
    Some(Scenario::parse(text).expect("bundled presets are valid"))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WcsSection {
    pub n_bar: f64,
    pub pulse_fwhm_ps: f64,
    pub rep_rate_hz: f64,
    #[serde(default)]
    pub center_offset_ps: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EpsSection {
    pub car: f64,
    /// Derived from `car` when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pair_prob: Option<f64>,
    pub delay_step_ps: f64,
    #[serde(default)]
    pub pump_delay_steps: i64,
    pub herald_efficiency: f64,
    pub signal_efficiency: f64,
    pub pump_fwhm_ps: f64,
    pub rep_rate_hz: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinkSection {
    pub length_m: f64,
    pub loss_db: f64,
    /// Noise photons per second reaching the coupler per mW of launch power.
    #[serde(default)]
    pub raman_coeff: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassicalSection {
    pub launch_power_dbm: f64,
    pub direction: Direction,
    #[serde(default = "default_co_factor")]
    pub co_factor: f64,
}

fn default_co_factor() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClockSection {
    pub rep_rate_hz: f64,
    pub jitter_rms_ps: f64,
    #[serde(default)]
    pub static_offset_ps: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetectorSection {
    pub efficiency: f64,
    pub dark_prob_per_bin: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetectorsSection {
    pub herald: DetectorSection,
    pub snspd1: DetectorSection,
    pub snspd2: DetectorSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpectralSection {
    /// Filter in front of the coupler on the WCS path.
    pub hom_filter_ghz: f64,
    /// Filter in front of the herald detector; sets the heralded photon's band.
    pub herald_filter_ghz: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScanSection {
    pub start_step: i64,
    pub stop_step: i64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AcquisitionSection {
    pub sampling_rate_hz: f64,
    #[serde(default)]
    pub window_bins: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub seed: u64,
    pub integration_time_s: f64,
    pub wcs: WcsSection,
    pub eps: EpsSection,
    pub link: LinkSection,
    pub classical: ClassicalSection,
    pub clock: ClockSection,
    pub detectors: DetectorsSection,
    pub spectral: SpectralSection,
    pub scan: ScanSection,
    pub acquisition: AcquisitionSection,
}

fn line_of_offset(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].matches('\n').count() + 1
}

/// Line of `key` inside `[section]` (dotted for nested tables), falling back
/// to the section header, then to line 1.
fn locate(text: &str, section: &str, key: &str) -> usize {
    let mut current = String::new();
    let mut header_line = None;
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
            current = name.trim().to_string();
            if current == section {
                header_line = Some(i + 1);
            }
            continue;
        }
        if current == section {
            if let Some((k, _)) = line.split_once('=') {
                if k.trim() == key {
                    return i + 1;
                }
            }
        }
    }
    header_line.unwrap_or(1)
}

struct Problem {
    section: &'static str,
    key: &'static str,
    msg: String,
}

impl Scenario {
    /// Parses and validates; errors carry the offending line.
    pub fn parse(text: &str) -> Result<Self> {
        let scn: Scenario = toml::from_str(text).map_err(|e| Error::Parse {
            line: e.span().map_or(1, |s| line_of_offset(text, s.start)),
            msg: e.message().to_string(),
        })?;
        if let Some(p) = scn.problems().into_iter().next() {
            let key = if p.section.is_empty() { p.key.to_string() } else { format!("{}.{}", p.section, p.key) };
            return Err(Error::Parse { line: locate(text, p.section, p.key), msg: format!("{key} {}", p.msg) });
        }
        Ok(scn)
    }

    pub fn from_file(path: &std::path::Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scenarios always serialize")
    }

    /// SHA-256 of the canonical serialization.
    pub fn digest(&self) -> String {
        let hash = Sha256::digest(self.to_toml().as_bytes());
        let mut hex = String::with_capacity(64);
        for b in hash.iter() {
            write!(hex, "{b:02x}").expect("writing to a String");
        }
        hex
    }

    pub fn validate(&self) -> Result<()> {
        match self.problems().into_iter().next() {
            Some(p) if p.section.is_empty() => Err(Error::Config(format!("{} {}", p.key, p.msg))),
            Some(p) => Err(Error::Config(format!("{}.{} {}", p.section, p.key, p.msg))),
            None => Ok(()),
        }
    }

    fn problems(&self) -> Vec<Problem> {
        let mut out = Vec::new();
        let mut check = |ok: bool, section: &'static str, key: &'static str, msg: String| {
            if !ok {
                out.push(Problem { section, key, msg });
            }
        };
        let positive = |v: f64| v > 0.0 && v.is_finite();
        let prob = |v: f64| (0.0..=1.0).contains(&v);

        check(positive(self.integration_time_s), "", "integration_time_s", "must be > 0".into());

        let w = &self.wcs;
        check(w.n_bar >= 0.0 && w.n_bar < 1.0, "wcs", "n_bar", format!("must lie in [0, 1), got {}", w.n_bar));
        check(positive(w.pulse_fwhm_ps), "wcs", "pulse_fwhm_ps", "must be > 0".into());
        check(positive(w.rep_rate_hz), "wcs", "rep_rate_hz", "must be > 0".into());
        check(w.center_offset_ps.is_finite(), "wcs", "center_offset_ps", "must be finite".into());

        let e = &self.eps;
        check(e.car > 1.0 && e.car.is_finite(), "eps", "car", format!("must exceed 1, got {}", e.car));
        match e.pair_prob {
            Some(p) => check(p > 0.0 && p < 1.0, "eps", "pair_prob", format!("must lie in (0, 1), got {p}")),
            None => check(
                car_to_pair_prob(e.car).is_ok(),
                "eps",
                "car",
                format!("CAR {} implies a pair probability >= 1; set pair_prob", e.car),
            ),
        }
        check(positive(e.delay_step_ps), "eps", "delay_step_ps", "must be > 0".into());
        check(prob(e.herald_efficiency), "eps", "herald_efficiency", "must lie in [0, 1]".into());
        check(prob(e.signal_efficiency), "eps", "signal_efficiency", "must lie in [0, 1]".into());
        check(positive(e.pump_fwhm_ps), "eps", "pump_fwhm_ps", "must be > 0".into());
        check(positive(e.rep_rate_hz), "eps", "rep_rate_hz", "must be > 0".into());
        check(
            e.rep_rate_hz == w.rep_rate_hz,
            "eps",
            "rep_rate_hz",
            format!("must equal wcs.rep_rate_hz ({})", w.rep_rate_hz),
        );

        let l = &self.link;
        check(l.length_m >= 0.0 && l.length_m.is_finite(), "link", "length_m", "must be >= 0".into());
        check(l.loss_db >= 0.0 && l.loss_db.is_finite(), "link", "loss_db", format!("must be >= 0, got {}", l.loss_db));
        check(l.raman_coeff >= 0.0 && l.raman_coeff.is_finite(), "link", "raman_coeff", "must be >= 0".into());

        let c = &self.classical;
        check(c.launch_power_dbm.is_finite(), "classical", "launch_power_dbm", "must be finite".into());
        check(c.co_factor >= 0.0 && c.co_factor.is_finite(), "classical", "co_factor", "must be >= 0".into());

        let k = &self.clock;
        check(positive(k.rep_rate_hz), "clock", "rep_rate_hz", "must be > 0".into());
        check(
            k.rep_rate_hz == w.rep_rate_hz,
            "clock",
            "rep_rate_hz",
            format!("must equal wcs.rep_rate_hz ({})", w.rep_rate_hz),
        );
        check(k.jitter_rms_ps >= 0.0 && k.jitter_rms_ps.is_finite(), "clock", "jitter_rms_ps", "must be >= 0".into());
        check(k.static_offset_ps.is_finite(), "clock", "static_offset_ps", "must be finite".into());

        for (name, d) in [
            ("detectors.herald", &self.detectors.herald),
            ("detectors.snspd1", &self.detectors.snspd1),
            ("detectors.snspd2", &self.detectors.snspd2),
        ] {
            check(prob(d.efficiency), name, "efficiency", format!("must lie in [0, 1], got {}", d.efficiency));
            check(
                (0.0..1.0).contains(&d.dark_prob_per_bin),
                name,
                "dark_prob_per_bin",
                format!("must lie in [0, 1), got {}", d.dark_prob_per_bin),
            );
        }

        check(positive(self.spectral.hom_filter_ghz), "spectral", "hom_filter_ghz", "must be > 0".into());
        check(positive(self.spectral.herald_filter_ghz), "spectral", "herald_filter_ghz", "must be > 0".into());

        check(self.scan.start_step <= self.scan.stop_step, "scan", "stop_step", "must not be below start_step".into());
        check(
            self.eps.pump_delay_steps.abs() <= self.max_steps(),
            "eps",
            "pump_delay_steps",
            "outside the scan range".into(),
        );

        let a = &self.acquisition;
        check(positive(a.sampling_rate_hz), "acquisition", "sampling_rate_hz", "must be > 0".into());
        let ratio = a.sampling_rate_hz / w.rep_rate_hz;
        check(
            ratio >= 1.0 && (ratio - ratio.round()).abs() < 1e-9,
            "acquisition",
            "sampling_rate_hz",
            format!("must be an integer multiple of the repetition rate (ratio {ratio})"),
        );
        if !out.is_empty() {
            return out;
        }
        if let Err(err) = self.eps_config().and_then(|c| c.accidental_herald_prob()) {
            out.push(Problem { section: "eps", key: "car", msg: err.to_string() });
        }
        out
    }

    pub fn max_steps(&self) -> i64 {
        self.scan.start_step.abs().max(self.scan.stop_step.abs())
    }

    pub fn scan_steps(&self) -> Vec<i64> {
        (self.scan.start_step..=self.scan.stop_step).collect()
    }

    pub fn rep_rate(&self) -> f64 {
        self.clock.rep_rate_hz
    }

    pub fn bin_width(&self) -> f64 {
        self.acquisition.sampling_rate_hz.recip()
    }

    /// Sampling bins per pulse period.
    pub fn bins_per_pulse(&self) -> u64 {
        (self.acquisition.sampling_rate_hz / self.rep_rate()).round() as u64
    }

    /// Pulses in one integration period.
    pub fn pulses_per_point(&self) -> u64 {
        (self.integration_time_s * self.rep_rate()).round() as u64
    }

    pub fn wcs_config(&self) -> WcsSourceConfig {
        WcsSourceConfig {
            n_bar: self.wcs.n_bar,
            pulse_fwhm: self.wcs.pulse_fwhm_ps * PS,
            rep_rate: self.wcs.rep_rate_hz,
            center_offset: self.wcs.center_offset_ps * PS,
        }
    }

    pub fn eps_config(&self) -> Result<EpsSourceConfig> {
        let e = &self.eps;
        let cfg = EpsSourceConfig {
            pair_prob: match e.pair_prob {
                Some(p) => p,
                None => car_to_pair_prob(e.car)?,
            },
            car: e.car,
            pump_delay: e.pump_delay_steps as f64 * e.delay_step_ps * PS,
            delay_step: e.delay_step_ps * PS,
            herald_efficiency: e.herald_efficiency,
            signal_efficiency: e.signal_efficiency,
            rep_rate: e.rep_rate_hz,
            pump_fwhm: e.pump_fwhm_ps * PS,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn fiber(&self) -> Result<FiberLink> {
        FiberLink::new(self.link.length_m, self.link.loss_db, self.link.raman_coeff)
    }

    pub fn channel(&self) -> ClassicalChannel {
        ClassicalChannel {
            launch_power_dbm: self.classical.launch_power_dbm,
            direction: self.classical.direction,
            co_factor: self.classical.co_factor,
        }
    }

    pub fn clock_model(&self) -> ClockModel {
        ClockModel {
            rep_rate: self.clock.rep_rate_hz,
            recovered_jitter_rms: self.clock.jitter_rms_ps * PS,
            static_offset: self.clock.static_offset_ps * PS,
        }
    }

    pub fn detector(&self, label: DetectorLabel) -> DetectorConfig {
        let d = match label {
            DetectorLabel::Herald => &self.detectors.herald,
            DetectorLabel::Snspd1 => &self.detectors.snspd1,
            DetectorLabel::Snspd2 => &self.detectors.snspd2,
        };
        DetectorConfig { efficiency: d.efficiency, dark_prob_per_bin: d.dark_prob_per_bin, label }
    }

    /// Effective bandwidths of the WCS and heralded photons: each source's
    /// transform limit, cut by the narrowest filter in its path.
    pub fn bandwidths(&self) -> Result<(AngularBandwidth, AngularBandwidth)> {
        let hom = AngularBandwidth::from_ghz(self.spectral.hom_filter_ghz)?;
        let herald = AngularBandwidth::from_ghz(self.spectral.herald_filter_ghz)?;
        let a = effective_bandwidth(pulse_to_angular_bandwidth(self.wcs.pulse_fwhm_ps * PS)?, hom);
        let b = effective_bandwidth(
            effective_bandwidth(pulse_to_angular_bandwidth(self.eps.pump_fwhm_ps * PS)?, herald),
            hom,
        );
        Ok((a, b))
    }

    /// Raman surrogate noise photons per pulse at the coupler.
    pub fn raman_noise_per_pulse(&self) -> Result<f64> {
        Ok(crate::link::raman_noise_prob_per_pulse(
            &self.channel(),
            &self.fiber()?,
            self.rep_rate(),
            self.bin_width() * (self.acquisition.window_bins * 2 + 1) as f64,
        ))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_parse_and_validate() {
        for name in PRESETS {
            let s = preset(name).unwrap();
            s.validate().unwrap();
            assert_eq!(s.bins_per_pulse(), 12);
            assert_eq!(s.scan_steps().len(), 41);
            assert_eq!(s.pulses_per_point(), 6_000_000_000);
        }
        assert!(preset("nope").is_none());
    }

    #[test]
    fn preset_numbers() {
        assert_eq!(preset("baseline").unwrap().wcs.n_bar, 0.007);
        assert_eq!(preset("loop1").unwrap().wcs.n_bar, 0.012);
        assert_eq!(preset("loop2").unwrap().wcs.n_bar, 0.003);
        let l = preset("loop1").unwrap();
        assert_eq!(l.link.loss_db, 6.0);
        assert_eq!(l.link.length_m, 4300.0);
        assert_eq!(l.classical.launch_power_dbm, -21.0);
        assert_eq!(l.clock.jitter_rms_ps, 20.0);
        assert_eq!(l.eps.delay_step_ps, 10.0);
        assert_eq!(l.eps.car, 40.0);
    }

    #[test]
    fn bandwidths_follow_filters() {
        let (a, b) = preset("baseline").unwrap().bandwidths().unwrap();
        assert_close!(a.ghz(), 0.441 / 80e-12 / 1e9, 1e-9);
        assert_close!(b.ghz(), 5.0, 1e-12);
    }

    #[test]
    fn round_trip_is_lossless() {
        for name in PRESETS {
            let s = preset(name).unwrap();
            let again = Scenario::parse(&s.to_toml()).unwrap();
            assert_eq!(s, again);
            assert_eq!(s.digest(), again.digest());
        }
        assert_ne!(preset("loop1").unwrap().digest(), preset("loop2").unwrap().digest());
    }

    #[test]
    fn semantic_errors_point_at_the_key() {
        let text = LOOP1.replace("loss_db = 6.0", "loss_db = -6.0");
        let expected = LOOP1.lines().position(|l| l.trim_start().starts_with("loss_db")).unwrap() + 1;
        match Scenario::parse(&text) {
            Err(Error::Parse { line, msg }) => {
                assert_eq!(line, expected);
                assert!(msg.contains(">= 0"), "{msg}");
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn unknown_keys_and_bad_types_rejected_with_lines() {
        let text = LOOP1.replace("[link]\n", "[link]\nlenght_m = 3\n");
        let expected = text.lines().position(|l| l.starts_with("lenght_m")).unwrap() + 1;
        match Scenario::parse(&text) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, expected),
            other => panic!("{other:?}"),
        }
        let text = LOOP1.replace("n_bar = 0.012", "n_bar = \"lots\"");
        assert!(matches!(Scenario::parse(&text), Err(Error::Parse { .. })));
    }

    #[test]
    fn mismatched_rates_rejected() {
        let mut s = preset("baseline").unwrap();
        s.clock.rep_rate_hz = 50e6;
        assert!(s.validate().is_err());
        let mut s = preset("baseline").unwrap();
        s.acquisition.sampling_rate_hz = 1.25e8;
        assert!(s.validate().is_err());
    }
}
