//! Threshold detectors, timetag streams and coincidence statistics.

use std::fmt;
use std::io::{BufRead, Write};
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{config, domain, Error, Result};
use crate::rng::{bernoulli, geometric_gap};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DetectorLabel {
    Herald,
    Snspd1,
    Snspd2,
}

impl fmt::Display for DetectorLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DetectorLabel::Herald => "herald",
            DetectorLabel::Snspd1 => "snspd1",
            DetectorLabel::Snspd2 => "snspd2",
        })
    }
}

impl FromStr for DetectorLabel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "herald" => Ok(DetectorLabel::Herald),
            "snspd1" => Ok(DetectorLabel::Snspd1),
            "snspd2" => Ok(DetectorLabel::Snspd2),
            other => Err(domain(format!("unknown detector label '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectorConfig {
    pub efficiency: f64,
    /// Probability of a background click in any one sampling bin.
    pub dark_prob_per_bin: f64,
    pub label: DetectorLabel,
}

impl DetectorConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.efficiency) {
            return Err(domain(format!("{} efficiency must lie in [0, 1], got {}", self.label, self.efficiency)));
        }
        if !(0.0..1.0).contains(&self.dark_prob_per_bin) {
            return Err(domain(format!(
                "{} dark probability must lie in [0, 1), got {}",
                self.label, self.dark_prob_per_bin
            )));
        }
        Ok(())
    }

    /// Probability that at least one of `photons` incident photons clicks.
    pub fn click_prob(&self, photons: u32) -> f64 {
        1.0 - (1.0 - self.efficiency).powi(photons as i32)
    }
}

/// Detection events of one detector, as sampling-bin indices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimetagStream {
    pub detector: DetectorLabel,
    bins: Vec<u64>,
    pub bin_width: f64,
    pub total_bins: u64,
}

impl TimetagStream {
    pub fn new(detector: DetectorLabel, bins: Vec<u64>, bin_width: f64, total_bins: u64) -> Result<Self> {
        if !(bin_width > 0.0 && bin_width.is_finite()) {
            return Err(domain(format!("bin width must be positive, got {bin_width}")));
        }
        if let Some(w) = bins.windows(2).find(|w| w[0] >= w[1]) {
            return Err(domain(format!("bins not strictly increasing at {} -> {}", w[0], w[1])));
        }
        if let Some(&last) = bins.last() {
            if last >= total_bins {
                return Err(domain(format!("bin {last} beyond total_bins {total_bins}")));
            }
        }
        Ok(Self { detector, bins, bin_width, total_bins })
    }

    /// Sorts and deduplicates raw bin indices before validating.
    pub fn from_unsorted(detector: DetectorLabel, mut bins: Vec<u64>, bin_width: f64, total_bins: u64) -> Result<Self> {
        bins.sort_unstable();
        bins.dedup();
        Self::new(detector, bins, bin_width, total_bins)
    }

    pub fn bins(&self) -> &[u64] {
        &self.bins
    }

    pub fn len(&self) -> usize {
        self.bins.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bins.is_empty()
    }

    pub fn duration(&self) -> f64 {
        self.total_bins as f64 * self.bin_width
    }

    fn has_tag_within(&self, center: u64, window: u64) -> bool {
        let lo = center.saturating_sub(window);
        let i = self.bins.partition_point(|&b| b < lo);
        self.bins.get(i).is_some_and(|&b| b <= center.saturating_add(window))
    }

    fn contains(&self, bin: u64) -> bool {
        self.bins.binary_search(&bin).is_ok()
    }

    /// Writes the text format: a header line followed by one bin per line.
    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(
            w,
            "bin_width_ps={},total_bins={},detector={}",
            self.bin_width * 1e12,
            self.total_bins,
            self.detector
        )?;
        for b in &self.bins {
            writeln!(w, "{b}")?;
        }
        Ok(())
    }

    pub fn read_from<R: BufRead>(r: R) -> Result<Self> {
        let mut lines = r.lines().enumerate();
        let (_, header) = lines.next().ok_or(Error::Parse { line: 1, msg: "empty timetag file".into() })?;
        let header = header?;
        let (bin_width, total_bins, detector) =
            parse_header(header.trim()).map_err(|msg| Error::Parse { line: 1, msg })?;
        let mut bins = Vec::new();
        let mut prev: Option<u64> = None;
        for (i, line) in lines {
            let line = line?;
            let text = line.trim();
            if text.is_empty() {
                continue;
            }
            let lineno = i + 1;
            let b: u64 = text
                .parse()
                .map_err(|_| Error::Parse { line: lineno, msg: format!("expected a bin index, got '{text}'") })?;
            if prev.is_some_and(|p| b <= p) {
                return Err(Error::Parse { line: lineno, msg: "bin indices must be strictly increasing".into() });
            }
            if b >= total_bins {
                return Err(Error::Parse { line: lineno, msg: format!("bin {b} beyond total_bins {total_bins}") });
            }
            prev = Some(b);
            bins.push(b);
        }
        Self::new(detector, bins, bin_width, total_bins)
    }
}

fn parse_header(header: &str) -> std::result::Result<(f64, u64, DetectorLabel), String> {
    let mut width = None;
    let mut total = None;
    let mut label = None;
    for field in header.split(',') {
        let (k, v) = field.split_once('=').ok_or_else(|| format!("malformed header field '{field}'"))?;
        match k.trim() {
            "bin_width_ps" => width = Some(v.trim().parse::<f64>().map_err(|e| format!("bin_width_ps: {e}"))? * 1e-12),
            "total_bins" => total = Some(v.trim().parse::<u64>().map_err(|e| format!("total_bins: {e}"))?),
            "detector" => label = Some(v.trim().parse::<DetectorLabel>().map_err(|e| e.to_string())?),
            other => return Err(format!("unknown header field '{other}'")),
        }
    }
    match (width, total, label) {
        (Some(w), Some(t), Some(l)) => Ok((w, t, l)),
        _ => Err("header needs bin_width_ps, total_bins and detector".into()),
    }
}

/// Which bins may produce background clicks.
#[derive(Debug, Clone, Copy)]
pub enum DarkScope<'a> {
    /// Every bin of the acquisition.
    All,
    /// Only the listed bins, e.g. when acquisition is gated on heralds.
    Bins(&'a [u64]),
}

/// Turns incident photons into threshold-detector tags.
///
/// Each arrival is detected with the configured efficiency, each bin in
/// `darks` independently fires with the dark probability, and any number of
/// events in one bin collapse to a single tag.
pub fn detect<R: Rng + ?Sized>(
    arrivals: &[f64],
    cfg: &DetectorConfig,
    bin_width: f64,
    total_bins: u64,
    darks: DarkScope<'_>,
    rng: &mut R,
) -> Result<TimetagStream> {
    cfg.validate()?;
    let duration = total_bins as f64 * bin_width;
    let mut bins = Vec::with_capacity(arrivals.len());
    for &t in arrivals {
        if !(0.0..duration).contains(&t) {
            return Err(domain(format!("arrival time {t} s outside [0, {duration})")));
        }
        if bernoulli(rng, cfg.efficiency) {
            bins.push(((t / bin_width) as u64).min(total_bins - 1));
        }
    }
    let d = cfg.dark_prob_per_bin;
    match darks {
        DarkScope::All => {
            let mut b = geometric_gap(rng, d);
            while b < total_bins {
                bins.push(b);
                b = b.saturating_add(1).saturating_add(geometric_gap(rng, d));
            }
        }
        DarkScope::Bins(gate) => {
            for &b in gate {
                if b < total_bins && bernoulli(rng, d) {
                    bins.push(b);
                }
            }
        }
    }
    TimetagStream::from_unsorted(cfg.label, bins, bin_width, total_bins)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Singles {
    pub herald: u64,
    pub d1: u64,
    pub d2: u64,
}

/// Twofold counts, each anchored on the first-named stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Pairs {
    pub herald_d1: u64,
    pub herald_d2: u64,
    pub d1_d2: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoincidenceResult {
    pub threefolds: u64,
    pub singles: Singles,
    pub pairs: Pairs,
    /// s
    pub duration: f64,
}

fn same_width(a: &TimetagStream, b: &TimetagStream) -> bool {
    (a.bin_width - b.bin_width).abs() <= 1e-12 * a.bin_width.abs().max(b.bin_width.abs())
}

fn count_anchored(anchor: &TimetagStream, other: &TimetagStream, window: u64) -> u64 {
    anchor.bins.iter().filter(|&&b| other.has_tag_within(b, window)).count() as u64
}

/// Counts herald tags that have both a `d1` and a `d2` tag within
/// `±window_bins`. Each herald tag contributes at most one threefold.
pub fn count_threefold(
    herald: &TimetagStream,
    d1: &TimetagStream,
    d2: &TimetagStream,
    window_bins: u64,
) -> Result<CoincidenceResult> {
    if !same_width(herald, d1) || !same_width(herald, d2) {
        return Err(config(format!(
            "bin widths differ: herald {} s, d1 {} s, d2 {} s",
            herald.bin_width, d1.bin_width, d2.bin_width
        )));
    }
    let threefolds =
        herald.bins.iter().filter(|&&h| d1.has_tag_within(h, window_bins) && d2.has_tag_within(h, window_bins)).count()
            as u64;
    Ok(CoincidenceResult {
        threefolds,
        singles: Singles { herald: herald.len() as u64, d1: d1.len() as u64, d2: d2.len() as u64 },
        pairs: Pairs {
            herald_d1: count_anchored(herald, d1, window_bins),
            herald_d2: count_anchored(herald, d2, window_bins),
            d1_d2: count_anchored(d1, d2, window_bins),
        },
        duration: herald.duration(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "value", rename_all = "snake_case")]
pub enum CarValue {
    Finite(f64),
    /// Coincidences but no accidentals in the reference offset.
    Infinite,
    /// No coincidences at all, or no heralds.
    Undefined,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CarMeasurement {
    pub coincidences: u64,
    pub accidentals: u64,
    pub value: CarValue,
}

impl CarMeasurement {
    pub fn finite(&self) -> Option<f64> {
        match self.value {
            CarValue::Finite(v) => Some(v),
            _ => None,
        }
    }
}

/// Same-bin signal/herald coincidences over the coincidences found at
/// `offset_bins`, which should be a whole number of pulse periods.
pub fn compute_car(signal: &TimetagStream, herald: &TimetagStream, offset_bins: u64) -> Result<CarMeasurement> {
    if !same_width(signal, herald) {
        return Err(config("signal and herald bin widths differ"));
    }
    if offset_bins == 0 {
        return Err(domain("accidental offset must be at least one pulse period"));
    }
    let coincidences = herald.bins.iter().filter(|&&h| signal.contains(h)).count() as u64;
    let accidentals = herald.bins.iter().filter(|&&h| signal.contains(h.saturating_add(offset_bins))).count() as u64;
    let value = match (herald.is_empty(), coincidences, accidentals) {
        (true, _, _) | (false, 0, 0) => CarValue::Undefined,
        (false, _, 0) => CarValue::Infinite,
        (false, c, a) => CarValue::Finite(c as f64 / a as f64),
    };
    Ok(CarMeasurement { coincidences, accidentals, value })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HeraldingEstimate {
    pub mu: f64,
    /// Set when the inputs imply an efficiency above one.
    pub inconsistent: bool,
}

/// `P(h|s) = P_cc / (P_h · η_s)`.
pub fn estimate_heralding_efficiency(p_cc: f64, p_h: f64, eta_s: f64) -> Result<HeraldingEstimate> {
    if !(0.0..=1.0).contains(&p_cc) {
        return Err(domain(format!("P_cc must lie in [0, 1], got {p_cc}")));
    }
    for (name, v) in [("P_h", p_h), ("eta_s", eta_s)] {
        if !(v > 0.0 && v <= 1.0) {
            return Err(domain(format!("{name} must lie in (0, 1], got {v}")));
        }
    }
    let mu = p_cc / (p_h * eta_s);
    if mu > 1.0 {
        log::warn!("heralding efficiency estimate {mu} exceeds 1; inputs are inconsistent");
    }
    Ok(HeraldingEstimate { mu, inconsistent: mu > 1.0 })
}


#[cfg(test)]
mod props {
    use super::*;
    use proptest::collection::btree_set;
    use proptest::prelude::*;

    const BW: f64 = 1e-9;

    fn tags(label: DetectorLabel) -> impl Strategy<Value = TimetagStream> {
        btree_set(0u64..400, 0..80)
            .prop_map(move |s| TimetagStream::new(label, s.into_iter().collect(), BW, 400).unwrap())
    }

    proptest! {
        #[test]
        fn threefold_symmetric_and_monotone(
            h in tags(DetectorLabel::Herald),
            a in tags(DetectorLabel::Snspd1),
            b in tags(DetectorLabel::Snspd2),
            w in 0u64..6,
        ) {
            let r = count_threefold(&h, &a, &b, w).unwrap();
            let swapped = count_threefold(&h, &b, &a, w).unwrap();
            prop_assert_eq!(r.threefolds, swapped.threefolds);
            let wider = count_threefold(&h, &a, &b, w + 1).unwrap();
            prop_assert!(wider.threefolds >= r.threefolds);
            prop_assert!(r.threefolds <= r.pairs.herald_d1.min(r.pairs.herald_d2));
            prop_assert!(r.pairs.herald_d1 <= r.singles.herald);
            prop_assert!(r.pairs.herald_d2 <= r.singles.herald);
        }

        #[test]
        fn same_bin_ordering_of_counts(
            h in tags(DetectorLabel::Herald),
            a in tags(DetectorLabel::Snspd1),
            b in tags(DetectorLabel::Snspd2),
        ) {
            let r = count_threefold(&h, &a, &b, 0).unwrap();
            let min_pair = r.pairs.herald_d1.min(r.pairs.herald_d2).min(r.pairs.d1_d2);
            let min_single = r.singles.herald.min(r.singles.d1).min(r.singles.d2);
            prop_assert!(r.threefolds <= min_pair);
            prop_assert!(min_pair <= min_single);
        }
    }
}
