//! End-to-end simulation: sources → link → recovered clock → coupler →
//! detectors → coincidence counting.
//!
//! Two engines produce the same threefold statistics. The per-pulse engine
//! walks every pulse and emits full timetag streams; it is the reference and
//! backs timetag export. The herald-gated engine jumps between pulses on
//! which the herald detector fires, which is exact for same-bin counting
//! because no threefold can occur without a herald tag, and makes 60 s
//! integrations (6×10⁹ pulses) per delay point practical.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::acquisition::{
    compute_car, count_threefold, detect, CarMeasurement, CoincidenceResult, DarkScope, DetectorConfig, DetectorLabel,
    TimetagStream,
};
use crate::analysis::{Interferogram, InterferogramPoint};
use crate::error::{config, Result};
use crate::hom::{mode_overlap, sample_ports, AngularBandwidth};
use crate::rng::{bernoulli, binomial, geometric_gap, poisson, substream, zero_truncated_poisson, SimRng};
use crate::scenario::Scenario;
use crate::sources::{sample_eps, sample_wcs, set_pump_delay, EpsSourceConfig, WcsSourceConfig};
use crate::sync::{recovered_pulse_time, ClockModel};

/// Stream numbers 0..2³² belong to delay points; auxiliary runs sit above.
const AUX_STREAM: u64 = 1 << 40;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PointSummary {
    pub step: i64,
    /// s
    pub delay: f64,
    pub pulses: u64,
    pub coincidences: CoincidenceResult,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanOutput {
    pub interferogram: Interferogram,
    pub points: Vec<PointSummary>,
}

/// Scenario quantities resolved once per run.
#[derive(Debug, Clone)]
struct Setup {
    wcs: WcsSourceConfig,
    eps: EpsSourceConfig,
    clock: ClockModel,
    herald: DetectorConfig,
    d1: DetectorConfig,
    d2: DetectorConfig,
    bw_a: AngularBandwidth,
    bw_b: AngularBandwidth,
    raman: f64,
    bin_width: f64,
    bins_per_pulse: u64,
    max_steps: i64,
    window_bins: u64,
}

impl Setup {
    fn new(scn: &Scenario) -> Result<Self> {
        scn.validate()?;
        let (bw_a, bw_b) = scn.bandwidths()?;
        Ok(Self {
            wcs: scn.wcs_config(),
            eps: scn.eps_config()?,
            clock: scn.clock_model(),
            herald: scn.detector(DetectorLabel::Herald),
            d1: scn.detector(DetectorLabel::Snspd1),
            d2: scn.detector(DetectorLabel::Snspd2),
            bw_a,
            bw_b,
            raman: scn.raman_noise_per_pulse()?,
            bin_width: scn.bin_width(),
            bins_per_pulse: scn.bins_per_pulse(),
            max_steps: scn.max_steps(),
            window_bins: scn.acquisition.window_bins,
        })
    }

    fn period(&self) -> f64 {
        self.clock.period()
    }

    /// Photons are registered half a bin after their pulse slot opens, so
    /// sub-nanosecond offsets never move them across a bin edge.
    fn latency(&self) -> f64 {
        0.5 * self.bin_width
    }

    /// Interferes `n_sig` heralded photons with pulse `k` of the WCS and
    /// appends the detector-arrival times of every photon leaving each port.
    /// `sig_offset` is the signal's delay relative to the pulse slot.
    fn couple(
        &self,
        k: u64,
        n_sig: u32,
        sig_offset: f64,
        rng: &mut SimRng,
        port_a: &mut Vec<f64>,
        port_b: &mut Vec<f64>,
    ) {
        let wcs = sample_wcs(&self.wcs, k, rng);
        let slot = k as f64 * self.period();
        // The WCS node fires on the recovered clock, not the master clock.
        let recovered = recovered_pulse_time(&self.clock, k, rng) - slot;
        let wcs_offset = (wcs.emission_time - slot) + recovered;
        let noise = bernoulli(rng, self.raman) as u32;
        if wcs.photons == 0 && n_sig == 0 && noise == 0 {
            return;
        }
        let overlap = mode_overlap(self.bw_a, self.bw_b, sig_offset - wcs_offset).sqrt();
        let (mut a, mut b) = sample_ports(wcs.photons, n_sig, overlap, rng);
        // Noise photons share no mode with either input.
        let noise_a = binomial(rng, noise, 0.5);
        a += noise_a;
        b += noise - noise_a;
        let t = slot + self.latency() + 0.5 * (sig_offset + wcs_offset);
        port_a.extend(std::iter::repeat_n(t, a as usize));
        port_b.extend(std::iter::repeat_n(t, b as usize));
    }

    fn eps_at(&self, step: i64) -> Result<EpsSourceConfig> {
        set_pump_delay(&self.eps, step, self.max_steps)
    }
}

/// Threefold statistics for one pump-delay setting over `pulses` pulses.
///
/// Uses the herald-gated engine; coincidence windows wider than one bin
/// need the per-pulse engine ([`simulate_streams`]).
pub fn simulate_point(scn: &Scenario, step: i64, pulses: u64, rng: &mut SimRng) -> Result<CoincidenceResult> {
    let setup = Setup::new(scn)?;
    gated_point(&setup, step, pulses, rng)
}

fn gated_point(s: &Setup, step: i64, pulses: u64, rng: &mut SimRng) -> Result<CoincidenceResult> {
    if s.window_bins != 0 {
        return Err(config("the herald-gated engine counts same-bin coincidences only (window_bins = 0)"));
    }
    let eps = s.eps_at(step)?;
    let total_bins = pulses * s.bins_per_pulse;
    let p = eps.pair_prob;
    let q = eps.herald_efficiency * s.herald.efficiency;
    let noise = 1.0 - (1.0 - s.herald.dark_prob_per_bin) * (1.0 - eps.accidental_herald_prob()? * s.herald.efficiency);
    let silent = (-p * q).exp();
    let fire = 1.0 - silent * (1.0 - noise);
    let true_given_fire = (1.0 - silent) / fire;
    let sig_offset = eps.pump_delay;

    let mut herald_bins = Vec::new();
    let (mut port_a, mut port_b) = (Vec::new(), Vec::new());
    let mut k = geometric_gap(rng, fire);
    while k < pulses {
        herald_bins.push(k * s.bins_per_pulse);
        // Idlers split into detected and missed pairs; the detected count
        // is conditioned on the herald having fired.
        let detected = if bernoulli(rng, true_given_fire) { zero_truncated_poisson(rng, p * q) } else { 0 };
        let missed = poisson(rng, p * (1.0 - q));
        let n_sig = binomial(rng, detected + missed, eps.signal_efficiency);
        s.couple(k, n_sig, sig_offset, rng, &mut port_a, &mut port_b);
        k = k.saturating_add(1).saturating_add(geometric_gap(rng, fire));
    }
    // Off-slot herald darks: they can never complete a threefold but do
    // count as herald singles.
    let stray = detect(&[], &s.herald, s.bin_width, total_bins, DarkScope::All, rng)?;
    herald_bins.extend(stray.bins().iter().filter(|&&b| b % s.bins_per_pulse != 0));
    let herald = TimetagStream::from_unsorted(DetectorLabel::Herald, herald_bins, s.bin_width, total_bins)?;
    // SNSPD darks matter only where a herald tag could complete them.
    let d1 = detect(&port_a, &s.d1, s.bin_width, total_bins, DarkScope::Bins(herald.bins()), rng)?;
    let d2 = detect(&port_b, &s.d2, s.bin_width, total_bins, DarkScope::Bins(herald.bins()), rng)?;
    count_threefold(&herald, &d1, &d2, 0)
}

/// Reference engine: every pulse of both sources is sampled and all three
/// detectors see darks in every bin. Returns herald, SNSPD1 and SNSPD2.
pub fn simulate_streams(scn: &Scenario, step: i64, pulses: u64, rng: &mut SimRng) -> Result<[TimetagStream; 3]> {
    let s = Setup::new(scn)?;
    let eps = s.eps_at(step)?;
    let total_bins = pulses * s.bins_per_pulse;
    let mut heralds = Vec::new();
    let (mut port_a, mut port_b) = (Vec::new(), Vec::new());
    for k in 0..pulses {
        let em = sample_eps(&eps, k, rng);
        let slot = k as f64 * s.period();
        let t_herald = em.emission_time + s.latency();
        let n_herald = em.herald_photons + em.accidental_heralds;
        heralds.extend(std::iter::repeat_n(t_herald, n_herald as usize));
        s.couple(k, em.signal_photons, em.emission_time - slot, rng, &mut port_a, &mut port_b);
    }
    Ok([
        detect(&heralds, &s.herald, s.bin_width, total_bins, DarkScope::All, rng)?,
        detect(&port_a, &s.d1, s.bin_width, total_bins, DarkScope::All, rng)?,
        detect(&port_b, &s.d2, s.bin_width, total_bins, DarkScope::All, rng)?,
    ])
}

/// Threefold counts for the whole scan, one 60 s-style integration per
/// delay step. Points run in parallel on the current rayon pool; each uses
/// its own substream, so the output does not depend on scheduling.
pub fn build_interferogram(scn: &Scenario, seed: u64) -> Result<ScanOutput> {
    let s = Setup::new(scn)?;
    let pulses = scn.pulses_per_point();
    let steps = scn.scan_steps();
    let points: Vec<PointSummary> = steps
        .par_iter()
        .enumerate()
        .map(|(i, &step)| {
            let mut rng = substream(seed, i as u64);
            let coincidences = if s.window_bins == 0 {
                gated_point(&s, step, pulses, &mut rng)?
            } else {
                let [h, a, b] = simulate_streams(scn, step, pulses, &mut rng)?;
                count_threefold(&h, &a, &b, s.window_bins)?
            };
            Ok(PointSummary { step, delay: step as f64 * s.eps.delay_step, pulses, coincidences })
        })
        .collect::<Result<_>>()?;
    let data = points.iter().map(|p| InterferogramPoint::new(p.delay, p.coincidences.threefolds)).collect();
    let interferogram = Interferogram::new(data, scn.integration_time_s, scn.digest())?;
    Ok(ScanOutput { interferogram, points })
}

/// Signal–idler CAR of the pair source alone, with the signal sent straight
/// to SNSPD1 and accidentals taken one pulse period later.
///
/// Pairs are split into independent Poisson classes (both photons
/// detected, idler only, signal only), which is equivalent to thinning each
/// pair, so only pulses with a click need to be visited.
pub fn measure_car(scn: &Scenario, pulses: u64, seed: u64) -> Result<CarMeasurement> {
    let s = Setup::new(scn)?;
    let eps = &s.eps;
    let p = eps.pair_prob;
    let qh = eps.herald_efficiency * s.herald.efficiency;
    let qs = eps.signal_efficiency * s.d1.efficiency;
    let nh = 1.0 - (1.0 - s.herald.dark_prob_per_bin) * (1.0 - eps.accidental_herald_prob()? * s.herald.efficiency);
    let ns = s.d1.dark_prob_per_bin;
    let (both, h_only, s_only) = (p * qh * qs, p * qh * (1.0 - qs), p * (1.0 - qh) * qs);
    let p00 = (-(both + h_only + s_only)).exp() * (1.0 - nh) * (1.0 - ns);
    let h0 = (-(both + h_only)).exp() * (1.0 - nh);
    let s0 = (-(both + s_only)).exp() * (1.0 - ns);
    let p10 = s0 - p00;
    let p01 = h0 - p00;
    let any = 1.0 - p00;

    let mut rng = substream(seed, AUX_STREAM);
    let (mut heralds, mut signals) = (Vec::new(), Vec::new());
    let mut k = geometric_gap(&mut rng, any);
    while k < pulses {
        let bin = k * s.bins_per_pulse;
        let u = rand::Rng::random::<f64>(&mut rng) * any;
        if u < p10 {
            heralds.push(bin);
        } else if u < p10 + p01 {
            signals.push(bin);
        } else {
            heralds.push(bin);
            signals.push(bin);
        }
        k = k.saturating_add(1).saturating_add(geometric_gap(&mut rng, any));
    }
    let total = pulses * s.bins_per_pulse;
    let herald = TimetagStream::new(DetectorLabel::Herald, heralds, s.bin_width, total)?;
    let signal = TimetagStream::new(DetectorLabel::Snspd1, signals, s.bin_width, total)?;
    compute_car(&signal, &herald, s.bins_per_pulse)
}
