//! Brute-force 50:50 beamsplitter in a truncated Fock space.
//!
//! Each input photon-number pair is expanded exactly as a polynomial in the
//! output creation operators. Partial distinguishability is carried by a
//! second internal mode: input B is `o·|A⟩ + √(1−o²)·|A⊥⟩`. Coherent inputs
//! are treated as phase-randomised, i.e. as Poisson mixtures of Fock states,
//! which is the relevant description for independent sources.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{config, domain, Result};

/// Largest tolerated Poisson weight beyond the truncation photon number.
pub const MAX_TRUNCATION_TAIL: f64 = 1e-6;

/// Default Fock cutoff for coherent inputs.
pub const DEFAULT_N_MAX: u32 = 4;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PhotonSource {
    Vacuum,
    SinglePhoton,
    /// Exactly `n` photons.
    Fock {
        n: u32,
    },
    /// Phase-randomised coherent state.
    Coherent {
        mean: f64,
    },
}

impl PhotonSource {
    /// Photon-number weights `P(k)` for `k = 0..=n_max`, renormalised after
    /// the tail check.
    pub fn number_distribution(&self, n_max: u32) -> Result<Vec<f64>> {
        let mut w = vec![0.0; n_max as usize + 1];
        match *self {
            PhotonSource::Vacuum => w[0] = 1.0,
            PhotonSource::SinglePhoton => {
                if n_max < 1 {
                    return Err(config("n_max must be at least 1 for a single photon"));
                }
                w[1] = 1.0
            }
            PhotonSource::Fock { n } => {
                if n > n_max {
                    return Err(config(format!("Fock state |{n}> exceeds n_max = {n_max}")));
                }
                w[n as usize] = 1.0
            }
            PhotonSource::Coherent { mean } => {
                if !(mean >= 0.0 && mean.is_finite()) {
                    return Err(domain(format!("coherent mean must be >= 0, got {mean}")));
                }
                let mut p = (-mean).exp();
                for (k, slot) in w.iter_mut().enumerate() {
                    if k > 0 {
                        p *= mean / k as f64;
                    }
                    *slot = p;
                }
                let kept: f64 = w.iter().sum();
                let tail = 1.0 - kept;
                if tail >= MAX_TRUNCATION_TAIL {
                    return Err(config(format!(
                        "coherent state with mean {mean} truncated at n_max = {n_max} \
                         drops {tail:.3e} of its weight (limit {MAX_TRUNCATION_TAIL:e})"
                    )));
                }
                w.iter_mut().for_each(|x| *x /= kept);
            }
        }
        Ok(w)
    }
}

impl fmt::Display for PhotonSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PhotonSource::Vacuum => write!(f, "vacuum"),
            PhotonSource::SinglePhoton => write!(f, "single"),
            PhotonSource::Fock { n } => write!(f, "fock:{n}"),
            PhotonSource::Coherent { mean } => write!(f, "coherent:{mean}"),
        }
    }
}

impl FromStr for PhotonSource {
    type Err = crate::Error;

    /// Accepts `vacuum`, `single`, `fock:<n>` and `coherent:<mean>`.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let (kind, arg) = match s.split_once(':') {
            Some((k, a)) => (k, Some(a)),
            None => (s, None),
        };
        let bad = || domain(format!("unrecognised photon source '{s}'"));
        match (kind, arg) {
            ("vacuum", None) => Ok(PhotonSource::Vacuum),
            ("single", None) => Ok(PhotonSource::SinglePhoton),
            ("fock", Some(a)) => Ok(PhotonSource::Fock { n: a.parse().map_err(|_| bad())? }),
            ("coherent", Some(a)) => {
                let mean: f64 = a.parse().map_err(|_| bad())?;
                if !(mean >= 0.0 && mean.is_finite()) {
                    return Err(bad());
                }
                Ok(PhotonSource::Coherent { mean })
            }
            _ => Err(bad()),
        }
    }
}

/// Inputs to [`fock_hom_oracle`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FockOracleInput {
    pub input_a: PhotonSource,
    pub input_b: PhotonSource,
    /// Mode-overlap amplitude of input B with input A.
    pub overlap: f64,
    pub n_max: u32,
}

impl FockOracleInput {
    pub fn new(input_a: PhotonSource, input_b: PhotonSource, overlap: f64, n_max: u32) -> Result<Self> {
        let input = Self { input_a, input_b, overlap, n_max };
        input.validate()?;
        Ok(input)
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.overlap) {
            return Err(domain(format!("overlap must lie in [0, 1], got {}", self.overlap)));
        }
        if self.n_max < 2 {
            return Err(config(format!("n_max must be >= 2, got {}", self.n_max)));
        }
        self.input_a.number_distribution(self.n_max)?;
        self.input_b.number_distribution(self.n_max)?;
        Ok(())
    }
}

/// Output-port statistics. The four fields partition the outcome space.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct OracleOutput {
    /// At least one photon in each output port.
    pub p_coincidence: f64,
    /// Two or more photons, all in output port a.
    pub p_bunch_a: f64,
    /// Two or more photons, all in output port b.
    pub p_bunch_b: f64,
    /// Fewer than two photons in total.
    pub p_vacuum_or_single: f64,
}

impl OracleOutput {
    pub fn total(&self) -> f64 {
        self.p_coincidence + self.p_bunch_a + self.p_bunch_b + self.p_vacuum_or_single
    }
}

/// Joint probability of `(photons in port a, photons in port b)` after the
/// beamsplitter for Fock inputs `|n_a⟩` and `|n_b⟩`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PortCounts {
    pub port_a: u32,
    pub port_b: u32,
    pub prob: f64,
}

type Monomial = [u32; 4];

// Output modes: (port a, ∥), (port a, ⊥), (port b, ∥), (port b, ⊥).
fn multiply_linear(poly: &BTreeMap<Monomial, f64>, form: &[(usize, f64)]) -> BTreeMap<Monomial, f64> {
    let mut out = BTreeMap::new();
    for (mono, &c) in poly {
        for &(mode, coeff) in form {
            if coeff == 0.0 {
                continue;
            }
            let mut m = *mono;
            m[mode] += 1;
            *out.entry(m).or_insert(0.0) += c * coeff;
        }
    }
    out
}

fn factorial(n: u32) -> f64 {
    (1..=n).map(f64::from).product()
}

/// Exact output port distribution for `|n_a⟩_A |n_b⟩_B` on a 50:50 splitter.
pub fn port_distribution(n_a: u32, n_b: u32, overlap: f64) -> Vec<PortCounts> {
    let r = std::f64::consts::FRAC_1_SQRT_2;
    let o = overlap.clamp(0.0, 1.0);
    let s = (1.0 - o * o).max(0.0).sqrt();
    let a_form = [(0, r), (2, r)];
    let b_form = [(0, o * r), (2, -o * r), (1, s * r), (3, -s * r)];

    let mut poly = BTreeMap::new();
    poly.insert([0u32; 4], 1.0 / (factorial(n_a) * factorial(n_b)).sqrt());
    for _ in 0..n_a {
        poly = multiply_linear(&poly, &a_form);
    }
    for _ in 0..n_b {
        poly = multiply_linear(&poly, &b_form);
    }

    let mut ports: BTreeMap<(u32, u32), f64> = BTreeMap::new();
    for (m, c) in poly {
        let norm: f64 = m.iter().map(|&k| factorial(k)).product();
        *ports.entry((m[0] + m[1], m[2] + m[3])).or_insert(0.0) += c * c * norm;
    }
    ports.into_iter().map(|((port_a, port_b), prob)| PortCounts { port_a, port_b, prob }).collect()
}

/// Draws output port occupations for Fock inputs.
pub fn sample_ports<R: Rng + ?Sized>(n_a: u32, n_b: u32, overlap: f64, rng: &mut R) -> (u32, u32) {
    match (n_a, n_b) {
        (0, 0) => (0, 0),
        (1, 0) | (0, 1) => {
            if rng.random::<f64>() < 0.5 {
                (1, 0)
            } else {
                (0, 1)
            }
        }
        _ => {
            let dist = port_distribution(n_a, n_b, overlap);
            let u: f64 = rng.random();
            let mut acc = 0.0;
            for term in &dist {
                acc += term.prob;
                if u < acc {
                    return (term.port_a, term.port_b);
                }
            }
            let last = dist.last().expect("non-empty distribution");
            (last.port_a, last.port_b)
        }
    }
}

/// Enumerates every input photon-number pair up to `n_max` and classifies
/// the output of an ideal 50:50 splitter.
pub fn fock_hom_oracle(input: &FockOracleInput) -> Result<OracleOutput> {
    input.validate()?;
    let wa = input.input_a.number_distribution(input.n_max)?;
    let wb = input.input_b.number_distribution(input.n_max)?;
    let mut out = OracleOutput::default();
    for (ka, &pa) in wa.iter().enumerate() {
        for (kb, &pb) in wb.iter().enumerate() {
            let w = pa * pb;
            if w == 0.0 {
                continue;
            }
            for t in port_distribution(ka as u32, kb as u32, input.overlap) {
                let p = w * t.prob;
                if t.port_a + t.port_b < 2 {
                    out.p_vacuum_or_single += p;
                } else if t.port_a > 0 && t.port_b > 0 {
                    out.p_coincidence += p;
                } else if t.port_b == 0 {
                    out.p_bunch_a += p;
                } else {
                    out.p_bunch_b += p;
                }
            }
        }
    }
    Ok(out)
}

/// Dip visibility `1 − P_cc(overlap 1)/P_cc(overlap 0)` for two sources.
pub fn oracle_dip_visibility(a: PhotonSource, b: PhotonSource, n_max: u32) -> Result<f64> {
    let aligned = fock_hom_oracle(&FockOracleInput::new(a, b, 1.0, n_max)?)?;
    let apart = fock_hom_oracle(&FockOracleInput::new(a, b, 0.0, n_max)?)?;
    if apart.p_coincidence <= 0.0 {
        return Err(domain("no coincidences for distinguishable inputs; visibility undefined"));
    }
    Ok(1.0 - aligned.p_coincidence / apart.p_coincidence)
}


#[cfg(test)]
mod props {
    use super::*;
    use proptest::prelude::*;

    fn source() -> impl Strategy<Value = PhotonSource> {
        prop_oneof![
            Just(PhotonSource::Vacuum),
            Just(PhotonSource::SinglePhoton),
            (0u32..=3).prop_map(|n| PhotonSource::Fock { n }),
            (0.0f64..0.3).prop_map(|mean| PhotonSource::Coherent { mean }),
        ]
    }

    proptest! {
        #[test]
        fn probabilities_sum_to_one(a in source(), b in source(), o in 0.0f64..=1.0) {
            let r = fock_hom_oracle(&FockOracleInput::new(a, b, o, 8).unwrap()).unwrap();
            prop_assert!((r.total() - 1.0).abs() < 1e-9);
            prop_assert!(r.p_coincidence >= -1e-15);
        }

        #[test]
        fn coincidence_monotone_in_overlap(a in source(), b in source(), o1 in 0.0f64..=1.0, o2 in 0.0f64..=1.0) {
            let (lo, hi) = if o1 < o2 { (o1, o2) } else { (o2, o1) };
            let p = |o| fock_hom_oracle(&FockOracleInput::new(a, b, o, 8).unwrap()).unwrap().p_coincidence;
            let (p_lo, p_hi) = (p(lo), p(hi));
            prop_assert!(p_hi <= p_lo + 1e-12);
            prop_assert!(p_hi >= p(1.0) - 1e-12 && p_lo <= p(0.0) + 1e-12);
        }

        #[test]
        fn coherent_pair_never_beats_classical_bound(m1 in 1e-4f64..0.4, m2 in 1e-4f64..0.4) {
            let v = oracle_dip_visibility(
                PhotonSource::Coherent { mean: m1 },
                PhotonSource::Coherent { mean: m2 },
                12,
            ).unwrap();
            prop_assert!(v <= 0.5 + 1e-9);
        }
    }
}
