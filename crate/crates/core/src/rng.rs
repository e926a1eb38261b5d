//! Seeded random streams and the small samplers the Monte Carlo needs.
//!
//! Every simulation stream is a ChaCha8 generator keyed by the run seed and
//! an explicit stream number, so work split across threads draws from
//! independent, index-derived substreams and reproduces bit-for-bit.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution, Geometric, Poisson};

pub type SimRng = ChaCha8Rng;

pub fn substream(seed: u64, stream: u64) -> SimRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

pub fn poisson<R: Rng + ?Sized>(rng: &mut R, mean: f64) -> u32 {
    if mean <= 0.0 {
        return 0;
    }
    let d = Poisson::new(mean).expect("finite positive mean");
    let k: f64 = d.sample(rng);
    k as u32
}

/// Poisson draw conditioned on being at least one.
pub fn zero_truncated_poisson<R: Rng + ?Sized>(rng: &mut R, mean: f64) -> u32 {
    debug_assert!(mean > 0.0);
    let u = rng.random::<f64>() * -(-mean).exp_m1();
    let mut p = (-mean).exp() * mean;
    let mut cdf = p;
    let mut k = 1u32;
    while u > cdf && k < 1000 {
        k += 1;
        p *= mean / k as f64;
        cdf += p;
    }
    k
}

pub fn binomial<R: Rng + ?Sized>(rng: &mut R, n: u32, p: f64) -> u32 {
    match n {
        0 => 0,
        _ if p <= 0.0 => 0,
        _ if p >= 1.0 => n,
        1..=16 => (0..n).filter(|_| rng.random::<f64>() < p).count() as u32,
        _ => Binomial::new(n as u64, p).expect("valid binomial").sample(rng) as u32,
    }
}

pub fn bernoulli<R: Rng + ?Sized>(rng: &mut R, p: f64) -> bool {
    p > 0.0 && rng.random::<f64>() < p
}

/// Number of failures before the first success of a Bernoulli(p) sequence;
/// `u64::MAX` when `p == 0`.
pub fn geometric_gap<R: Rng + ?Sized>(rng: &mut R, p: f64) -> u64 {
    if p <= 0.0 {
        return u64::MAX;
    }
    if p >= 1.0 {
        return 0;
    }
    Geometric::new(p).expect("probability in (0, 1)").sample(rng)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn substreams_are_reproducible_and_distinct() {
        let a: Vec<u64> = (0..4).map(|_| substream(9, 1).random()).collect();
        assert!(a.windows(2).all(|w| w[0] == w[1]));
        let x: u64 = substream(9, 1).random();
        let y: u64 = substream(9, 2).random();
        assert_ne!(x, y);
    }

    #[test]
    fn truncated_poisson_mean() {
        let mut rng = substream(1, 0);
        let lam = 0.02;
        let n = 200_000;
        let s: u64 = (0..n).map(|_| zero_truncated_poisson(&mut rng, lam) as u64).sum();
        let expect = lam / -(-lam).exp_m1();
        assert!((s as f64 / n as f64 - expect).abs() < 1e-3);
    }

    #[test]
    fn geometric_gap_mean() {
        let mut rng = substream(2, 0);
        let p = 0.01;
        let n = 100_000;
        let s: f64 = (0..n).map(|_| geometric_gap(&mut rng, p) as f64).sum();
        let expect = (1.0 - p) / p;
        assert!((s / n as f64 - expect).abs() < 0.02 * expect);
        assert_eq!(geometric_gap(&mut rng, 0.0), u64::MAX);
    }
}
