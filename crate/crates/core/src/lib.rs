//! Desk-scale simulator for Hong-Ou-Mandel interference between a weak
//! coherent state (WCS) and a heralded single photon (HSP) whose sources sit
//! on two nodes synchronized by a clock carried over the same fiber.
//!
//! The crate is organised along the signal chain:
//!
//! - [`hom`]: spectral-mode math, the dip and visibility models, and a
//!   truncated Fock-space beamsplitter used as a brute-force reference.
//! - [`sources`]: per-pulse WCS and photon-pair emission.
//! - [`link`]: dB budgets, transmittance and the Raman-noise surrogate.
//! - [`sync`]: recovered-clock timing with jitter and the analytic
//!   jitter-broadening of the dip.
//! - [`acquisition`]: threshold detectors, timetag streams, coincidences.
//! - [`analysis`]: interferograms and weighted least-squares fits.
//! - [`scenario`] and [`pipeline`]: experiment description and the Monte
//!   Carlo that ties everything together.

// `!(x > 0.0)` is how NaN gets rejected along with the out-of-range values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

#[cfg(test)]
#[macro_use]
mod test_util;

pub mod acquisition;
pub mod analysis;
mod error;
pub mod hom;
pub mod link;
pub mod pipeline;
pub mod rng;
pub mod scenario;
pub mod sources;
pub mod sync;

pub use error::{Error, Result};

/// Picoseconds per second.
pub const PS: f64 = 1e-12;
