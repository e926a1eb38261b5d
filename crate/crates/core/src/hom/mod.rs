//! Spectral overlap, HOM probability models and the Fock-space oracle.

pub mod fock;
pub mod model;
pub mod spectral;

pub use fock::{
    fock_hom_oracle, oracle_dip_visibility, port_distribution, sample_ports, FockOracleInput, OracleOutput,
    PhotonSource, PortCounts, DEFAULT_N_MAX,
};
pub use model::{dip_curve, optimal_n_bar, predict_visibility, DipModelParams, VisibilityModelParams};
pub use spectral::{
    dip_tau, effective_bandwidth, mode_overlap, pulse_to_angular_bandwidth, spectral_factor, AngularBandwidth,
};
