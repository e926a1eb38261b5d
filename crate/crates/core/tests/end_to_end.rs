use homsim::analysis::{fit_dip, guess_dip_params};
use homsim::hom::{dip_tau, oracle_dip_visibility, PhotonSource};
use homsim::pipeline::{build_interferogram, simulate_point};
use homsim::rng::substream;
use homsim::scenario::{preset, Scenario, PRESETS};
use proptest::prelude::*;

#[test]
fn presets_round_trip_through_text() {
    for name in PRESETS {
        let s = preset(name).unwrap();
        s.validate().unwrap();
        let again = Scenario::parse(&s.to_toml()).unwrap();
        assert_eq!(s, again, "{name}");
        assert_eq!(s.digest(), again.digest());
    }
}

#[test]
fn preset_dip_width_matches_filters() {
    let s = preset("baseline").unwrap();
    let (a, b) = s.bandwidths().unwrap();
    assert!((dip_tau(a, b) * 1e12 - 43.0).abs() < 0.5);
}

/// Bright, noiseless, jitter-free variant: the dip must reach what the
/// Fock-space reference predicts for the same photon statistics, up to the
/// spectral mismatch and multi-pair terms the reference leaves out.
#[test]
fn short_scan_dip_is_consistent_with_reference() {
    let mut s = preset("baseline").unwrap();
    s.integration_time_s = 2.0;
    s.wcs.n_bar = 0.02;
    s.eps.signal_efficiency = 0.5;
    s.link.raman_coeff = 0.0;
    s.clock.jitter_rms_ps = 0.0;
    s.scan.start_step = -12;
    s.scan.stop_step = 12;
    let out = build_interferogram(&s, 4).unwrap();
    let data = &out.interferogram;
    let fit = fit_dip(data, &guess_dip_params(data).unwrap()).unwrap();
    assert!(fit.converged, "{fit:?}");
    let reference =
        oracle_dip_visibility(PhotonSource::Coherent { mean: 0.02 }, PhotonSource::SinglePhoton, 6).unwrap();
    let v = fit.param("visibility");
    assert!(v < reference && v > 0.5 * reference, "V = {v}, reference {reference}");
    let tau = fit.param("tau") * 1e12;
    assert!((tau - 43.0).abs() < 5.0 * fit.std_error("tau") * 1e12, "tau = {tau} ps");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn threefolds_never_exceed_pairwise_or_singles(seed in any::<u64>(), step in -20i64..=20) {
        let s = preset("loop1").unwrap();
        let r = simulate_point(&s, step, 20_000_000, &mut substream(seed, 0)).unwrap();
        prop_assert!(r.threefolds <= r.pairs.herald_d1.min(r.pairs.herald_d2));
        prop_assert!(r.pairs.herald_d1 <= r.singles.herald.min(r.singles.d1));
        prop_assert!(r.pairs.herald_d2 <= r.singles.herald.min(r.singles.d2));
    }
}
