//! Weighted fit of the inverted-Gaussian HOM dip.

use nalgebra::{DMatrix, DVector};

use super::lm::{minimize, LmOptions};
use super::{FitFlag, FitResult, Interferogram};
use crate::error::{domain, Result};
use crate::hom::{dip_curve, DipModelParams};
use crate::rng::{poisson, substream};

/// Parameter names, in covariance order. `tau` and `center` are in seconds.
pub const DIP_PARAMS: [&str; 4] = ["c_max", "visibility", "tau", "center"];

const MIN_POINTS: usize = 6;

/// Gaussian standard deviation for a 1/e half-width: `2τ√ln2`.
pub fn sigma_from_tau(tau: f64) -> Result<f64> {
    if !(tau > 0.0) {
        return Err(domain(format!("tau must be > 0, got {tau}")));
    }
    Ok(2.0 * tau * std::f64::consts::LN_2.sqrt())
}

/// Starting point read off the data: plateau from the outer quarters,
/// center at the smoothed minimum, width from the half-depth crossings.
pub fn guess_dip_params(data: &Interferogram) -> Result<DipModelParams> {
    let pts = data.points();
    if pts.len() < MIN_POINTS {
        return Err(domain(format!("need at least {MIN_POINTS} points, got {}", pts.len())));
    }
    let n = pts.len();
    let q = (n / 4).max(1);
    let edge: Vec<f64> = pts[..q].iter().chain(&pts[n - q..]).map(|p| p.counts as f64).collect();
    let c0 = (edge.iter().sum::<f64>() / edge.len() as f64).max(1.0);
    let smooth: Vec<f64> = (0..n)
        .map(|i| {
            let lo = i.saturating_sub(1);
            let hi = (i + 1).min(n - 1);
            pts[lo..=hi].iter().map(|p| p.counts as f64).sum::<f64>() / (hi - lo + 1) as f64
        })
        .collect();
    let (imin, &cmin) = smooth.iter().enumerate().min_by(|a, b| a.1.total_cmp(b.1)).expect("non-empty");
    let v0 = ((c0 - cmin) / c0).clamp(0.05, 0.95);
    let span = pts[n - 1].delay - pts[0].delay;
    let spacing = span / (n - 1) as f64;
    let half = c0 * (1.0 - v0 / 2.0);
    let below = smooth.iter().filter(|&&c| c < half).count() as f64;
    let fwhm = below * spacing;
    let tau0 = if below >= 1.0 { fwhm / (2.0 * std::f64::consts::LN_2.sqrt()) } else { span / 10.0 };
    DipModelParams::new(c0, v0, tau0.clamp(spacing / 2.0, span), pts[imin].delay)
}

/// Weighted least-squares fit of `C·(1 − V·exp(−((t−t₀)/τ)²))`.
///
/// Fewer than six points is an error; numerical failure is reported through
/// `converged` and `flags`, not as an error.
pub fn fit_dip(data: &Interferogram, init: &DipModelParams) -> Result<FitResult> {
    let pts = data.points();
    let delays: Vec<f64> = pts.iter().map(|p| p.delay).collect();
    let y: Vec<f64> = pts.iter().map(|p| p.counts as f64).collect();
    let sigma: Vec<f64> = pts.iter().map(|p| p.sigma).collect();
    fit_dip_values(&delays, &y, &sigma, init)
}

/// [`fit_dip`] on real-valued data, e.g. rates or noiseless model curves.
pub fn fit_dip_values(delays: &[f64], y: &[f64], sigma: &[f64], init: &DipModelParams) -> Result<FitResult> {
    if delays.len() != y.len() || y.len() != sigma.len() {
        return Err(domain("delays, values and sigmas differ in length"));
    }
    if delays.len() < MIN_POINTS {
        return Err(domain(format!("need at least {MIN_POINTS} points, got {}", delays.len())));
    }
    if sigma.iter().any(|s| !(*s > 0.0 && s.is_finite())) {
        return Err(domain("sigmas must be positive and finite"));
    }
    // Work in picoseconds so the normal equations are well scaled.
    let t: Vec<f64> = delays.iter().map(|d| d * 1e12).collect();
    let w: Vec<f64> = sigma.iter().map(|s| s.recip()).collect();
    let m = t.len();

    let residuals =
        |x: &DVector<f64>| DVector::from_fn(m, |i, _| (dip_curve(x[0], x[1], x[2], x[3], t[i]) - y[i]) * w[i]);
    let jacobian = |x: &DVector<f64>| {
        let (c, v, tau, t0) = (x[0], x[1], x[2], x[3]);
        let mut j = DMatrix::zeros(m, 4);
        for i in 0..m {
            let u = (t[i] - t0) / tau;
            let e = (-u * u).exp();
            j[(i, 0)] = (1.0 - v * e) * w[i];
            j[(i, 1)] = -c * e * w[i];
            j[(i, 2)] = -c * v * e * 2.0 * u * u / tau * w[i];
            j[(i, 3)] = -c * v * e * 2.0 * u / tau * w[i];
        }
        j
    };

    let tau0 = init.tau * 1e12;
    let x0 = DVector::from_vec(vec![init.c_max.max(1e-9), init.visibility, tau0, init.center * 1e12]);
    let opts = LmOptions::new(vec![init.c_max.abs().max(1.0), 1.0, tau0, tau0]);
    let out = minimize(residuals, jacobian, x0, &opts);

    let dof = m - 4;
    let reduced_chi2 = out.chi2 / dof as f64;
    let mut flags = Vec::new();
    if !out.converged && out.iterations >= opts.max_iter {
        flags.push(FitFlag::IterationLimit);
    }
    let v = out.x[1];
    if !(-0.1..=1.1).contains(&v) {
        flags.push(FitFlag::VisibilityOutOfRange);
    }
    // Without a single count the shape parameters are arbitrary.
    let blank = y.iter().all(|&c| c == 0.0);
    if blank {
        flags.push(FitFlag::Underdetermined);
    }
    // Only τ² enters the model.
    let tau_sign = out.x[2].signum();
    let units = [1.0, 1.0, 1e-12 * tau_sign, 1e-12];
    let cov = out.covariance.map(|c| {
        let scale = if reduced_chi2 > 0.0 { reduced_chi2 } else { 1.0 };
        (0..4).map(|r| (0..4).map(|k| c[(r, k)] * units[r] * units[k] * scale).collect()).collect()
    });
    let values = [out.x[0], v, out.x[2] * units[2], out.x[3] * 1e-12];
    Ok(FitResult::assemble(&DIP_PARAMS, &values, cov, reduced_chi2, out.converged && !blank, out.iterations, flags))
}

/// Parametric bootstrap: resamples Poisson counts around the fitted curve
/// and attaches percentile 95% intervals as `bootstrap_ci95`.
pub fn bootstrap_dip(data: &Interferogram, init: &DipModelParams, resamples: usize, seed: u64) -> Result<FitResult> {
    if resamples < 20 {
        return Err(domain("bootstrap needs at least 20 resamples"));
    }
    let mut base = fit_dip(data, init)?;
    let truth = [base.param("c_max"), base.param("visibility"), base.param("tau"), base.param("center")];
    let start =
        DipModelParams { c_max: truth[0], visibility: truth[1].clamp(0.0, 1.0), tau: truth[2], center: truth[3] };
    let mut samples: Vec<Vec<f64>> = (0..4).map(|_| Vec::with_capacity(resamples)).collect();
    for b in 0..resamples {
        let mut rng = substream(seed, b as u64);
        let counts: Vec<(f64, u64)> = data
            .points()
            .iter()
            .map(|p| {
                let mean = dip_curve(truth[0], truth[1], truth[2], truth[3], p.delay).max(0.0);
                (p.delay, poisson(&mut rng, mean) as u64)
            })
            .collect();
        let resampled = Interferogram::from_counts(&counts, data.integration_time, data.meta.clone())?;
        let fit = fit_dip(&resampled, &start)?;
        if fit.converged {
            for (k, name) in DIP_PARAMS.iter().enumerate() {
                samples[k].push(fit.param(name));
            }
        }
    }
    if samples[0].len() < resamples / 2 {
        return Err(domain("most bootstrap refits failed to converge"));
    }
    let mut ci = std::collections::BTreeMap::new();
    for (k, name) in DIP_PARAMS.iter().enumerate() {
        let s = &mut samples[k];
        s.sort_by(f64::total_cmp);
        let at = |q: f64| s[((q * (s.len() - 1) as f64).round() as usize).min(s.len() - 1)];
        ci.insert(name.to_string(), [at(0.025), at(0.975)]);
    }
    base.bootstrap_ci95 = Some(ci);
    Ok(base)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analysis::{InterferogramPoint, Z95};

    fn delays() -> Vec<f64> {
        (-20..=20).map(|k| k as f64 * 10e-12).collect()
    }

    fn truth() -> DipModelParams {
        DipModelParams::new(252.0, 0.63, 43e-12, 0.0).unwrap()
    }

    fn noisy(p: &DipModelParams, seed: u64) -> Interferogram {
        let mut rng = substream(seed, 0);
        let data: Vec<(f64, u64)> = delays().iter().map(|&d| (d, poisson(&mut rng, p.counts_at(d)) as u64)).collect();
        Interferogram::from_counts(&data, 60.0, "").unwrap()
    }

    fn fit_exact(p: &DipModelParams, init: &DipModelParams) -> FitResult {
        let d = delays();
        let y: Vec<f64> = d.iter().map(|&t| p.counts_at(t)).collect();
        let sigma: Vec<f64> = y.iter().map(|c| c.sqrt()).collect();
        fit_dip_values(&d, &y, &sigma, init).unwrap()
    }

    #[test]
    fn sigma_conversion() {
        assert_close!(sigma_from_tau(10e-12).unwrap(), 16.651e-12, 0.001e-12);
        assert_close!(sigma_from_tau(2e-12).unwrap(), 2.0 * sigma_from_tau(1e-12).unwrap(), 1e-27);
        assert!(sigma_from_tau(1e-300).unwrap() > 0.0);
        assert!(sigma_from_tau(0.0).is_err());
    }

    #[test]
    fn noiseless_round_trip() {
        for p in [truth(), DipModelParams::new(1.0e4, 0.3, 60e-12, 25e-12).unwrap()] {
            let init = DipModelParams::new(0.95 * p.c_max, p.visibility - 0.1, 1.2 * p.tau, p.center + 8e-12).unwrap();
            let fit = fit_exact(&p, &init);
            assert!(fit.converged, "{fit:?}");
            assert_close!(fit.param("c_max"), p.c_max, 1e-6 * p.c_max);
            assert_close!(fit.param("visibility"), p.visibility, 1e-6 * p.visibility);
            assert_close!(fit.param("tau"), p.tau, 1e-6 * p.tau);
            assert_close!(fit.param("center"), p.center, 1e-6 * p.tau);
        }
    }

    #[test]
    fn noisy_fit_near_truth() {
        let p = DipModelParams::new(252.0, 0.58, 51.5e-12, 0.0).unwrap();
        let data = noisy(&p, 3);
        let fit = fit_dip(&data, &guess_dip_params(&data).unwrap()).unwrap();
        assert!(fit.converged);
        assert!((fit.param("visibility") - 0.58).abs() < 0.05);
        let se = fit.std_error("visibility");
        assert!(se > 0.01 && se < 0.08, "se = {se}");
    }

    #[test]
    fn flat_data_gives_null_visibility() {
        let p = DipModelParams::new(252.0, 0.0, 43e-12, 0.0).unwrap();
        let data = noisy(&p, 9);
        let fit = fit_dip(&data, &guess_dip_params(&data).unwrap()).unwrap();
        let (v, se) = (fit.param("visibility"), fit.std_error("visibility"));
        assert!(v.abs() <= 2.0 * se || !fit.converged, "V = {v} ± {se}");
    }

    #[test]
    fn empty_counts_are_not_a_fit() {
        let data = Interferogram::from_counts(&delays().iter().map(|&d| (d, 0)).collect::<Vec<_>>(), 60.0, "").unwrap();
        let fit = fit_dip(&data, &guess_dip_params(&data).unwrap()).unwrap();
        assert!(!fit.converged);
        assert!(fit.flags.contains(&FitFlag::Underdetermined));
    }

    #[test]
    fn too_few_points() {
        let data = Interferogram::from_counts(&[(0.0, 1), (1e-12, 2), (2e-12, 3)], 1.0, "").unwrap();
        assert!(fit_dip(&data, &truth()).is_err());
    }

    #[test]
    fn scaling_counts_and_weights_leaves_shape() {
        let data = noisy(&truth(), 5);
        let scaled = Interferogram::new(
            data.points()
                .iter()
                .map(|p| InterferogramPoint { delay: p.delay, counts: p.counts * 7, sigma: p.sigma * 7.0 })
                .collect(),
            60.0,
            "",
        )
        .unwrap();
        let a = fit_dip(&data, &truth()).unwrap();
        let b = fit_dip(&scaled, &DipModelParams { c_max: 7.0 * 252.0, ..truth() }).unwrap();
        assert_close!(a.param("visibility"), b.param("visibility"), 1e-9);
        assert_close!(a.param("tau"), b.param("tau"), 1e-9 * 43e-12);
        assert_close!(b.param("c_max") / a.param("c_max"), 7.0, 1e-9);
    }

    #[test]
    fn ci_coverage_is_calibrated() {
        let p = DipModelParams::new(252.0, 0.6, 43e-12, 0.0).unwrap();
        let runs = 400;
        let mut covered = 0;
        for seed in 0..runs {
            let data = noisy(&p, 1000 + seed);
            let fit = fit_dip(&data, &guess_dip_params(&data).unwrap()).unwrap();
            assert!(fit.converged);
            let [lo, hi] = fit.ci95["visibility"];
            covered += (lo..=hi).contains(&0.6) as usize;
        }
        let frac = covered as f64 / runs as f64;
        assert!((0.90..=0.99).contains(&frac), "coverage {frac}");
    }

    #[test]
    fn bootstrap_intervals_bracket_estimate() {
        let data = noisy(&truth(), 77);
        let fit = bootstrap_dip(&data, &truth(), 100, 4).unwrap();
        let ci = fit.bootstrap_ci95.as_ref().unwrap();
        let [lo, hi] = ci["visibility"];
        assert!(lo < fit.param("visibility") && fit.param("visibility") < hi);
        // Comparable to the linearized interval.
        let width = hi - lo;
        let lin = 2.0 * Z95 * fit.std_error("visibility");
        assert!(width > 0.5 * lin && width < 2.0 * lin, "{width} vs {lin}");
    }

    #[test]
    fn guess_is_reasonable() {
        let p = DipModelParams::new(252.0, 0.63, 43e-12, 30e-12).unwrap();
        let exact: Vec<(f64, u64)> = delays().iter().map(|&d| (d, p.counts_at(d).round() as u64)).collect();
        let data = Interferogram::from_counts(&exact, 60.0, "").unwrap();
        let g = guess_dip_params(&data).unwrap();
        assert!((g.center - 30e-12).abs() <= 10e-12);
        assert!(g.tau > 20e-12 && g.tau < 90e-12, "{}", g.tau);
        assert!((g.visibility - 0.63).abs() < 0.1);
    }
}
