use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use homsim::acquisition::TimetagStream;
use homsim::scenario::preset;
use serde_json::Value;

fn homsim(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_homsim")).args(args).output().expect("binary runs")
}

fn preset_path(name: &str) -> String {
    Path::new(env!("CARGO_MANIFEST_DIR")).join(format!("../../presets/{name}.scenario")).to_string_lossy().into_owned()
}

fn json(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).unwrap_or_else(|e| panic!("{e}: {}", String::from_utf8_lossy(&out.stdout)))
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

/// A short, bright scan that runs in well under a second.
fn quick_scenario(dir: &Path) -> PathBuf {
    let mut s = preset("baseline").unwrap();
    s.integration_time_s = 0.2;
    s.wcs.n_bar = 0.05;
    s.eps.signal_efficiency = 0.3;
    s.scan.start_step = -8;
    s.scan.stop_step = 8;
    let path = dir.join("quick.scenario");
    std::fs::write(&path, s.to_toml()).unwrap();
    path
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p.to_string_lossy().into_owned()
}

#[test]
fn run_scan_writes_artifacts_deterministically() {
    let dir = tempfile::tempdir().unwrap();
    let scn = quick_scenario(dir.path());
    let scn = scn.to_str().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    let out = homsim(&["--out-dir", a.to_str().unwrap(), "--threads", "1", "run-scan", scn]);
    assert!(matches!(out.status.code(), Some(0 | 2)), "{}", stderr(&out));
    let out = homsim(&["--out-dir", b.to_str().unwrap(), "--threads", "3", "run-scan", scn]);
    assert!(matches!(out.status.code(), Some(0 | 2)), "{}", stderr(&out));
    for file in ["quick.interferogram.csv", "quick.fit.json"] {
        let x = std::fs::read(a.join(file)).unwrap();
        assert_eq!(x, std::fs::read(b.join(file)).unwrap(), "{file} differs between thread counts");
    }
    let csv = std::fs::read_to_string(a.join("quick.interferogram.csv")).unwrap();
    assert!(csv.starts_with("delay_ps,counts,sigma"));
    assert_eq!(csv.lines().count(), 1 + 17);
    let fit: Value = serde_json::from_slice(&std::fs::read(a.join("quick.fit.json")).unwrap()).unwrap();
    assert!(fit["params"]["visibility"].as_f64().unwrap() > 0.2);
}

#[test]
fn seed_flag_overrides_the_scenario_seed() {
    let dir = tempfile::tempdir().unwrap();
    let scn = quick_scenario(dir.path());
    let scn = scn.to_str().unwrap();
    let read = |sub: &str, seed: &str| {
        let d = dir.path().join(sub);
        homsim(&["--seed", seed, "--out-dir", d.to_str().unwrap(), "run-scan", scn]);
        std::fs::read_to_string(d.join("quick.interferogram.csv")).unwrap()
    };
    assert_eq!(read("x", "5"), read("y", "5"));
    assert_ne!(read("x", "5"), read("z", "6"));
}

#[test]
fn schema_violation_reports_line_and_exits_1() {
    let dir = tempfile::tempdir().unwrap();
    let text = std::fs::read_to_string(preset_path("loop1")).unwrap();
    let line = text.lines().position(|l| l.starts_with("loss_db")).unwrap() + 1;
    let bad = write(dir.path(), "bad.scenario", &text.replace("loss_db = 6.0", "loss_db = -6.0"));
    for cmd in ["run-scan", "link-budget"] {
        let out = homsim(&[cmd, &bad]);
        assert_eq!(out.status.code(), Some(1));
        assert!(stderr(&out).contains(&format!("line {line}")), "{}", stderr(&out));
        assert!(stderr(&out).contains("loss_db"), "{}", stderr(&out));
    }
    let typo = write(dir.path(), "typo.scenario", &text.replace("n_bar =", "nbar ="));
    let out = homsim(&["run-scan", &typo]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("line "), "{}", stderr(&out));
}

#[test]
fn missing_file_is_an_input_error() {
    let out = homsim(&["link-budget", "/nonexistent/x.scenario"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn fit_dip_reads_a_scan_back() {
    let dir = tempfile::tempdir().unwrap();
    let mut csv = String::from("delay_ps,counts,sigma\n");
    for k in -20..=20 {
        let t = k as f64 * 10.0;
        let c = (250.0 * (1.0 - 0.6 * (-(t / 43.0f64).powi(2)).exp())).round();
        csv += &format!("{t},{c},{}\n", c.sqrt());
    }
    let path = write(dir.path(), "scan.csv", &csv);
    let out = homsim(&["fit-dip", &path]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let v = json(&out)["params"]["visibility"].as_f64().unwrap();
    assert!((v - 0.6).abs() < 0.01, "{v}");
}

#[test]
fn fit_dip_on_empty_counts_is_not_converged() {
    let dir = tempfile::tempdir().unwrap();
    let mut csv = String::from("delay_ps,counts,sigma\n");
    for k in -10..=10 {
        csv += &format!("{},0,1\n", k * 10);
    }
    let path = write(dir.path(), "zero.csv", &csv);
    let out = homsim(&["fit-dip", &path]);
    assert_eq!(out.status.code(), Some(2), "{}", stderr(&out));
}

#[test]
fn fit_model_row_rules() {
    let dir = tempfile::tempdir().unwrap();
    let good =
        write(dir.path(), "p.csv", "n_bar,visibility,sigma\n0.007,0.63,0.02\n0.012,0.58,0.04\n0.003,0.49,0.06\n");
    let out = homsim(&["fit-model", &good]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let fit = json(&out);
    let ci = fit["ci95"]["mu"].as_array().unwrap();
    assert!(ci[0].as_f64().unwrap() <= 0.025 && 0.017 <= ci[1].as_f64().unwrap());

    let one = write(dir.path(), "one.csv", "0.007,0.63,0.02\n");
    assert_eq!(homsim(&["fit-model", &one]).status.code(), Some(1));

    let bad = write(dir.path(), "bad.csv", "n_bar,visibility,sigma\n0.007,0.63,0.02\n0.012,x,0.04\n");
    let out = homsim(&["fit-model", &bad]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("line 3"), "{}", stderr(&out));
}

#[test]
fn oracle_examples() {
    let out = homsim(&["oracle", "--a", "single", "--b", "single", "--overlap", "1"]);
    assert_eq!(out.status.code(), Some(0));
    assert!(json(&out)["p_coincidence"].as_f64().unwrap().abs() < 1e-12);

    let out = homsim(&["oracle", "--a", "coherent:0.01", "--b", "single", "--overlap", "1"]);
    assert!(json(&out)["visibility"].as_f64().unwrap() > 0.95);

    let out = homsim(&["oracle", "--a", "coherent:0.5", "--b", "coherent:0.5", "--overlap", "1", "--n-max", "10"]);
    let r = json(&out);
    assert!(r["visibility"].as_f64().unwrap() <= 0.5 + 1e-9);
    assert!((r["total"].as_f64().unwrap() - 1.0).abs() < 1e-9);

    let out = homsim(&["oracle", "--a", "photon", "--b", "single"]);
    assert_ne!(out.status.code(), Some(0));
    let out = homsim(&["oracle", "--a", "coherent:0.5", "--b", "single", "--n-max", "2"]);
    assert_eq!(out.status.code(), Some(1), "truncation too coarse must be rejected");
}

#[test]
fn link_budget_reports() {
    let out = homsim(&["link-budget", &preset_path("loop1")]);
    assert_eq!(out.status.code(), Some(0));
    let r = json(&out);
    assert_eq!(r["received_power_dbm"].as_f64().unwrap(), -27.0);
    assert!((r["transmittance"].as_f64().unwrap() - 0.2512).abs() < 1e-4);

    let r = json(&homsim(&["link-budget", &preset_path("baseline")]));
    assert_eq!(r["received_power_dbm"], r["launch_power_dbm"]);
    assert_eq!(r["transmittance"].as_f64().unwrap(), 1.0);
}

#[test]
fn export_timetags_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let out = homsim(&[
        "--out-dir",
        dir.path().to_str().unwrap(),
        "export-timetags",
        &preset_path("baseline"),
        "--step",
        "-2",
        "--duration-s",
        "1e-4",
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    for det in ["herald", "snspd1", "snspd2"] {
        let f = std::fs::File::open(dir.path().join(format!("baseline.step-2.{det}.tt"))).unwrap();
        let s = TimetagStream::read_from(std::io::BufReader::new(f)).unwrap();
        assert_eq!(s.detector.to_string(), det);
        assert_eq!(s.total_bins, 10_000 * 12);
    }
    let out = homsim(&["export-timetags", &preset_path("baseline"), "--duration-s", "0"]);
    assert_eq!(out.status.code(), Some(1));
}
