//! `homsim` command-line front end.
//!
//! Exit codes: 0 success, 1 input or configuration error, 2 a fit that did
//! not converge (its artifacts are still written).

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use homsim::acquisition::DetectorLabel;
use homsim::analysis::{
    bootstrap_dip, fit_dip, fit_visibility_model, guess_dip_params, read_visibility_points, FitResult, Interferogram,
};
use homsim::hom::{fock_hom_oracle, oracle_dip_visibility, AngularBandwidth, FockOracleInput, PhotonSource};
use homsim::link::{apply_loss_dbm, transmittance};
use homsim::pipeline::{build_interferogram, simulate_streams};
use homsim::rng::substream;
use homsim::scenario::Scenario;
use serde_json::json;

#[derive(Parser)]
#[command(name = "homsim", version, about = "WCS vs heralded-single-photon HOM interference simulator")]
struct Cli {
    /// Overrides the scenario seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for the delay scan (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Directory for written artifacts.
    #[arg(long, global = true, default_value = ".")]
    out_dir: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a pump-delay scan, write the interferogram CSV and the dip fit JSON.
    RunScan {
        scenario: PathBuf,
        /// Parametric bootstrap resamples for an extra percentile CI (0 = off).
        #[arg(long, default_value_t = 0)]
        bootstrap: usize,
    },
    /// Fit the Gaussian dip model to an interferogram CSV.
    FitDip {
        csv: PathBuf,
        /// Integration time per point, s.
        #[arg(long, default_value_t = 60.0)]
        integration_time_s: f64,
    },
    /// Fit heralding efficiency and system noise to `n_bar,visibility,sigma` rows.
    FitModel {
        points: PathBuf,
        #[arg(long, default_value_t = 5.5)]
        bw_a_ghz: f64,
        #[arg(long, default_value_t = 5.0)]
        bw_b_ghz: f64,
    },
    /// Brute-force Fock-space beamsplitter statistics.
    Oracle {
        /// vacuum | single | fock:<n> | coherent:<mean>
        #[arg(long)]
        a: PhotonSource,
        #[arg(long)]
        b: PhotonSource,
        /// Mode-overlap amplitude in [0, 1].
        #[arg(long, default_value_t = 1.0)]
        overlap: f64,
        #[arg(long, default_value_t = homsim::hom::DEFAULT_N_MAX)]
        n_max: u32,
    },
    /// Loss budget of the clock channel and the coexistence noise it causes.
    LinkBudget { scenario: PathBuf },
    /// Write raw timetag streams for one delay step.
    ExportTimetags {
        scenario: PathBuf,
        #[arg(long, default_value_t = 0, allow_negative_numbers = true)]
        step: i64,
        /// Simulated acquisition time, s.
        #[arg(long, default_value_t = 1e-3)]
        duration_s: f64,
    },
}

enum Failure {
    Input(String),
    NotConverged,
}

impl From<homsim::Error> for Failure {
    fn from(e: homsim::Error) -> Self {
        Failure::Input(e.to_string())
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Input(e.to_string())
    }
}

type Outcome = Result<(), Failure>;

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: cannot start {n} worker threads: {e}");
            return ExitCode::from(1);
        }
    }
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Input(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::NotConverged) => {
            eprintln!("warning: fit did not converge");
            ExitCode::from(2)
        }
    }
}

fn run(cli: &Cli) -> Outcome {
    match &cli.command {
        Command::RunScan { scenario, bootstrap } => run_scan(cli, scenario, *bootstrap),
        Command::FitDip { csv, integration_time_s } => {
            let data = Interferogram::read_csv(open(csv)?, *integration_time_s).map_err(|e| located(csv, e))?;
            let fit = fit_dip(&data, &guess_dip_params(&data)?)?;
            println!("{}", fit.to_json());
            converged(&fit)
        }
        Command::FitModel { points, bw_a_ghz, bw_b_ghz } => {
            let pts = read_visibility_points(open(points)?).map_err(|e| located(points, e))?;
            if pts.len() < 2 {
                return Err(Failure::Input(format!(
                    "{}: need at least 2 points to fit two parameters, found {}",
                    points.display(),
                    pts.len()
                )));
            }
            let fit = fit_visibility_model(
                &pts,
                AngularBandwidth::from_ghz(*bw_a_ghz)?,
                AngularBandwidth::from_ghz(*bw_b_ghz)?,
            )?;
            println!("{}", fit.to_json());
            converged(&fit)
        }
        Command::Oracle { a, b, overlap, n_max } => {
            let input = FockOracleInput::new(*a, *b, *overlap, *n_max)?;
            let out = fock_hom_oracle(&input)?;
            // Undefined when the inputs can never both reach the splitter.
            let visibility = oracle_dip_visibility(*a, *b, *n_max).ok();
            let report = json!({
                "input_a": a.to_string(),
                "input_b": b.to_string(),
                "overlap": overlap,
                "n_max": n_max,
                "p_coincidence": out.p_coincidence,
                "p_bunch_a": out.p_bunch_a,
                "p_bunch_b": out.p_bunch_b,
                "p_vacuum_or_single": out.p_vacuum_or_single,
                "total": out.total(),
                "visibility": visibility,
            });
            println!("{}", serde_json::to_string_pretty(&report).expect("plain JSON"));
            Ok(())
        }
        Command::LinkBudget { scenario } => {
            let scn = load(scenario, cli.seed)?;
            let launch = scn.classical.launch_power_dbm;
            let report = json!({
                "launch_power_dbm": launch,
                "loss_db": scn.link.loss_db,
                "received_power_dbm": apply_loss_dbm(launch, scn.link.loss_db)?,
                "transmittance": transmittance(scn.link.loss_db)?,
                "length_m": scn.link.length_m,
                "propagation_delay_s": scn.fiber()?.prop_delay,
                "direction": scn.channel().direction.to_string(),
                "raman_noise_per_pulse": scn.raman_noise_per_pulse()?,
            });
            println!("{}", serde_json::to_string_pretty(&report).expect("plain JSON"));
            Ok(())
        }
        Command::ExportTimetags { scenario, step, duration_s } => {
            let scn = load(scenario, cli.seed)?;
            if !(*duration_s > 0.0 && duration_s.is_finite()) {
                return Err(Failure::Input(format!("--duration-s must be > 0, got {duration_s}")));
            }
            let pulses = (duration_s * scn.rep_rate()).round().max(1.0) as u64;
            let mut rng = substream(scn.seed, 0);
            let streams = simulate_streams(&scn, *step, pulses, &mut rng)?;
            let stem = stem(scenario);
            std::fs::create_dir_all(&cli.out_dir)?;
            for (stream, label) in
                streams.iter().zip([DetectorLabel::Herald, DetectorLabel::Snspd1, DetectorLabel::Snspd2])
            {
                let path = cli.out_dir.join(format!("{stem}.step{step}.{label}.tt"));
                let mut w = BufWriter::new(File::create(&path)?);
                stream.write_to(&mut w)?;
                w.flush()?;
                println!("{}: {} events", path.display(), stream.len());
            }
            Ok(())
        }
    }
}

fn run_scan(cli: &Cli, scenario: &Path, bootstrap: usize) -> Outcome {
    let scn = load(scenario, cli.seed)?;
    let scan = build_interferogram(&scn, scn.seed)?;
    let data = &scan.interferogram;
    let init = guess_dip_params(data)?;
    let mut fit = fit_dip(data, &init)?;
    if bootstrap > 0 {
        fit.bootstrap_ci95 = bootstrap_dip(data, &init, bootstrap, scn.seed)?.bootstrap_ci95;
    }

    let stem = stem(scenario);
    std::fs::create_dir_all(&cli.out_dir)?;
    let csv_path = cli.out_dir.join(format!("{stem}.interferogram.csv"));
    let mut w = BufWriter::new(File::create(&csv_path)?);
    data.write_csv(&mut w)?;
    w.flush()?;
    let json_path = cli.out_dir.join(format!("{stem}.fit.json"));
    std::fs::write(&json_path, fit.to_json() + "\n")?;

    println!(
        "{stem}: V = {:.4} ± {:.4}, tau = {:.1} ps, plateau = {:.3} triples/s",
        fit.param("visibility"),
        fit.std_error("visibility"),
        fit.param("tau") * 1e12,
        fit.param("c_max") / data.integration_time,
    );
    println!("wrote {} and {}", csv_path.display(), json_path.display());
    converged(&fit)
}

fn converged(fit: &FitResult) -> Outcome {
    if fit.converged {
        Ok(())
    } else {
        Err(Failure::NotConverged)
    }
}

fn open(path: &Path) -> Result<BufReader<File>, Failure> {
    File::open(path).map(BufReader::new).map_err(|e| Failure::Input(format!("{}: {e}", path.display())))
}

fn located(path: &Path, e: homsim::Error) -> Failure {
    Failure::Input(format!("{}: {e}", path.display()))
}

fn load(path: &Path, seed: Option<u64>) -> Result<Scenario, Failure> {
    let mut scn = Scenario::from_file(path).map_err(|e| located(path, e))?;
    if let Some(seed) = seed {
        scn.seed = seed;
    }
    Ok(scn)
}

fn stem(path: &Path) -> String {
    path.file_stem().map_or_else(|| "scan".into(), |s| s.to_string_lossy().into_owned())
}
