//! `hdelm` command line: single solves, sweeps, `R_m` selection, slices and
//! the rate study.
//!
//! Exit codes: 0 success, 2 invalid configuration, 3 solver did not
//! converge (outputs are still written), 1 any other failure.

use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use hdelm::harness::{self, RunConfig, SolveReport, SweepAxis, SweepSpec};
use hdelm::Error;

#[derive(Parser)]
#[command(name = "hdelm", version, about = "Randomized-feature PDE solvers on high-dimensional boxes")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// JSON run configuration; missing keys take their defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Solve once; writes runs.csv and report.json.
    Solve(Common),
    /// Solve over a list of values of one quantity; writes sweep.csv.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// width, n_bc or n_in (overrides the config's sweep section).
        #[arg(long)]
        axis: Option<String>,
        /// Comma-separated values.
        #[arg(long, value_delimiter = ',')]
        values: Vec<usize>,
    },
    /// Pick R_m from the configured candidates; writes select_rm.csv.
    SelectRm(Common),
    /// Solve and tabulate a planar cross-section; writes slice.csv and report.json.
    Slice(Common),
    /// Random-feature approximation rate study; writes rate.csv.
    RateStudy(Common),
}

enum Failure {
    Config(String),
    NotConverged,
    Other(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::InvalidArgument(_) | Error::Unsupported(_) | Error::NotFound(_) | Error::Config(_) => Failure::Config(e.to_string()),
            other => Failure::Other(other.to_string()),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Other(e.to_string())
    }
}

fn load(common: &Common) -> Result<RunConfig, Failure> {
    let mut cfg = match &common.config {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| Failure::Config(format!("{}: {e}", path.display())))?;
            RunConfig::from_json(&text)?
        }
        None => RunConfig::default(),
    };
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    Ok(cfg)
}

fn create(dir: &Path, name: &str) -> Result<BufWriter<File>, Failure> {
    fs::create_dir_all(dir)?;
    Ok(BufWriter::new(File::create(dir.join(name))?))
}

fn write_report(dir: &Path, report: &SolveReport) -> Result<(), Failure> {
    let text = serde_json::to_string_pretty(report).map_err(|e| Failure::Other(e.to_string()))?;
    fs::create_dir_all(dir)?;
    fs::write(dir.join("report.json"), text)?;
    Ok(())
}

fn converged(reports: &[&SolveReport]) -> Result<(), Failure> {
    if reports.iter().all(|r| r.converged) {
        Ok(())
    } else {
        Err(Failure::NotConverged)
    }
}

fn summary(r: &SolveReport) -> String {
    match r.errors {
        Some(e) => format!("e_inf {:.3e} e_rms {:.3e} residual {:.3e} ({:.2} s)", e.e_inf, e.e_rms, r.residual_norm, r.timings.total_s),
        None => format!("residual {:.3e} ({:.2} s)", r.residual_norm, r.timings.total_s),
    }
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Solve(common) => {
            let cfg = load(&common)?;
            let report = harness::run_solve(&cfg)?.report;
            harness::write_runs(create(&common.out, "runs.csv")?, &[], &[report.row()])?;
            write_report(&common.out, &report)?;
            println!("{}", summary(&report));
            converged(&[&report])
        }
        Command::Sweep { common, axis, values } => {
            let cfg = load(&common)?;
            let mut spec = cfg.sweep.clone().unwrap_or(SweepSpec { axis: SweepAxis::Width, values: Vec::new() });
            if let Some(axis) = axis {
                spec.axis = serde_json::from_value(serde_json::Value::String(axis.clone()))
                    .map_err(|_| Failure::Config(format!("unknown sweep axis '{axis}'")))?;
            }
            if !values.is_empty() {
                spec.values = values;
            }
            let reports = harness::run_sweep(&cfg, &spec)?;
            let rows: Vec<_> = reports.iter().map(SolveReport::row).collect();
            harness::write_runs(create(&common.out, "sweep.csv")?, &[harness::sweep_comment(&cfg, &spec)], &rows)?;
            for r in &reports {
                println!("{}", summary(r));
            }
            converged(&reports.iter().collect::<Vec<_>>())
        }
        Command::SelectRm(common) => {
            let cfg = load(&common)?;
            let sel = harness::run_select_rm(&cfg)?;
            let rows: Vec<_> = sel.reports.iter().map(SolveReport::row).collect();
            harness::write_runs(create(&common.out, "select_rm.csv")?, &[format!("selected r_m={}", sel.chosen)], &rows)?;
            println!("selected r_m = {}", sel.chosen);
            converged(&sel.reports.iter().collect::<Vec<_>>())
        }
        Command::Slice(common) => {
            let cfg = load(&common)?;
            let slice = cfg.slice.clone().ok_or_else(|| Failure::Config("configuration has no slice section".into()))?;
            let (report, err) = harness::run_slice(&cfg, &slice, create(&common.out, "slice.csv")?)?;
            write_report(&common.out, &report)?;
            println!("slice e_inf {:.3e} e_rms {:.3e} over {} points", err.e_inf, err.e_rms, err.n_points);
            converged(&[&report])
        }
        Command::RateStudy(common) => {
            let cfg = load(&common)?;
            let mut rate = cfg.rate.clone().unwrap_or_default();
            if let Some(seed) = common.seed {
                rate.seeds = (0..rate.seeds.len().max(3) as u64).map(|k| seed + k).collect();
            }
            let study = harness::run_rate_study(&rate)?;
            harness::write_rate(create(&common.out, "rate.csv")?, &study)?;
            println!("slope {:.4}", study.slope);
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(msg)) => {
            eprintln!("invalid configuration: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::NotConverged) => {
            eprintln!("solver did not converge; outputs were written");
            ExitCode::from(3)
        }
        Err(Failure::Other(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
    }
}
