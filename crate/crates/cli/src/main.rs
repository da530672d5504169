//! `nfl-lab`: runs no-free-lunch experiments from TOML configs.
//!
//! Exit status: 0 when every check passes, 1 when a violation is certified
//! or a tolerance gate fails, 2 on configuration or I/O errors.

mod commands;
mod config;
mod report;

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use nfl_core::mc_lab::{policy_zoo, ZOO_NAMES};
use nfl_core::seed::with_workers;
use nfl_core::trace_core::count_policies;
use serde::Serialize;

use crate::commands::Completed;
use crate::config::{load, Experiment, Overrides, RunOptions};
use crate::report::{sibling, to_json, write_atomic, Timing};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error(transparent)]
    Core(#[from] nfl_core::Error),
    #[error("i/o error: {0}")]
    Io(String),
}

#[derive(Parser)]
#[command(name = "nfl-lab", version, about = "Exact and Monte Carlo no-free-lunch experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone, Default)]
struct Common {
    /// Experiment config (TOML); defaults apply when omitted.
    config: Option<PathBuf>,
    /// Master seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Monte Carlo sample count (path count for sample-paths).
    #[arg(long)]
    samples: Option<usize>,
    /// Significance level.
    #[arg(long)]
    alpha: Option<f64>,
    /// Report path; the report goes to stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads; 0 uses all cores.
    #[arg(long)]
    workers: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Exact law equality of all deterministic policies on a finite domain.
    VerifyWm(Common),
    /// Compare closure under permutation with law equality over subsets.
    CupScan(Common),
    /// Two-sample tests of performance laws across policies on a grid process.
    McNfl(Common),
    /// Marginal, covariance and standardization checks on a grid process.
    Necessary(Common),
    /// Mesh refinement, E[G] identity and K-limit checks.
    Continuum(Common),
    /// Show the built-in policy zoo and the descriptor grammar.
    ListPolicies {
        /// Grid size the zoo is instantiated on.
        #[arg(long, default_value_t = 101)]
        points: usize,
        /// With --steps, also count deterministic policies for |Y| values.
        #[arg(long)]
        values: Option<usize>,
        #[arg(long)]
        steps: Option<usize>,
        /// Listing path; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write sampled paths as CSV.
    SamplePaths(Common),
}

impl Common {
    fn overrides(&self) -> Overrides {
        Overrides {
            seed: self.seed,
            samples: self.samples,
            alpha: self.alpha,
        }
    }

    fn resolve<C: Experiment>(&self) -> Result<(C, Option<PathBuf>, usize), CliError> {
        let (config, run): (C, RunOptions) = load(self.config.as_deref(), &self.overrides())?;
        let out = self.out.clone().or(run.out);
        let workers = self.workers.or(run.workers).unwrap_or(0);
        Ok((config, out, workers))
    }
}

fn emit(command: &'static str, done: Completed, out: Option<&Path>, started: Instant, workers: usize) -> Result<bool, CliError> {
    match out {
        Some(path) => {
            for (suffix, bytes) in &done.side_tables {
                write_atomic(&sibling(path, suffix), bytes)?;
            }
            write_atomic(path, done.report.as_bytes())?;
            let timing = Timing {
                command,
                wall_time_seconds: started.elapsed().as_secs_f64(),
                workers: if workers == 0 { rayon::current_num_threads() } else { workers },
            };
            write_atomic(&sibling(path, "timing.json"), to_json(&timing)?.as_bytes())?;
        }
        None => {
            std::io::stdout()
                .write_all(done.report.as_bytes())
                .map_err(|e| CliError::Io(e.to_string()))?;
        }
    }
    eprintln!("{command}: {:.2}s", started.elapsed().as_secs_f64());
    Ok(done.pass)
}

fn run_experiment<C: Experiment + Sync>(
    command: &'static str,
    common: &Common,
    f: fn(&C, Option<&Path>) -> Result<Completed, CliError>,
) -> Result<bool, CliError> {
    let started = Instant::now();
    let (config, out, workers) = common.resolve::<C>()?;
    let done = with_workers(workers, || f(&config, out.as_deref()))??;
    emit(command, done, out.as_deref(), started, workers)
}

#[derive(Serialize)]
struct ZooEntry {
    name: &'static str,
    descriptor: String,
}

#[derive(Serialize)]
struct PolicyListing {
    grid_points: usize,
    zoo: Vec<ZooEntry>,
    descriptor_forms: Vec<&'static str>,
    deterministic_policies: Option<String>,
}

fn list_policies(points: usize, values: Option<usize>, steps: Option<usize>, out: Option<&Path>) -> Result<bool, CliError> {
    if points == 0 {
        return Err(CliError::Config("--points must be positive".into()));
    }
    let zoo = policy_zoo(points, 0)
        .into_iter()
        .zip(ZOO_NAMES)
        .map(|(p, name)| ZooEntry {
            name,
            descriptor: p.policy.to_string(),
        })
        .collect();
    let deterministic_policies = match (values, steps) {
        (Some(k), Some(m)) => Some(count_policies(points, k, m).to_string()),
        (None, None) => None,
        _ => return Err(CliError::Config("--values and --steps go together".into())),
    };
    let listing = PolicyListing {
        grid_points: points,
        zoo,
        descriptor_forms: vec![
            "fixed[i,j,...]",
            "rank-greedy(start=i)",
            "bisect-best",
            "random(seed=s)",
            "tree(n=N,values=K:i{0:j,1:k,...})",
            "at(t)  (grid experiments only)",
        ],
        deterministic_policies,
    };
    let json = to_json(&listing)?;
    match out {
        Some(p) => write_atomic(p, json.as_bytes())?,
        None => print!("{json}"),
    }
    Ok(true)
}

fn sample_paths(common: &Common) -> Result<bool, CliError> {
    let (config, out, workers) = common.resolve::<config::SamplePathsConfig>()?;
    let csv = with_workers(workers, || commands::sample_paths(&config))??;
    match out {
        Some(p) => write_atomic(&p, &csv)?,
        None => std::io::stdout().write_all(&csv).map_err(|e| CliError::Io(e.to_string()))?,
    }
    Ok(true)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::VerifyWm(c) => run_experiment("verify-wm", c, commands::verify_wm),
        Command::CupScan(c) => run_experiment("cup-scan", c, commands::cup_scan),
        Command::McNfl(c) => run_experiment("mc-nfl", c, commands::mc_nfl),
        Command::Necessary(c) => run_experiment("necessary", c, commands::necessary),
        Command::Continuum(c) => run_experiment("continuum", c, commands::continuum),
        Command::ListPolicies {
            points,
            values,
            steps,
            out,
        } => list_policies(*points, *values, *steps, out.as_deref()),
        Command::SamplePaths(c) => sample_paths(c),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("nfl-lab: {e}");
            ExitCode::from(2)
        }
    }
}
