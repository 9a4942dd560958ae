//! Experiment front end: single runs, parameter sweeps, worker processes
//! and speedup predictions.

pub mod emit;
pub mod experiment;
pub mod settings;

use std::io::{self, Write};
use std::net::SocketAddr;
use std::path::PathBuf;
use std::process::ExitCode;
use std::thread;
use std::time::{Duration, Instant};

use bpb::objectives::ExternalCommand;
use bpb::parallel::transport::TransportError;
use bpb::parallel::{connect_worker, EngineError, WorkerOptions};
use bpb::perf::{asymptotic_speedup, predicted_speedup_curve, speedup_threshold, PerPointRates};
use bpb::search::SearchError;
use clap::{Args, Parser, Subcommand};
use thiserror::Error;

use crate::experiment::run_sweep;
use crate::settings::{ExperimentPlan, Settings};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("record encoding: {0}")]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Search(#[from] SearchError),
    #[error(transparent)]
    Engine(#[from] EngineError),
}

#[derive(Debug, Parser)]
#[command(name = "bpb", version, about = "Branch-and-probability-bound random search experiments")]
#[command(args_conflicts_with_subcommands = true)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Option<Command>,
    #[command(flatten)]
    pub run: Settings,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run a search or a sweep (the default)
    Run(Box<Settings>),
    /// Serve a coordinator started with --listen
    Worker(WorkerArgs),
    /// Print the modelled speedup curve for given per-point times
    Predict(PredictArgs),
}

#[derive(Debug, Clone, Args)]
pub struct WorkerArgs {
    /// Coordinator address
    #[arg(long)]
    pub connect: SocketAddr,
    /// Evaluator command when the coordinator runs an external objective
    #[arg(long)]
    pub external_cmd: Option<String>,
    #[arg(long)]
    pub eval_delay_ms: Option<f64>,
    /// Reconnect after each session until the coordinator goes away
    #[arg(long)]
    pub persist: bool,
    /// How long to keep retrying the first connection
    #[arg(long, default_value_t = 10.0)]
    pub wait_s: f64,
}

#[derive(Debug, Clone, Args)]
pub struct PredictArgs {
    /// Sampling time per point
    #[arg(long = "S1")]
    pub s1: f64,
    /// Algorithm time per point
    #[arg(long = "A1", default_value_t = 0.0)]
    pub a1: f64,
    /// Communication time per point
    #[arg(long = "C1")]
    pub c1: f64,
    #[arg(long, default_value_t = 20)]
    pub p_max: usize,
}

fn delay(ms: Option<f64>) -> Result<Option<Duration>, CliError> {
    match ms {
        None => Ok(None),
        Some(ms) if ms.is_finite() && ms >= 0.0 => Ok(Some(Duration::from_secs_f64(ms / 1e3))),
        Some(ms) => Err(CliError::Config(format!("--eval-delay-ms must be >= 0, got {ms}"))),
    }
}

pub fn run_command(settings: Settings, out: &mut dyn Write) -> Result<ExitCode, CliError> {
    let settings = settings.with_config_file()?;
    let plan = ExperimentPlan::from_settings(&settings)?;
    let io_err = |source| CliError::Io { path: "<stdout>".into(), source };
    let records = run_sweep(&plan, |r| {
        if let Some(e) = &r.error {
            eprintln!("cell K={} R={} p={} seed={} failed: {e}", r.k, r.r, r.p, r.seed);
        }
    })?;
    write!(out, "{}", emit::summary_tsv(&records)).map_err(io_err)?;
    if let Some(dir) = &plan.out_dir {
        for path in emit::emit(dir, &records)? {
            eprintln!("wrote {}", path.display());
        }
    }
    let failed = records.iter().filter(|r| !r.ok()).count();
    if failed > 0 {
        eprintln!("{failed} of {} cells failed", records.len());
        if plan.strict {
            return Ok(ExitCode::FAILURE);
        }
    }
    Ok(ExitCode::SUCCESS)
}

pub fn worker_command(args: &WorkerArgs) -> Result<ExitCode, CliError> {
    let external = args
        .external_cmd
        .as_deref()
        .map(ExternalCommand::parse)
        .transpose()
        .map_err(|e| CliError::Config(e.to_string()))?;
    let options = WorkerOptions { eval_delay: delay(args.eval_delay_ms)?, external };
    let deadline = Instant::now() + Duration::from_secs_f64(args.wait_s.max(0.0));
    let mut sessions = 0u64;
    loop {
        match connect_worker(args.connect, &options) {
            Ok(()) => sessions += 1,
            Err(EngineError::Io(_)) if sessions == 0 && Instant::now() < deadline => {
                thread::sleep(Duration::from_millis(100));
                continue;
            }
            Err(e @ (EngineError::Io(_) | EngineError::Transport(TransportError::Disconnected))) if sessions > 0 => {
                eprintln!("coordinator gone after {sessions} sessions: {e}");
                return Ok(ExitCode::SUCCESS);
            }
            Err(e) => return Err(e.into()),
        }
        if !args.persist {
            return Ok(ExitCode::SUCCESS);
        }
        thread::sleep(Duration::from_millis(50));
    }
}

pub fn predict_command(args: &PredictArgs, out: &mut dyn Write) -> Result<ExitCode, CliError> {
    let rates = PerPointRates::new(args.s1, args.a1, args.c1).map_err(|e| CliError::Config(e.to_string()))?;
    let curve = predicted_speedup_curve(&rates, args.p_max).map_err(|e| CliError::Config(e.to_string()))?;
    let io_err = |source| CliError::Io { path: "<stdout>".into(), source };
    writeln!(out, "p\tsigma_model\tsigma_asymptotic\tgain_possible").map_err(io_err)?;
    for (p, sigma) in curve {
        writeln!(out, "{p}\t{sigma:.6}\t{:.6}\t{}", asymptotic_speedup(&rates, p), speedup_threshold(&rates, p))
            .map_err(io_err)?;
    }
    Ok(ExitCode::SUCCESS)
}

/// Entry point shared by the binary and the tests.
pub fn main_with(cli: Cli, out: &mut dyn Write) -> Result<ExitCode, CliError> {
    match cli.command {
        None => run_command(cli.run, out),
        Some(Command::Run(s)) => run_command(*s, out),
        Some(Command::Worker(args)) => worker_command(&args),
        Some(Command::Predict(args)) => predict_command(&args, out),
    }
}
