//! Command-line flags, their config-file twins, and plan resolution.

use std::fs;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::time::Duration;

use bpb::objectives::{ExternalCommand, ObjectiveKind, ObjectiveSpec};
use bpb::parallel::Transport;
use bpb::search::{SearchConfig, DEFAULT_MAX_EVALUATIONS, DEFAULT_MAX_ITERATIONS};
use bpb::space::SpaceSpec;
use clap::{Args, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::CliError;

pub const DEFAULT_K: usize = 100;
pub const DEFAULT_DELTA: f64 = 0.1;
pub const DEFAULT_RASTRIGIN_K: i32 = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Function {
    Dejong,
    Rastrigin,
    Ridge,
    External,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TransportArg {
    Inproc,
    Socket,
}

impl From<TransportArg> for Transport {
    fn from(t: TransportArg) -> Self {
        match t {
            TransportArg::Inproc => Transport::InProcess,
            TransportArg::Socket => Transport::Socket,
        }
    }
}

/// Run settings. Every flag has a key of the same name in the TOML config
/// file; flags win over the file.
#[derive(Debug, Clone, Default, PartialEq, Args, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct Settings {
    /// TOML file with defaults for any of these flags
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,

    /// Dimension of the search space
    #[arg(long)]
    pub n: Option<usize>,
    /// Values per coordinate
    #[arg(long)]
    pub m: Option<u32>,
    #[arg(long, value_enum)]
    pub function: Option<Function>,
    /// Frequency of the Rastrigin function [default: 2]
    #[arg(long)]
    pub rastrigin_k: Option<i32>,
    /// Evaluator command: reads one point per line, answers one value per line
    #[arg(long)]
    pub external_cmd: Option<String>,

    /// Points per sampling round [default: 100]
    #[arg(long = "K")]
    #[serde(rename = "K")]
    pub k: Option<usize>,
    /// Initial radius [default: min(n - 1, 100)]
    #[arg(long = "R")]
    #[serde(rename = "R")]
    pub r: Option<usize>,
    /// Removal bound of the criterion [default: 0.1]
    #[arg(long)]
    pub delta: Option<f64>,
    /// Worker count; 0 samples in the coordinator
    #[arg(long)]
    pub workers: Option<usize>,
    #[arg(long, value_enum)]
    pub transport: Option<TransportArg>,
    /// Wait for external workers on this address instead of starting threads
    #[arg(long)]
    pub listen: Option<SocketAddr>,
    /// Base seed; replication i uses seed + i [default: 1]
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub max_iterations: Option<u64>,
    #[arg(long)]
    pub max_evaluations: Option<u64>,

    /// Comma-separated K values
    #[arg(long = "sweep-K", value_delimiter = ',')]
    #[serde(rename = "sweep-K", default)]
    pub sweep_k: Vec<usize>,
    /// Comma-separated R values
    #[arg(long = "sweep-R", value_delimiter = ',')]
    #[serde(rename = "sweep-R", default)]
    pub sweep_r: Vec<usize>,
    /// Comma-separated worker counts
    #[arg(long = "sweep-p", value_delimiter = ',')]
    #[serde(default)]
    pub sweep_p: Vec<usize>,
    /// Replications per cell [default: 1]
    #[arg(long)]
    pub reps: Option<u64>,
    /// Artificial delay per fresh evaluation
    #[arg(long)]
    pub eval_delay_ms: Option<f64>,
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
    /// Write zeros for every timing field
    #[arg(long)]
    #[serde(default)]
    pub normalize_timings: bool,
    /// Exit non-zero when any cell fails
    #[arg(long)]
    #[serde(default)]
    pub strict: bool,
}

impl Settings {
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Config(format!("config file: {e}")))
    }

    pub fn from_file(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path).map_err(|source| CliError::Io { path: path.to_owned(), source })?;
        Self::from_toml(&text)
    }

    /// Loads the `--config` file, if any, under these flags.
    pub fn with_config_file(self) -> Result<Self, CliError> {
        match &self.config {
            Some(path) => Ok(Self::from_file(path)?.overlay(self)),
            None => Ok(self),
        }
    }

    /// `over` wins wherever it says anything.
    pub fn overlay(self, over: Settings) -> Settings {
        fn vec<T>(base: Vec<T>, over: Vec<T>) -> Vec<T> {
            if over.is_empty() {
                base
            } else {
                over
            }
        }
        Settings {
            config: over.config.or(self.config),
            n: over.n.or(self.n),
            m: over.m.or(self.m),
            function: over.function.or(self.function),
            rastrigin_k: over.rastrigin_k.or(self.rastrigin_k),
            external_cmd: over.external_cmd.or(self.external_cmd),
            k: over.k.or(self.k),
            r: over.r.or(self.r),
            delta: over.delta.or(self.delta),
            workers: over.workers.or(self.workers),
            transport: over.transport.or(self.transport),
            listen: over.listen.or(self.listen),
            seed: over.seed.or(self.seed),
            max_iterations: over.max_iterations.or(self.max_iterations),
            max_evaluations: over.max_evaluations.or(self.max_evaluations),
            sweep_k: vec(self.sweep_k, over.sweep_k),
            sweep_r: vec(self.sweep_r, over.sweep_r),
            sweep_p: vec(self.sweep_p, over.sweep_p),
            reps: over.reps.or(self.reps),
            eval_delay_ms: over.eval_delay_ms.or(self.eval_delay_ms),
            out_dir: over.out_dir.or(self.out_dir),
            normalize_timings: over.normalize_timings || self.normalize_timings,
            strict: over.strict || self.strict,
        }
    }
}

/// Default initial radius for dimension `n`.
pub fn default_radius(n: usize) -> usize {
    n.saturating_sub(1).clamp(1, 100)
}

/// One point of the sweep grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Cell {
    pub k: usize,
    pub r: usize,
    pub p: usize,
    pub seed: u64,
}

/// A validated experiment.
#[derive(Debug, Clone)]
pub struct ExperimentPlan {
    pub objective: ObjectiveSpec,
    pub delta: f64,
    pub ks: Vec<usize>,
    pub rs: Vec<usize>,
    pub ps: Vec<usize>,
    pub seeds: Vec<u64>,
    pub transport: Transport,
    pub listen: Option<SocketAddr>,
    pub eval_delay: Option<Duration>,
    pub max_iterations: u64,
    pub max_evaluations: u64,
    pub out_dir: Option<PathBuf>,
    pub normalize_timings: bool,
    pub strict: bool,
}

impl ExperimentPlan {
    pub fn from_settings(s: &Settings) -> Result<Self, CliError> {
        let n = s.n.ok_or_else(|| CliError::Config("--n is required".into()))?;
        let m = s.m.ok_or_else(|| CliError::Config("--m is required".into()))?;
        let space = SpaceSpec::new(n, m).map_err(|e| CliError::Config(e.to_string()))?;
        let function = s.function.unwrap_or(Function::Dejong);
        let kind = match function {
            Function::Dejong => ObjectiveKind::DeJong,
            Function::Ridge => ObjectiveKind::Ridge,
            Function::Rastrigin => ObjectiveKind::Rastrigin { k: s.rastrigin_k.unwrap_or(DEFAULT_RASTRIGIN_K) },
            Function::External => {
                let line = s
                    .external_cmd
                    .as_deref()
                    .ok_or_else(|| CliError::Config("--function external needs --external-cmd".into()))?;
                ObjectiveKind::External(ExternalCommand::parse(line).map_err(|e| CliError::Config(e.to_string()))?)
            }
        };
        if function != Function::External && s.external_cmd.is_some() {
            return Err(CliError::Config("--external-cmd needs --function external".into()));
        }
        let objective = ObjectiveSpec::new(kind, space).map_err(|e| CliError::Config(e.to_string()))?;

        let pick = |sweep: &[usize], single: Option<usize>, default: usize| -> Vec<usize> {
            if sweep.is_empty() {
                vec![single.unwrap_or(default)]
            } else {
                sweep.to_vec()
            }
        };
        let ks = pick(&s.sweep_k, s.k, DEFAULT_K);
        let rs = pick(&s.sweep_r, s.r, default_radius(n));
        let ps = pick(&s.sweep_p, s.workers, 0);
        let delta = s.delta.unwrap_or(DEFAULT_DELTA);
        let reps = s.reps.unwrap_or(1);
        if reps == 0 {
            return Err(CliError::Config("--reps must be at least 1".into()));
        }
        let seed = s.seed.unwrap_or(1);
        let seeds = (0..reps).map(|i| seed.wrapping_add(i)).collect();
        for &k in &ks {
            for &r in &rs {
                SearchConfig::new(space, k, r, delta, seed).map_err(|e| CliError::Config(e.to_string()))?;
            }
        }
        if s.listen.is_some() && ps.contains(&0) {
            return Err(CliError::Config("--listen needs at least one worker per cell".into()));
        }
        let eval_delay = match s.eval_delay_ms {
            None => None,
            Some(ms) if ms.is_finite() && ms >= 0.0 => Some(Duration::from_secs_f64(ms / 1e3)),
            Some(ms) => return Err(CliError::Config(format!("--eval-delay-ms must be >= 0, got {ms}"))),
        };
        Ok(ExperimentPlan {
            objective,
            delta,
            ks,
            rs,
            ps,
            seeds,
            transport: s.transport.map_or(Transport::InProcess, Transport::from),
            listen: s.listen,
            eval_delay,
            max_iterations: s.max_iterations.unwrap_or(DEFAULT_MAX_ITERATIONS),
            max_evaluations: s.max_evaluations.unwrap_or(DEFAULT_MAX_EVALUATIONS),
            out_dir: s.out_dir.clone(),
            normalize_timings: s.normalize_timings,
            strict: s.strict,
        })
    }

    /// Cells in K, R, p, seed order.
    pub fn cells(&self) -> Vec<Cell> {
        let mut out = Vec::with_capacity(self.ks.len() * self.rs.len() * self.ps.len() * self.seeds.len());
        for &k in &self.ks {
            for &r in &self.rs {
                for &p in &self.ps {
                    for &seed in &self.seeds {
                        out.push(Cell { k, r, p, seed });
                    }
                }
            }
        }
        out
    }

    pub fn search_config(&self, cell: &Cell) -> Result<SearchConfig, CliError> {
        Ok(SearchConfig::new(*self.objective.space(), cell.k, cell.r, self.delta, cell.seed)
            .map_err(|e| CliError::Config(e.to_string()))?
            .with_caps(self.max_iterations, self.max_evaluations))
    }
}
