//! Running plan cells and collecting their records.

use std::collections::BTreeMap;
use std::net::TcpListener;
use std::time::{Duration, Instant};

use bpb::objectives::ObjectiveKind;
use bpb::parallel::{build_engine, EngineConfig, ParallelEngine};
use bpb::perf::{summarize_run, SummaryRow, TimingLedger};
use bpb::search::{run, SamplingEngine, SearchResult};
use serde::{Deserialize, Serialize};

use crate::settings::{Cell, ExperimentPlan};
use crate::CliError;

/// Phase times in seconds and per-point rates in milliseconds.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct TimingRecord {
    pub wall_s: f64,
    pub sampling_s: f64,
    pub algorithm_s: f64,
    pub communication_s: f64,
    pub s1_ms: f64,
    pub a1_ms: f64,
    pub c1_ms: f64,
}

/// Everything about one run, enough to rebuild its summary row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRecord {
    pub function: String,
    pub rastrigin_k: Option<i32>,
    pub external_cmd: Option<String>,
    pub n: usize,
    pub m: u32,
    #[serde(rename = "K")]
    pub k: usize,
    #[serde(rename = "R")]
    pub r: usize,
    pub delta: f64,
    pub p: usize,
    pub transport: String,
    pub seed: u64,
    pub eval_delay_ms: f64,
    pub max_iterations: u64,
    pub max_evaluations: u64,
    pub status: String,
    pub error: Option<String>,
    pub best_value: Option<f64>,
    pub best_point: Option<Vec<u16>>,
    pub iterations: u64,
    #[serde(rename = "N")]
    pub points: u64,
    pub stop_reason: Option<String>,
    pub alpha: Option<f64>,
    pub timings_normalized: bool,
    pub timing: TimingRecord,
}

impl ResultRecord {
    pub fn ok(&self) -> bool {
        self.status == "ok"
    }

    /// Ledger rebuilt from the timing fields.
    pub fn ledger(&self) -> TimingLedger {
        TimingLedger {
            sampling: Duration::from_secs_f64(self.timing.sampling_s),
            algorithm: Duration::from_secs_f64(self.timing.algorithm_s),
            communication: Duration::from_secs_f64(self.timing.communication_s),
            points: self.points,
        }
    }

    /// `None` for failed runs and runs without points.
    pub fn summary(&self) -> Option<SummaryRow> {
        if !self.ok() {
            return None;
        }
        let mut row = summarize_run(&self.function, &self.ledger()).ok()?;
        // recorded rates were computed from unrounded durations
        row.rates.s1 = self.timing.s1_ms;
        row.rates.a1 = self.timing.a1_ms;
        row.rates.c1 = self.timing.c1_ms;
        Some(row)
    }

    /// `S + A + C` in seconds.
    pub fn total_s(&self) -> f64 {
        self.timing.sampling_s + self.timing.algorithm_s + self.timing.communication_s
    }
}

fn base_record(plan: &ExperimentPlan, cell: &Cell) -> ResultRecord {
    let kind = plan.objective.kind();
    let space = plan.objective.space();
    ResultRecord {
        function: kind.name().to_owned(),
        rastrigin_k: match kind {
            ObjectiveKind::Rastrigin { k } => Some(*k),
            _ => None,
        },
        external_cmd: match kind {
            ObjectiveKind::External(cmd) => Some(cmd.to_string()),
            _ => None,
        },
        n: space.n(),
        m: space.m(),
        k: cell.k,
        r: cell.r,
        delta: plan.delta,
        p: cell.p,
        transport: if plan.listen.is_some() { "remote".into() } else { plan.transport.as_str().into() },
        seed: cell.seed,
        eval_delay_ms: plan.eval_delay.map_or(0.0, |d| d.as_secs_f64() * 1e3),
        max_iterations: plan.max_iterations,
        max_evaluations: plan.max_evaluations,
        status: "ok".into(),
        error: None,
        best_value: None,
        best_point: None,
        iterations: 0,
        points: 0,
        stop_reason: None,
        alpha: None,
        timings_normalized: plan.normalize_timings,
        timing: TimingRecord::default(),
    }
}

fn fill(record: &mut ResultRecord, result: &SearchResult, wall: Duration, normalize: bool) {
    record.best_value = Some(result.best_value);
    record.best_point = Some(result.best_point.coords().to_vec());
    record.iterations = result.iterations;
    record.points = result.evaluations;
    record.stop_reason = Some(result.stop_reason.as_str().into());
    record.alpha = result.alpha;
    if normalize {
        return;
    }
    let t = &result.timing;
    let rates = t.rates().ok();
    record.timing = TimingRecord {
        wall_s: wall.as_secs_f64(),
        sampling_s: t.sampling.as_secs_f64(),
        algorithm_s: t.algorithm.as_secs_f64(),
        communication_s: t.communication.as_secs_f64(),
        s1_ms: rates.map_or(0.0, |r| r.s1),
        a1_ms: rates.map_or(0.0, |r| r.a1),
        c1_ms: rates.map_or(0.0, |r| r.c1),
    };
}

/// Runs one cell. Failures land in the record, not in the return value.
pub fn run_single(plan: &ExperimentPlan, cell: &Cell, listener: Option<&TcpListener>) -> ResultRecord {
    let mut record = base_record(plan, cell);
    let outcome = (|| -> Result<(SearchResult, Duration), CliError> {
        let config = plan.search_config(cell)?;
        let mut engine: Box<dyn SamplingEngine + Send> = match listener {
            Some(l) => Box::new(ParallelEngine::accept(&plan.objective, l, cell.p)?),
            None => build_engine(
                &EngineConfig { workers: cell.p, transport: plan.transport, eval_delay: plan.eval_delay },
                &plan.objective,
            )?,
        };
        let started = Instant::now();
        let result = run(&config, &plan.objective, &mut engine)?;
        Ok((result, started.elapsed()))
    })();
    match outcome {
        Ok((result, wall)) => fill(&mut record, &result, wall, plan.normalize_timings),
        Err(e) => {
            record.status = "failed".into();
            record.error = Some(e.to_string());
        }
    }
    record
}

/// Runs every cell in order. Binds `--listen` once for the whole sweep.
pub fn run_sweep(
    plan: &ExperimentPlan,
    mut on_record: impl FnMut(&ResultRecord),
) -> Result<Vec<ResultRecord>, CliError> {
    let listener = match plan.listen {
        Some(addr) => {
            Some(TcpListener::bind(addr).map_err(|e| CliError::Config(format!("cannot listen on {addr}: {e}")))?)
        }
        None => None,
    };
    Ok(plan
        .cells()
        .iter()
        .map(|cell| {
            let record = run_single(plan, cell, listener.as_ref());
            on_record(&record);
            record
        })
        .collect())
}

/// Mean `T` of successful runs for one `(K, p)` pair, over all `R` and seeds.
#[derive(Debug, Clone, PartialEq)]
pub struct AggregateRow {
    pub k: usize,
    pub p: usize,
    pub runs: usize,
    pub failures: usize,
    pub mean_total_s: f64,
}

/// Rows sorted by `(K, p)`.
pub fn aggregate(records: &[ResultRecord]) -> Vec<AggregateRow> {
    let mut groups: BTreeMap<(usize, usize), (usize, usize, f64)> = BTreeMap::new();
    for r in records {
        let g = groups.entry((r.k, r.p)).or_default();
        if r.ok() {
            g.0 += 1;
            g.2 += r.total_s();
        } else {
            g.1 += 1;
        }
    }
    groups
        .into_iter()
        .map(|((k, p), (runs, failures, sum))| AggregateRow {
            k,
            p,
            runs,
            failures,
            mean_total_s: if runs == 0 { f64::NAN } else { sum / runs as f64 },
        })
        .collect()
}
