//! Timing ledger and the parallel speedup model.
//!
//! With `S`, `A`, `C` the sampling, algorithm and communication times of a
//! run over `N` points and `S1 = S/N`, `A1 = A/N`, `C1 = C/N`:
//!
//! ```text
//! T_S  = S + A
//! T_P  = S/p + A + C
//! σ(p) = (S1 + A1) / (S1/p + A1 + C1)
//! σ̃(p) = r·p / (r + p),   r = S1/C1
//! ```
//!
//! The model functions are unit-agnostic; rates produced here are in
//! milliseconds per point.

use std::time::Duration;

use thiserror::Error;

use crate::search::IterationTrace;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PerfError {
    #[error("the model needs p >= 1")]
    NoWorkers,
    #[error("run examined no points")]
    EmptyRun,
    #[error("rates must be finite and non-negative: {0:?}")]
    InvalidRates(PerPointRates),
}

/// Phase totals of a run.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct TimingLedger {
    pub sampling: Duration,
    pub algorithm: Duration,
    pub communication: Duration,
    /// Drawn points, duplicates included.
    pub points: u64,
}

impl TimingLedger {
    /// Sum of the per-iteration phase times.
    pub fn from_trace(trace: &[IterationTrace]) -> Self {
        let mut ledger = TimingLedger::default();
        for t in trace {
            ledger.sampling += t.sampling;
            ledger.algorithm += t.algorithm;
            ledger.communication += t.communication;
        }
        ledger.points = trace.last().map_or(0, |t| t.evaluations);
        ledger
    }

    /// `S + A + C`.
    pub fn total(&self) -> Duration {
        self.sampling + self.algorithm + self.communication
    }

    pub fn rates(&self) -> Result<PerPointRates, PerfError> {
        if self.points == 0 {
            return Err(PerfError::EmptyRun);
        }
        let per = |d: Duration| d.as_secs_f64() * 1e3 / self.points as f64;
        Ok(PerPointRates { s1: per(self.sampling), a1: per(self.algorithm), c1: per(self.communication) })
    }
}

/// Per-point phase times.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PerPointRates {
    pub s1: f64,
    pub a1: f64,
    pub c1: f64,
}

impl PerPointRates {
    pub fn new(s1: f64, a1: f64, c1: f64) -> Result<Self, PerfError> {
        let r = PerPointRates { s1, a1, c1 };
        if [s1, a1, c1].iter().all(|v| v.is_finite() && *v >= 0.0) {
            Ok(r)
        } else {
            Err(PerfError::InvalidRates(r))
        }
    }

    /// `r = S1/C1`; infinite when `C1 = 0`.
    pub fn ratio(&self) -> f64 {
        if self.c1 == 0.0 {
            f64::INFINITY
        } else {
            self.s1 / self.c1
        }
    }
}

/// `T_S = S + A`.
pub fn serial_total(ledger: &TimingLedger) -> Duration {
    ledger.sampling + ledger.algorithm
}

/// `T_P = S1·N/p + A1·N + C`.
pub fn parallel_total_model(
    rates: &PerPointRates,
    points: u64,
    p: usize,
    communication: f64,
) -> Result<f64, PerfError> {
    if p == 0 {
        return Err(PerfError::NoWorkers);
    }
    let n = points as f64;
    Ok(rates.s1 * n / p as f64 + rates.a1 * n + communication)
}

/// `σ(p)`.
pub fn speedup_model(rates: &PerPointRates, p: usize) -> Result<f64, PerfError> {
    if p == 0 {
        return Err(PerfError::NoWorkers);
    }
    Ok((rates.s1 + rates.a1) / (rates.s1 / p as f64 + rates.a1 + rates.c1))
}

/// Whether `r > p/(p−1)`, the condition for any gain with `A1` ignored.
/// Always false for `p < 2`.
pub fn speedup_threshold(rates: &PerPointRates, p: usize) -> bool {
    if p < 2 {
        return false;
    }
    if rates.c1 == 0.0 {
        return true;
    }
    let p = p as f64;
    rates.ratio() > p / (p - 1.0)
}

/// Smallest `p ≤ p_max` meeting [`speedup_threshold`].
pub fn min_workers_for_speedup(rates: &PerPointRates, p_max: usize) -> Option<usize> {
    (2..=p_max).find(|&p| speedup_threshold(rates, p))
}

/// `σ̃(p) = r·p/(r + p)`, the speedup bound when `A1` is negligible.
pub fn asymptotic_speedup(rates: &PerPointRates, p: usize) -> f64 {
    let r = rates.ratio();
    let p = p as f64;
    if r.is_infinite() {
        return p;
    }
    r * p / (r + p)
}

/// `(p, σ(p))` for `p = 1..=p_max`.
pub fn predicted_speedup_curve(rates: &PerPointRates, p_max: usize) -> Result<Vec<(usize, f64)>, PerfError> {
    if p_max == 0 {
        return Err(PerfError::NoWorkers);
    }
    (1..=p_max).map(|p| Ok((p, speedup_model(rates, p)?))).collect()
}

/// One summary table row. Times are in seconds, rates in milliseconds per
/// point.
#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub function: String,
    pub points: u64,
    /// `S + A + C`.
    pub total: f64,
    pub sampling: f64,
    pub algorithm: f64,
    pub communication: f64,
    pub rates: PerPointRates,
}

impl SummaryRow {
    pub const HEADER: [&'static str; 9] = ["function", "N", "T", "S", "A", "C", "S1", "A1", "C1"];

    pub fn fields(&self) -> [String; 9] {
        [
            self.function.clone(),
            self.points.to_string(),
            format!("{:.6}", self.total),
            format!("{:.6}", self.sampling),
            format!("{:.6}", self.algorithm),
            format!("{:.6}", self.communication),
            format!("{:.6}", self.rates.s1),
            format!("{:.6}", self.rates.a1),
            format!("{:.6}", self.rates.c1),
        ]
    }
}

pub fn summarize_run(function: &str, ledger: &TimingLedger) -> Result<SummaryRow, PerfError> {
    let rates = ledger.rates()?;
    Ok(SummaryRow {
        function: function.to_owned(),
        points: ledger.points,
        total: ledger.total().as_secs_f64(),
        sampling: ledger.sampling.as_secs_f64(),
        algorithm: ledger.algorithm.as_secs_f64(),
        communication: ledger.communication.as_secs_f64(),
        rates,
    })
}
