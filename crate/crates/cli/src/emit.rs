//! Result files.
//!
//! | file                    | content                                      |
//! |-------------------------|----------------------------------------------|
//! | `records.jsonl`         | one [`ResultRecord`] per line                |
//! | `summary.tsv`           | function, N, T, S, A, C, S1, A1, C1 per run  |
//! | `time_vs_p.tsv`         | mean T per (K, p), averaged over R and seeds |
//! | `predicted_speedup.tsv` | p, modelled and measured speedup             |

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use bpb::perf::{predicted_speedup_curve, PerPointRates, SummaryRow};

use crate::experiment::{aggregate, ResultRecord};
use crate::CliError;

pub const RECORDS_FILE: &str = "records.jsonl";
pub const SUMMARY_FILE: &str = "summary.tsv";
pub const TIME_VS_P_FILE: &str = "time_vs_p.tsv";
pub const PREDICTED_FILE: &str = "predicted_speedup.tsv";

/// Curves always reach at least this many workers.
const MIN_CURVE_WORKERS: usize = 8;

pub fn records_jsonl(records: &[ResultRecord]) -> Result<String, CliError> {
    let mut out = String::new();
    for r in records {
        out.push_str(&serde_json::to_string(r)?);
        out.push('\n');
    }
    Ok(out)
}

pub fn parse_records(text: &str) -> Result<Vec<ResultRecord>, CliError> {
    text.lines().filter(|l| !l.trim().is_empty()).map(|l| Ok(serde_json::from_str(l)?)).collect()
}

pub fn summary_tsv(records: &[ResultRecord]) -> String {
    let mut out = SummaryRow::HEADER.join("\t");
    out.push('\n');
    for row in records.iter().filter_map(ResultRecord::summary) {
        out.push_str(&row.fields().join("\t"));
        out.push('\n');
    }
    out
}

pub fn time_vs_p_tsv(records: &[ResultRecord]) -> String {
    let mut out = String::from("K\tp\truns\tfailures\tmean_T\n");
    for a in aggregate(records) {
        let _ = writeln!(out, "{}\t{}\t{}\t{}\t{:.6}", a.k, a.p, a.runs, a.failures, a.mean_total_s);
    }
    out
}

fn mean(xs: impl Iterator<Item = f64>) -> Option<f64> {
    let (sum, n) = xs.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    (n > 0).then(|| sum / n as f64)
}

/// Model rates from the records: `S1`, `A1` from serial runs, `C1` from
/// parallel runs (zero when there are none).
pub fn model_rates(records: &[ResultRecord]) -> Option<PerPointRates> {
    let ok: Vec<&ResultRecord> = records.iter().filter(|r| r.ok() && !r.timings_normalized).collect();
    let serial: Vec<&&ResultRecord> = ok.iter().filter(|r| r.p == 0).collect();
    let s1 = mean(serial.iter().map(|r| r.timing.s1_ms))?;
    let a1 = mean(serial.iter().map(|r| r.timing.a1_ms))?;
    let c1 = mean(ok.iter().filter(|r| r.p > 0).map(|r| r.timing.c1_ms)).unwrap_or(0.0);
    PerPointRates::new(s1, a1, c1).ok()
}

/// `σ(p)` from the model alongside the measured mean-time ratio against
/// serial runs, where both exist.
pub fn predicted_tsv(records: &[ResultRecord]) -> String {
    let mut out = String::from("p\tsigma_model\tsigma_measured\n");
    let Some(rates) = model_rates(records) else {
        return out;
    };
    let mut times: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
    for r in records.iter().filter(|r| r.ok()) {
        times.entry(r.p).or_default().push(r.total_s());
    }
    let serial = times.get(&0).and_then(|t| mean(t.iter().copied()));
    let p_max = times.keys().copied().max().unwrap_or(0).max(MIN_CURVE_WORKERS);
    for (p, sigma) in predicted_speedup_curve(&rates, p_max).unwrap_or_default() {
        let measured = match (serial, times.get(&p).and_then(|t| mean(t.iter().copied()))) {
            (Some(t0), Some(tp)) if tp > 0.0 => format!("{:.6}", t0 / tp),
            _ => String::new(),
        };
        let _ = writeln!(out, "{p}\t{sigma:.6}\t{measured}");
    }
    out
}

fn write(dir: &Path, name: &str, text: &str) -> Result<PathBuf, CliError> {
    let path = dir.join(name);
    fs::write(&path, text).map_err(|source| CliError::Io { path: path.clone(), source })?;
    Ok(path)
}

/// Writes every result file into `dir`.
pub fn emit(dir: &Path, records: &[ResultRecord]) -> Result<Vec<PathBuf>, CliError> {
    if records.is_empty() {
        return Err(CliError::Config("nothing to emit".into()));
    }
    fs::create_dir_all(dir).map_err(|source| CliError::Io { path: dir.to_owned(), source })?;
    Ok(vec![
        write(dir, RECORDS_FILE, &records_jsonl(records)?)?,
        write(dir, SUMMARY_FILE, &summary_tsv(records))?,
        write(dir, TIME_VS_P_FILE, &time_vs_p_tsv(records))?,
        write(dir, PREDICTED_FILE, &predicted_tsv(records))?,
    ])
}
