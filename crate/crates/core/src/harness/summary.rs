//! Checkpoint statistics over a set of regret traces.

use std::io::{BufRead, Write};
use std::path::Path;

use crate::env::{RegretTrace, RoundRecord, TRACE_HEADER};

use super::HarnessError;

/// Normal quantile for a two-sided 95% interval.
const Z95: f64 = 1.959_963_984_540_054;

#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub t: usize,
    pub mean_regret: f64,
    pub std_regret: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub bits_per_round: f64,
    /// `mean_regret / baseline mean_regret` when a baseline is supplied.
    pub ratio: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Summary {
    pub horizon: usize,
    pub traces: usize,
    pub rows: Vec<SummaryRow>,
}

/// `{T/100, T/10, T/2, T}`, each at least 1, deduplicated.
pub fn checkpoints(horizon: usize) -> Vec<usize> {
    let mut ts: Vec<usize> = [horizon / 100, horizon / 10, horizon / 2, horizon].into_iter().map(|t| t.max(1)).collect();
    ts.dedup();
    ts
}

/// Traces are reduced in seed order, so the result does not depend on the
/// order they are passed in.
pub fn summarize(traces: &[RegretTrace]) -> Result<Summary, HarnessError> {
    let mut sorted: Vec<&RegretTrace> = traces.iter().collect();
    sorted.sort_by_key(|t| t.seed);
    let traces = sorted.as_slice();
    let first = *traces.first().ok_or(HarnessError::NoTraces)?;
    let horizon = first.len();
    if let Some(bad) = traces.iter().find(|t| t.len() != horizon) {
        return Err(HarnessError::HorizonMismatch { expected: horizon, got: bad.len() });
    }
    if horizon == 0 {
        return Ok(Summary { horizon, traces: traces.len(), rows: Vec::new() });
    }
    let n = traces.len() as f64;
    let rows = checkpoints(horizon)
        .into_iter()
        .map(|t| {
            let values: Vec<f64> = traces.iter().map(|tr| tr.cumulative_at(t)).collect();
            let mean = values.iter().sum::<f64>() / n;
            let std = if traces.len() > 1 {
                (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
            } else {
                0.0
            };
            let half = Z95 * std / n.sqrt();
            let bits = traces
                .iter()
                .map(|tr| tr.rounds[..t].iter().map(|r| r.bits).sum::<u64>() as f64 / t as f64)
                .sum::<f64>()
                / n;
            SummaryRow {
                t,
                mean_regret: mean,
                std_regret: std,
                ci_low: mean - half,
                ci_high: mean + half,
                bits_per_round: bits,
                ratio: None,
            }
        })
        .collect();
    Ok(Summary { horizon, traces: traces.len(), rows })
}

impl Summary {
    /// Fills the ratio column against a baseline with the same horizon.
    pub fn with_baseline(mut self, baseline: &Summary) -> Result<Self, HarnessError> {
        if baseline.horizon != self.horizon {
            return Err(HarnessError::HorizonMismatch { expected: self.horizon, got: baseline.horizon });
        }
        for (row, base) in self.rows.iter_mut().zip(&baseline.rows) {
            row.ratio = Some(row.mean_regret / base.mean_regret);
        }
        Ok(self)
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        let with_ratio = self.rows.iter().any(|r| r.ratio.is_some());
        write!(out, "t,mean_cum_regret,std_cum_regret,ci95_low,ci95_high,bits_per_round,n_traces")?;
        writeln!(out, "{}", if with_ratio { ",ratio" } else { "" })?;
        for r in &self.rows {
            write!(
                out,
                "{},{},{},{},{},{},{}",
                r.t, r.mean_regret, r.std_regret, r.ci_low, r.ci_high, r.bits_per_round, self.traces
            )?;
            match r.ratio {
                Some(x) => writeln!(out, ",{x}")?,
                None => writeln!(out)?,
            }
        }
        Ok(())
    }

    pub fn row_at(&self, t: usize) -> Option<&SummaryRow> {
        self.rows.iter().find(|r| r.t == t)
    }
}

/// Parses a trace CSV written by [`RegretTrace::write_csv`].
pub fn read_trace(path: &Path) -> Result<RegretTrace, HarnessError> {
    let io = |source| HarnessError::Io { path: path.to_owned(), source };
    let bad = |line: usize, msg: &str| HarnessError::Trace { path: path.to_owned(), line, msg: msg.to_string() };
    let file = std::fs::File::open(path).map_err(io)?;
    let mut lines = std::io::BufReader::new(file).lines();
    match lines.next() {
        Some(Ok(h)) if h.trim() == TRACE_HEADER => {}
        Some(Err(e)) => return Err(io(e)),
        _ => return Err(bad(1, "missing trace header")),
    }
    let mut rounds = Vec::new();
    for (i, line) in lines.enumerate() {
        let line = line.map_err(io)?;
        if line.trim().is_empty() {
            continue;
        }
        let lineno = i + 2;
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 4 {
            return Err(bad(lineno, "expected 4 fields"));
        }
        let t: usize = fields[0].parse().map_err(|_| bad(lineno, "bad round index"))?;
        if t != rounds.len() + 1 {
            return Err(bad(lineno, "round indices not consecutive"));
        }
        rounds.push(RoundRecord {
            inst_regret: fields[1].parse().map_err(|_| bad(lineno, "bad inst_regret"))?,
            cum_regret: fields[2].parse().map_err(|_| bad(lineno, "bad cum_regret"))?,
            bits: fields[3].parse().map_err(|_| bad(lineno, "bad bits"))?,
        });
    }
    let seed = path
        .file_stem()
        .and_then(|s| s.to_str())
        .and_then(|s| s.strip_prefix("trace_seed"))
        .and_then(|s| s.parse().ok())
        .unwrap_or(0);
    Ok(RegretTrace { seed, spec_hash: String::new(), rounds })
}

/// Loads every trace matching a glob pattern, in sorted path order.
pub fn read_traces(pattern: &str) -> Result<Vec<RegretTrace>, HarnessError> {
    let paths = glob::glob(pattern).map_err(|e| HarnessError::Parse(format!("glob {pattern}: {e}")))?;
    let mut paths: Vec<_> = paths.collect::<Result<_, _>>().map_err(|e| HarnessError::Parse(e.to_string()))?;
    paths.sort();
    if paths.is_empty() {
        return Err(HarnessError::NoTraces);
    }
    paths.iter().map(|p| read_trace(p)).collect()
}
