//! Seeded experiment runner: configs in, per-seed trace CSVs and a summary out.

mod config;
mod summary;

use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

pub use config::{AlgorithmConfig, ExperimentConfig, ThetaGrid, SCHEMA_VERSION};
pub use summary::{checkpoints, read_trace, read_traces, summarize, Summary, SummaryRow};

use crate::env::{eigen_growth_diagnostic, EnvError, RegretTrace};
use crate::known::{
    build_action_map, misspecify_xstar, naive_bandit, run_known, run_naive, ActionMap, KnownError, LinUcb,
};
use crate::rng::{stream, Stream};
use crate::unknown::{run_full_precision, run_unknown, LearnerConfig, UnknownError};

/// Below this the eigenvalue-growth constant is reported as degenerate.
const DEGENERATE_GROWTH: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid config:\n  - {}", .0.join("\n  - "))]
    Invalid(Vec<String>),
    #[error("config parse error: {0}")]
    Parse(String),
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{}:{line}: {msg}", path.display())]
    Trace { path: PathBuf, line: usize, msg: String },
    #[error("no traces to summarize")]
    NoTraces,
    #[error("traces have different horizons ({expected} vs {got})")]
    HorizonMismatch { expected: usize, got: usize },
    #[error("{0} requires the known-distribution algorithm")]
    NotKnown(&'static str),
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Known(#[from] KnownError),
    #[error(transparent)]
    Unknown(#[from] UnknownError),
}

/// Everything produced by [`run_experiment`].
#[derive(Debug, Clone)]
pub struct ExperimentOutput {
    pub traces: Vec<RegretTrace>,
    pub summary: Summary,
    pub trace_files: Vec<PathBuf>,
    pub summary_file: PathBuf,
    pub manifest_file: PathBuf,
}

#[derive(Serialize)]
struct Manifest<'a> {
    name: &'a str,
    algorithm: &'a str,
    config_sha256: String,
    environment_sha256: String,
    horizon: usize,
    seeds: &'a [u64],
    trace_files: Vec<String>,
}

/// Builds the `X*` table for a known-distribution config.
pub fn action_map_for(config: &ExperimentConfig) -> Result<ActionMap, HarnessError> {
    match &config.algorithm {
        AlgorithmConfig::Known { grid, xstar, xstar_seed, .. } => {
            let points = grid.points(config.environment.dim);
            Ok(build_action_map(&config.environment, points, xstar, *xstar_seed)?)
        }
        _ => Err(HarnessError::NotKnown("an X* table")),
    }
}

/// Simulates one seed. `map` must be supplied for known-distribution configs.
pub fn run_seed(config: &ExperimentConfig, map: Option<&ActionMap>, seed: u64) -> Result<RegretTrace, HarnessError> {
    Ok(run_seed_with_history(config, map, seed)?.0)
}

fn run_seed_with_history(
    config: &ExperimentConfig,
    map: Option<&ActionMap>,
    seed: u64,
) -> Result<(RegretTrace, Vec<Vec<f64>>), HarnessError> {
    let spec = &config.environment;
    let horizon = config.horizon;
    match &config.algorithm {
        AlgorithmConfig::Known { lambda, beta, misspecification, reward_map, .. } => {
            let owned;
            let base = match map {
                Some(m) => m,
                None => {
                    owned = action_map_for(config)?;
                    &owned
                }
            };
            let table = if *misspecification > 0.0 {
                misspecify_xstar(base, *misspecification, &mut stream(seed, Stream::Offline))
            } else {
                base.clone()
            };
            let mut bandit = LinUcb::new(table.table(), *lambda, *beta);
            let run = run_known(spec, &table, &mut bandit, horizon, seed, *reward_map)?;
            Ok((run.trace, Vec::new()))
        }
        AlgorithmConfig::Naive { lambda, beta, reward_map } => {
            let mut bandit = naive_bandit(spec, *lambda, *beta);
            Ok((run_naive(spec, &mut bandit, horizon, seed, *reward_map)?, Vec::new()))
        }
        AlgorithmConfig::Unknown { warmup, reward_map } => {
            let cfg = LearnerConfig { warmup: warmup.unwrap_or(spec.dim), reward_map: *reward_map };
            let run = run_unknown(spec, horizon, seed, cfg)?;
            Ok((run.trace, run.played))
        }
        AlgorithmConfig::FullPrecision { warmup, reward_map } => {
            let cfg = LearnerConfig { warmup: warmup.unwrap_or(spec.dim), reward_map: *reward_map };
            let run = run_full_precision(spec, horizon, seed, cfg)?;
            Ok((run.trace, run.played))
        }
    }
}

/// Runs every seed (in parallel) without touching the filesystem.
pub fn simulate(config: &ExperimentConfig) -> Result<Vec<RegretTrace>, HarnessError> {
    config.validate()?;
    let map = match config.algorithm {
        AlgorithmConfig::Known { .. } => Some(action_map_for(config)?),
        _ => None,
    };
    let results: Vec<(RegretTrace, Vec<Vec<f64>>)> = config
        .seeds
        .par_iter()
        .map(|&seed| run_seed_with_history(config, map.as_ref(), seed))
        .collect::<Result<_, _>>()?;
    if let AlgorithmConfig::Unknown { .. } = config.algorithm {
        let d = config.environment.dim;
        let pilot = &results[0].1;
        let prefix = &pilot[..pilot.len().min(50 * d.max(1))];
        if prefix.len() > d {
            let growth = eigen_growth_diagnostic(prefix, d);
            if growth.c < DEGENERATE_GROWTH {
                log::warn!(
                    "{}: played-feature Gram matrix shows no eigenvalue growth over {} pilot rounds (c = {:e}); \
                     the quantized learner may not converge",
                    config.name,
                    prefix.len(),
                    growth.c
                );
            }
        }
    }
    Ok(results.into_iter().map(|(t, _)| t).collect())
}

/// Runs a config and writes `trace_seed{n}.csv`, `summary.csv` and
/// `manifest.toml` into `out_dir`.
pub fn run_experiment(config: &ExperimentConfig, out_dir: &Path) -> Result<ExperimentOutput, HarnessError> {
    let traces = simulate(config)?;
    let summary = summarize(&traces)?;
    let io = |path: &Path| {
        let path = path.to_owned();
        move |source| HarnessError::Io { path, source }
    };
    std::fs::create_dir_all(out_dir).map_err(io(out_dir))?;

    let mut trace_files = Vec::with_capacity(traces.len());
    for trace in &traces {
        let path = out_dir.join(format!("trace_seed{}.csv", trace.seed));
        let mut buf = Vec::new();
        trace.write_csv(&mut buf).expect("writing to memory");
        std::fs::write(&path, buf).map_err(io(&path))?;
        trace_files.push(path);
    }

    let summary_file = out_dir.join("summary.csv");
    let mut buf = Vec::new();
    summary.write_csv(&mut buf).expect("writing to memory");
    std::fs::write(&summary_file, buf).map_err(io(&summary_file))?;

    let manifest = Manifest {
        name: &config.name,
        algorithm: config.algorithm.name(),
        config_sha256: config.fingerprint(),
        environment_sha256: config.environment.fingerprint(),
        horizon: config.horizon,
        seeds: &config.seeds,
        trace_files: trace_files
            .iter()
            .map(|p| p.file_name().expect("file path").to_string_lossy().into_owned())
            .collect(),
    };
    let manifest_file = out_dir.join("manifest.toml");
    let text = toml::to_string(&manifest).expect("manifest serializes");
    std::fs::write(&manifest_file, text).map_err(io(&manifest_file))?;

    Ok(ExperimentOutput { traces, summary, trace_files, summary_file, manifest_file })
}
