//! Experiment configuration files.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::env::{EnvError, EnvironmentSpec};
use crate::known::{theta_net, BetaSchedule, XStarSource};
use crate::RewardMap;

use super::HarnessError;

pub const SCHEMA_VERSION: u32 = 1;

/// The parameter grid searched by the known-distribution learner.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ThetaGrid {
    Explicit { points: Vec<Vec<f64>> },
    /// Deterministic low-discrepancy net of `count` points in the unit ball.
    Halton { count: usize },
}

impl ThetaGrid {
    pub fn points(&self, dim: usize) -> Vec<Vec<f64>> {
        match self {
            ThetaGrid::Explicit { points } => points.clone(),
            ThetaGrid::Halton { count } => theta_net(dim, *count),
        }
    }
}

fn default_lambda() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AlgorithmConfig {
    /// One reward bit per round; LinUCB over the tabulated `X*`.
    Known {
        grid: ThetaGrid,
        xstar: XStarSource,
        #[serde(default)]
        xstar_seed: u64,
        #[serde(default = "default_lambda")]
        lambda: f64,
        #[serde(default)]
        beta: BetaSchedule,
        /// Size of the perturbation applied to every `X*` row.
        #[serde(default)]
        misspecification: f64,
        #[serde(default)]
        reward_map: RewardMap,
    },
    /// Quantized contexts and greedy least squares.
    Unknown {
        /// Defaults to the dimension.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        warmup: Option<usize>,
        #[serde(default)]
        reward_map: RewardMap,
    },
    /// Unquantized greedy least squares.
    FullPrecision {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        warmup: Option<usize>,
        #[serde(default)]
        reward_map: RewardMap,
    },
    /// LinUCB over per-action mean features, playing action ids directly.
    Naive {
        #[serde(default = "default_lambda")]
        lambda: f64,
        #[serde(default)]
        beta: BetaSchedule,
        #[serde(default)]
        reward_map: RewardMap,
    },
}

impl AlgorithmConfig {
    pub fn name(&self) -> &'static str {
        match self {
            AlgorithmConfig::Known { .. } => "known",
            AlgorithmConfig::Unknown { .. } => "unknown",
            AlgorithmConfig::FullPrecision { .. } => "full_precision",
            AlgorithmConfig::Naive { .. } => "naive",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    pub name: String,
    pub horizon: usize,
    pub seeds: Vec<u64>,
    /// Relative paths resolve against the working directory.
    pub output_dir: PathBuf,
    pub environment: EnvironmentSpec,
    pub algorithm: AlgorithmConfig,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self, HarnessError> {
        let config: Self = toml::from_str(text).map_err(|e| HarnessError::Parse(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path).map_err(|source| HarnessError::Io { path: path.to_owned(), source })?;
        Self::from_toml(&text).map_err(|e| match e {
            HarnessError::Parse(msg) => HarnessError::Parse(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("experiment config serializes")
    }

    /// Hex SHA-256 of the canonical TOML rendering.
    pub fn fingerprint(&self) -> String {
        hex::encode(Sha256::digest(self.to_toml().as_bytes()))
    }

    /// Collects every violation before any simulation starts.
    pub fn validate(&self) -> Result<(), HarnessError> {
        let mut errs = Vec::new();
        if self.schema_version != SCHEMA_VERSION {
            errs.push(format!("schema_version {} unsupported (expected {SCHEMA_VERSION})", self.schema_version));
        }
        if self.seeds.is_empty() {
            errs.push("seed list is empty".to_string());
        }
        let mut sorted = self.seeds.clone();
        sorted.sort_unstable();
        if sorted.windows(2).any(|w| w[0] == w[1]) {
            errs.push("seed list has duplicates".to_string());
        }
        if let Err(EnvError::Invalid(env_errs)) = self.environment.validate() {
            errs.extend(env_errs.into_iter().map(|e| format!("environment: {e}")));
        }
        let d = self.environment.dim;
        match &self.algorithm {
            AlgorithmConfig::Known { grid, xstar, lambda, beta, misspecification, .. } => {
                let points = match grid {
                    ThetaGrid::Halton { count } if *count == 0 => {
                        errs.push("algorithm.grid: count must be positive".to_string());
                        Vec::new()
                    }
                    ThetaGrid::Halton { .. } if d > 16 => {
                        errs.push("algorithm.grid: Halton nets support dim <= 16".to_string());
                        Vec::new()
                    }
                    _ => grid.points(d),
                };
                if matches!(grid, ThetaGrid::Explicit { points } if points.is_empty()) {
                    errs.push("algorithm.grid: no points".to_string());
                }
                for (i, p) in points.iter().enumerate() {
                    if p.len() != d {
                        errs.push(format!("algorithm.grid point {i}: length {} != dim {d}", p.len()));
                    }
                }
                match xstar {
                    XStarSource::MonteCarlo { samples } if *samples == 0 => {
                        errs.push("algorithm.xstar: samples must be positive".to_string())
                    }
                    XStarSource::Exact if self.environment.finite_supports().is_none() => {
                        errs.push("algorithm.xstar: exact X* needs a finite context support".to_string())
                    }
                    XStarSource::Table { values } => {
                        if values.len() != points.len() {
                            errs.push(format!("algorithm.xstar: {} rows for {} grid points", values.len(), points.len()));
                        }
                        if values.iter().any(|r| r.len() != d) {
                            errs.push("algorithm.xstar: row length differs from dim".to_string());
                        }
                    }
                    _ => {}
                }
                check_linucb(*lambda, beta, &mut errs);
                if !misspecification.is_finite() || *misspecification < 0.0 {
                    errs.push(format!("algorithm.misspecification {misspecification} must be finite and >= 0"));
                }
            }
            AlgorithmConfig::Naive { lambda, beta, .. } => check_linucb(*lambda, beta, &mut errs),
            AlgorithmConfig::Unknown { .. } | AlgorithmConfig::FullPrecision { .. } => {}
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(HarnessError::Invalid(errs))
        }
    }
}

fn check_linucb(lambda: f64, beta: &BetaSchedule, errs: &mut Vec<String>) {
    if !lambda.is_finite() || lambda <= 0.0 {
        errs.push(format!("algorithm.lambda {lambda} must be positive"));
    }
    if let BetaSchedule::Constant { beta } = beta {
        if !beta.is_finite() || *beta < 0.0 {
            errs.push(format!("algorithm.beta {beta} must be finite and >= 0"));
        }
    }
}
