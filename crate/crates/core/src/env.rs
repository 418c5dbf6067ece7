//! Synthetic contextual linear bandit environments.
//!
//! Every emitted context vector lies in the unit ball and every reward in
//! `[0, 1]`. The reward mean for feature `x` is `(<x, theta*> + 1) / 2`; the
//! learners undo this affine map (see [`crate::RewardMap`]), while regret is
//! always measured on the raw scale `<x, theta*>`.

use std::io::Write;

use rand::{Rng, RngCore};
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::linalg::{dot, norm2, min_eigenvalue};
use crate::rng::{stream, SimRng, Stream};

/// Slack allowed on unit-norm and probability checks.
const TOL: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum EnvError {
    #[error("invalid environment: {}", .0.join("; "))]
    Invalid(Vec<String>),
    #[error("unknown action {action} (have {num_actions})")]
    UnknownAction { action: usize, num_actions: usize },
    #[error("context for action {action} has norm {norm} > 1")]
    ContextNorm { action: usize, norm: f64 },
    #[error("reward {0} outside [0, 1]")]
    RewardRange(f64),
    #[error("context model has no finite support")]
    NotFinite,
    #[error("trace I/O: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SupportPoint {
    pub x: Vec<f64>,
    pub p: f64,
}

/// Per-action context distributions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ContextModel {
    /// `N(0, variance_a I)`, rescaled onto the unit sphere when the draw
    /// leaves the ball.
    GaussianProjected { variances: Vec<f64> },
    /// Each coordinate independently `-1/sqrt(d)` with probability `p_a`,
    /// `+1/sqrt(d)` otherwise.
    BinarySupport { p_minus: Vec<f64> },
    /// Explicit finite supports, one list per action.
    Custom { supports: Vec<Vec<SupportPoint>> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum NoiseModel {
    /// `r ~ Bernoulli(mean)`.
    Bernoulli,
    /// `mean + N(0, sigma^2)` truncated symmetrically to stay inside `[0, 1]`.
    TruncatedGaussian { sigma: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvironmentSpec {
    pub dim: usize,
    pub num_actions: usize,
    pub theta_star: Vec<f64>,
    pub contexts: ContextModel,
    pub noise: NoiseModel,
}

/// Feature vectors for one round, indexed by action.
#[derive(Debug, Clone, PartialEq)]
pub struct ContextSet(pub Vec<Vec<f64>>);

impl ContextSet {
    pub fn num_actions(&self) -> usize {
        self.0.len()
    }

    pub fn get(&self, action: usize) -> Option<&[f64]> {
        self.0.get(action).map(Vec::as_slice)
    }

    /// Greedy action under `theta`; ties go to the lowest action id.
    pub fn greedy(&self, theta: &[f64]) -> usize {
        let mut best = 0;
        let mut best_value = f64::NEG_INFINITY;
        for (a, x) in self.0.iter().enumerate() {
            let v = dot(x, theta);
            if v > best_value {
                best = a;
                best_value = v;
            }
        }
        best
    }

    pub fn best_value(&self, theta: &[f64]) -> f64 {
        self.0.iter().map(|x| dot(x, theta)).fold(f64::NEG_INFINITY, f64::max)
    }
}

impl EnvironmentSpec {
    /// Checks every constraint and reports all violations at once.
    pub fn validate(&self) -> Result<(), EnvError> {
        let mut errs = Vec::new();
        if self.dim == 0 {
            errs.push("dim must be >= 1".to_string());
        }
        if self.num_actions == 0 {
            errs.push("num_actions must be >= 1".to_string());
        }
        if self.theta_star.len() != self.dim {
            errs.push(format!("theta_star has length {}, expected {}", self.theta_star.len(), self.dim));
        }
        if self.theta_star.iter().any(|v| !v.is_finite()) {
            errs.push("theta_star has non-finite entries".to_string());
        } else if norm2(&self.theta_star) > 1.0 + TOL {
            errs.push(format!("|theta_star|_2 = {} exceeds 1", norm2(&self.theta_star)));
        }
        match &self.contexts {
            ContextModel::GaussianProjected { variances } => {
                if variances.len() != self.num_actions {
                    errs.push(format!("{} variances for {} actions", variances.len(), self.num_actions));
                }
                if variances.iter().any(|v| !v.is_finite() || *v < 0.0) {
                    errs.push("variances must be finite and non-negative".to_string());
                }
            }
            ContextModel::BinarySupport { p_minus } => {
                if p_minus.len() != self.num_actions {
                    errs.push(format!("{} probabilities for {} actions", p_minus.len(), self.num_actions));
                }
                if p_minus.iter().any(|p| !(0.0..=1.0).contains(p)) {
                    errs.push("p_minus entries must lie in [0, 1]".to_string());
                }
            }
            ContextModel::Custom { supports } => {
                if supports.len() != self.num_actions {
                    errs.push(format!("{} supports for {} actions", supports.len(), self.num_actions));
                }
                for (a, support) in supports.iter().enumerate() {
                    if support.is_empty() {
                        errs.push(format!("action {a}: empty support"));
                    }
                    let total: f64 = support.iter().map(|s| s.p).sum();
                    if (total - 1.0).abs() > 1e-6 {
                        errs.push(format!("action {a}: probabilities sum to {total}"));
                    }
                    for (j, s) in support.iter().enumerate() {
                        if s.x.len() != self.dim {
                            errs.push(format!("action {a} point {j}: length {} != dim {}", s.x.len(), self.dim));
                        } else if norm2(&s.x) > 1.0 + TOL {
                            errs.push(format!("action {a} point {j}: norm {} exceeds 1", norm2(&s.x)));
                        }
                        if !(0.0..=1.0).contains(&s.p) {
                            errs.push(format!("action {a} point {j}: probability {} outside [0, 1]", s.p));
                        }
                    }
                }
            }
        }
        if let NoiseModel::TruncatedGaussian { sigma } = self.noise {
            if !sigma.is_finite() || sigma < 0.0 {
                errs.push(format!("noise sigma {sigma} must be finite and >= 0"));
            }
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(EnvError::Invalid(errs))
        }
    }

    /// Hex SHA-256 of the canonical TOML rendering.
    pub fn fingerprint(&self) -> String {
        let text = toml::to_string(self).expect("environment spec serializes");
        hex::encode(Sha256::digest(text.as_bytes()))
    }

    /// Draws one context set. Consumes randomness independently of any
    /// algorithm state.
    pub fn sample_context<R: RngCore + ?Sized>(&self, rng: &mut R) -> ContextSet {
        let d = self.dim;
        let vectors = match &self.contexts {
            ContextModel::GaussianProjected { variances } => variances
                .iter()
                .map(|&var| {
                    let sd = var.sqrt();
                    let mut x: Vec<f64> = (0..d).map(|_| sd * rng.sample::<f64, _>(StandardNormal)).collect();
                    let n = norm2(&x);
                    if n > 1.0 {
                        x.iter_mut().for_each(|v| *v /= n);
                    }
                    x
                })
                .collect(),
            ContextModel::BinarySupport { p_minus } => {
                let scale = 1.0 / (d as f64).sqrt();
                p_minus
                    .iter()
                    .map(|&p| (0..d).map(|_| if rng.random::<f64>() < p { -scale } else { scale }).collect())
                    .collect()
            }
            ContextModel::Custom { supports } => supports
                .iter()
                .map(|support| {
                    let u: f64 = rng.random();
                    let mut acc = 0.0;
                    for s in support {
                        acc += s.p;
                        if u < acc {
                            return s.x.clone();
                        }
                    }
                    support.last().expect("validated non-empty").x.clone()
                })
                .collect(),
        };
        ContextSet(vectors)
    }

    /// Reward mean `(<x, theta*> + 1) / 2`.
    pub fn mean_reward(&self, x: &[f64]) -> f64 {
        ((dot(x, &self.theta_star) + 1.0) / 2.0).clamp(0.0, 1.0)
    }

    pub fn realize_reward<R: RngCore + ?Sized>(&self, x: &[f64], rng: &mut R) -> f64 {
        let mean = self.mean_reward(x);
        match self.noise {
            NoiseModel::Bernoulli => {
                if rng.random::<f64>() < mean {
                    1.0
                } else {
                    0.0
                }
            }
            NoiseModel::TruncatedGaussian { sigma } => symmetric_truncated_normal(mean, sigma, rng),
        }
    }

    /// Per-action expected feature vectors.
    pub fn mean_contexts(&self) -> Vec<Vec<f64>> {
        let d = self.dim;
        match &self.contexts {
            ContextModel::GaussianProjected { variances } => vec![vec![0.0; d]; variances.len()],
            ContextModel::BinarySupport { p_minus } => {
                let scale = 1.0 / (d as f64).sqrt();
                p_minus.iter().map(|&p| vec![(1.0 - 2.0 * p) * scale; d]).collect()
            }
            ContextModel::Custom { supports } => supports
                .iter()
                .map(|support| {
                    let mut mean = vec![0.0; d];
                    for s in support {
                        mean.iter_mut().zip(&s.x).for_each(|(m, v)| *m += s.p * v);
                    }
                    mean
                })
                .collect(),
        }
    }

    /// Finite per-action supports, when the model has one of manageable size.
    pub fn finite_supports(&self) -> Option<Vec<Vec<SupportPoint>>> {
        match &self.contexts {
            ContextModel::GaussianProjected { .. } => None,
            ContextModel::Custom { supports } => Some(supports.clone()),
            ContextModel::BinarySupport { p_minus } => {
                let d = self.dim;
                if d > 12 {
                    return None;
                }
                let scale = 1.0 / (d as f64).sqrt();
                Some(
                    p_minus
                        .iter()
                        .map(|&p| {
                            (0..1usize << d)
                                .map(|mask| {
                                    let minus = mask.count_ones() as i32;
                                    let x = (0..d).map(|i| if mask >> i & 1 == 1 { -scale } else { scale }).collect();
                                    SupportPoint { x, p: p.powi(minus) * (1.0 - p).powi(d as i32 - minus) }
                                })
                                .filter(|s| s.p > 0.0)
                                .collect()
                        })
                        .collect(),
                )
            }
        }
    }
}

fn symmetric_truncated_normal<R: RngCore + ?Sized>(mean: f64, sigma: f64, rng: &mut R) -> f64 {
    let half_width = mean.min(1.0 - mean);
    if sigma == 0.0 || half_width <= 0.0 {
        return mean;
    }
    if half_width <= sigma {
        // uniform proposal on the window, acceptance >= exp(-1/2)
        loop {
            let z = rng.random_range(-half_width..=half_width);
            if rng.random::<f64>() < (-z * z / (2.0 * sigma * sigma)).exp() {
                return mean + z;
            }
        }
    }
    loop {
        let z = sigma * rng.sample::<f64, _>(StandardNormal);
        if z.abs() <= half_width {
            return mean + z;
        }
    }
}

/// A seeded environment instance: independent streams for contexts and
/// reward noise, with unit-ball and reward-range checks on every draw.
#[derive(Debug, Clone)]
pub struct Environment {
    spec: EnvironmentSpec,
    contexts: SimRng,
    noise: SimRng,
}

impl Environment {
    pub fn new(spec: EnvironmentSpec, seed: u64) -> Result<Self, EnvError> {
        spec.validate()?;
        Ok(Self { spec, contexts: stream(seed, Stream::Contexts), noise: stream(seed, Stream::RewardNoise) })
    }

    pub fn spec(&self) -> &EnvironmentSpec {
        &self.spec
    }

    pub fn next_context(&mut self) -> Result<ContextSet, EnvError> {
        let ctx = self.spec.sample_context(&mut self.contexts);
        for (action, x) in ctx.0.iter().enumerate() {
            let norm = norm2(x);
            if norm > 1.0 + TOL {
                return Err(EnvError::ContextNorm { action, norm });
            }
        }
        Ok(ctx)
    }

    pub fn reward(&mut self, x: &[f64]) -> Result<f64, EnvError> {
        let r = self.spec.realize_reward(x, &mut self.noise);
        if !(0.0..=1.0).contains(&r) {
            return Err(EnvError::RewardRange(r));
        }
        Ok(r)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RoundRecord {
    pub inst_regret: f64,
    pub cum_regret: f64,
    pub bits: u64,
}

/// Per-round regret and uplink accounting for one simulation.
#[derive(Debug, Clone, PartialEq)]
pub struct RegretTrace {
    pub seed: u64,
    pub spec_hash: String,
    pub rounds: Vec<RoundRecord>,
}

pub const TRACE_HEADER: &str = "t,inst_regret,cum_regret,bits";

impl RegretTrace {
    pub fn new(seed: u64, spec_hash: impl Into<String>) -> Self {
        Self { seed, spec_hash: spec_hash.into(), rounds: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.rounds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rounds.is_empty()
    }

    pub fn cumulative(&self) -> f64 {
        self.rounds.last().map_or(0.0, |r| r.cum_regret)
    }

    /// Cumulative regret after round `t` (1-based); `0` for `t = 0`.
    pub fn cumulative_at(&self, t: usize) -> f64 {
        if t == 0 {
            0.0
        } else {
            self.rounds[t - 1].cum_regret
        }
    }

    pub fn total_bits(&self) -> u64 {
        self.rounds.iter().map(|r| r.bits).sum()
    }

    /// Appends the exact instantaneous regret of playing `action`.
    pub fn regret_step(
        &mut self,
        context: &ContextSet,
        theta_star: &[f64],
        action: usize,
        bits: u64,
    ) -> Result<f64, EnvError> {
        let played = context
            .get(action)
            .ok_or(EnvError::UnknownAction { action, num_actions: context.num_actions() })?;
        let inst = context.best_value(theta_star) - dot(played, theta_star);
        let cum = self.cumulative() + inst;
        self.rounds.push(RoundRecord { inst_regret: inst, cum_regret: cum, bits });
        Ok(inst)
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "{TRACE_HEADER}")?;
        for (i, r) in self.rounds.iter().enumerate() {
            writeln!(out, "{},{},{},{}", i + 1, r.inst_regret, r.cum_regret, r.bits)?;
        }
        Ok(())
    }
}

/// Eigenvalue growth of the played-feature Gram matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct EigenGrowth {
    /// `lambda_min(sum_{i<=t} x_i x_i^T)` for `t = 1..=n`.
    pub lambda_min: Vec<f64>,
    /// Largest `c >= 0` with `lambda_min(t) >= c t / d` for every `t >= t0`.
    pub c: f64,
    pub t0: usize,
}

/// Empirical check of the `lambda_min >= c t / d` growth condition.
pub fn eigen_growth_diagnostic(history: &[Vec<f64>], t0: usize) -> EigenGrowth {
    let t0 = t0.max(1);
    let d = history.first().map_or(1, Vec::len);
    let mut gram = nalgebra::DMatrix::<f64>::zeros(d, d);
    let mut lambda_min = Vec::with_capacity(history.len());
    let mut c = f64::INFINITY;
    for (i, x) in history.iter().enumerate() {
        let v = nalgebra::DVector::from_column_slice(x);
        gram += &v * v.transpose();
        let t = i + 1;
        let lmin = min_eigenvalue(&gram).max(0.0);
        lambda_min.push(lmin);
        if t >= t0 {
            c = c.min(lmin * d as f64 / t as f64);
        }
    }
    if !c.is_finite() {
        c = 0.0;
    }
    // eigen-solver noise on an exactly singular matrix
    if c < 1e-12 {
        c = 0.0;
    }
    EigenGrowth { lambda_min, c, t0 }
}
