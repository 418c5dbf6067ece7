//! Known context distribution: zero context bits on the uplink.
//!
//! Offline, the learner tabulates `X*(theta) = E[argmax_{x in context} <x, theta>]`
//! for every `theta` in a finite grid. A single-context bandit runs over the
//! table entries; the chosen entry is mapped back to its `theta` and broadcast
//! to the agent, which plays greedily on its own context and returns one
//! dithered reward bit.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, RngCore, SeedableRng};
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::codec::{decode_known, encode_known, CodecError};
use crate::env::{ContextSet, EnvError, Environment, EnvironmentSpec, RegretTrace};
use crate::linalg::{dot, norm2};
use crate::quantizer::{QuantizeError, StochasticQuantizer};
use crate::rng::{stream, SimRng, Stream};
use crate::RewardMap;

/// Upper limit on joint-support enumeration for exact `X*`.
const MAX_JOINT_SUPPORT: usize = 1 << 22;

#[derive(Debug, Error)]
pub enum KnownError {
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Quantize(#[from] QuantizeError),
    #[error(transparent)]
    Codec(#[from] CodecError),
    #[error("theta grid is empty")]
    EmptyGrid,
    #[error("Monte-Carlo sample count must be positive")]
    ZeroSamples,
    #[error("exact X* needs a finite joint support of at most {MAX_JOINT_SUPPORT} points")]
    NoExactForm,
    #[error("theta grid point {index} has length {got}, expected {expected}")]
    GridShape { index: usize, expected: usize, got: usize },
    #[error("update called without a preceding select")]
    UpdateWithoutSelect,
    #[error("uplink used {0} bits, expected exactly 1")]
    BitCount(usize),
}

/// Where the `X*` table came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Provenance {
    ClosedForm,
    MonteCarlo(usize),
}

/// How to compute `X*` when building an [`ActionMap`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum XStarSource {
    /// Enumerate the joint finite support.
    Exact,
    MonteCarlo { samples: usize },
    /// Caller-supplied closed form, one row per grid point.
    Table { values: Vec<Vec<f64>> },
}

/// The grid `Theta`, its `X*` table, and the lowest-index inverse.
#[derive(Debug, Clone, PartialEq)]
pub struct ActionMap {
    theta_grid: Vec<Vec<f64>>,
    table: Vec<Vec<f64>>,
    canonical: Vec<usize>,
    provenance: Provenance,
}

impl ActionMap {
    pub fn from_table(
        theta_grid: Vec<Vec<f64>>,
        table: Vec<Vec<f64>>,
        provenance: Provenance,
    ) -> Result<Self, KnownError> {
        if theta_grid.is_empty() {
            return Err(KnownError::EmptyGrid);
        }
        let d = theta_grid[0].len();
        for (index, row) in theta_grid.iter().chain(&table).enumerate() {
            if row.len() != d {
                return Err(KnownError::GridShape { index: index % theta_grid.len(), expected: d, got: row.len() });
            }
        }
        if table.len() != theta_grid.len() {
            return Err(KnownError::GridShape { index: table.len(), expected: theta_grid.len(), got: table.len() });
        }
        let canonical = (0..table.len())
            .map(|i| table.iter().position(|row| *row == table[i]).expect("row i matches itself"))
            .collect();
        Ok(Self { theta_grid, table, canonical, provenance })
    }

    pub fn len(&self) -> usize {
        self.table.len()
    }

    pub fn is_empty(&self) -> bool {
        self.table.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.theta_grid[0].len()
    }

    pub fn provenance(&self) -> Provenance {
        self.provenance
    }

    pub fn theta_grid(&self) -> &[Vec<f64>] {
        &self.theta_grid
    }

    /// The action set offered to the single-context bandit.
    pub fn table(&self) -> &[Vec<f64>] {
        &self.table
    }

    /// Lowest grid index whose table row equals `x`.
    pub fn inverse(&self, x: &[f64]) -> Option<usize> {
        self.table.iter().position(|row| row.as_slice() == x)
    }

    /// Lowest grid index sharing the table row of `index`.
    pub fn canonical_index(&self, index: usize) -> usize {
        self.canonical[index]
    }

    /// `theta_hat = X^{-1}(table[index])`.
    pub fn theta_for(&self, index: usize) -> &[f64] {
        &self.theta_grid[self.canonical[index]]
    }
}

/// Monte-Carlo estimate of `X*(theta)` from `samples` context draws.
pub fn estimate_xstar<R: RngCore + ?Sized>(
    spec: &EnvironmentSpec,
    theta: &[f64],
    samples: usize,
    rng: &mut R,
) -> Result<Vec<f64>, KnownError> {
    if samples == 0 {
        return Err(KnownError::ZeroSamples);
    }
    let mut acc = vec![0.0; spec.dim];
    for _ in 0..samples {
        let ctx = spec.sample_context(rng);
        let best = &ctx.0[ctx.greedy(theta)];
        acc.iter_mut().zip(best).for_each(|(a, v)| *a += v);
    }
    Ok(acc.into_iter().map(|v| v / samples as f64).collect())
}

/// `X*(theta)` by enumerating the joint finite support of all actions.
pub fn exact_xstar(spec: &EnvironmentSpec, theta: &[f64]) -> Result<Vec<f64>, KnownError> {
    let supports = spec.finite_supports().ok_or(KnownError::NoExactForm)?;
    let joint = supports.iter().try_fold(1usize, |acc, s| acc.checked_mul(s.len()));
    if joint.is_none_or(|n| n > MAX_JOINT_SUPPORT) {
        return Err(KnownError::NoExactForm);
    }
    let mut acc = vec![0.0; spec.dim];
    let mut choice = vec![0usize; supports.len()];
    loop {
        let mut prob = 1.0;
        let mut best: Option<(&[f64], f64)> = None;
        for (support, &j) in supports.iter().zip(&choice) {
            let point = &support[j];
            prob *= point.p;
            let value = dot(&point.x, theta);
            if best.is_none_or(|(_, bv)| value > bv) {
                best = Some((&point.x, value));
            }
        }
        let (x, _) = best.expect("at least one action");
        acc.iter_mut().zip(x).for_each(|(a, v)| *a += prob * v);

        // odometer over the joint support
        let mut pos = 0;
        loop {
            if pos == choice.len() {
                return Ok(acc);
            }
            choice[pos] += 1;
            if choice[pos] < supports[pos].len() {
                break;
            }
            choice[pos] = 0;
            pos += 1;
        }
    }
}

/// Tabulates `X*` over `theta_grid`. Monte-Carlo rows use independent
/// streams derived from `seed`, one per grid point.
pub fn build_action_map(
    spec: &EnvironmentSpec,
    theta_grid: Vec<Vec<f64>>,
    source: &XStarSource,
    seed: u64,
) -> Result<ActionMap, KnownError> {
    spec.validate()?;
    if theta_grid.is_empty() {
        return Err(KnownError::EmptyGrid);
    }
    for (index, theta) in theta_grid.iter().enumerate() {
        if theta.len() != spec.dim {
            return Err(KnownError::GridShape { index, expected: spec.dim, got: theta.len() });
        }
    }
    let (table, provenance) = match source {
        XStarSource::Exact => (
            theta_grid.par_iter().map(|theta| exact_xstar(spec, theta)).collect::<Result<Vec<_>, _>>()?,
            Provenance::ClosedForm,
        ),
        XStarSource::MonteCarlo { samples } => (
            theta_grid
                .par_iter()
                .enumerate()
                .map(|(i, theta)| {
                    let mut rng = SimRng::seed_from_u64(seed);
                    rng.set_stream(1024 + i as u64);
                    estimate_xstar(spec, theta, *samples, &mut rng)
                })
                .collect::<Result<Vec<_>, _>>()?,
            Provenance::MonteCarlo(*samples),
        ),
        XStarSource::Table { values } => (values.clone(), Provenance::ClosedForm),
    };
    ActionMap::from_table(theta_grid, table, provenance)
}

/// Deterministic Halton net of `count` points inside the unit ball.
pub fn theta_net(dim: usize, count: usize) -> Vec<Vec<f64>> {
    const PRIMES: [u64; 16] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53];
    assert!(dim <= PRIMES.len(), "Halton net supports dim <= {}", PRIMES.len());
    let radical_inverse = |mut i: u64, base: u64| {
        let mut f = 1.0;
        let mut r = 0.0;
        while i > 0 {
            f /= base as f64;
            r += f * (i % base) as f64;
            i /= base;
        }
        r
    };
    let mut out = Vec::with_capacity(count);
    let mut i = 1u64;
    while out.len() < count {
        let p: Vec<f64> = (0..dim).map(|k| 2.0 * radical_inverse(i, PRIMES[k]) - 1.0).collect();
        if norm2(&p) <= 1.0 {
            out.push(p);
        }
        i += 1;
    }
    out
}

/// Displaces every table row by exactly `epsilon` in an independent uniform
/// direction.
pub fn misspecify_xstar<R: RngCore + ?Sized>(map: &ActionMap, epsilon: f64, rng: &mut R) -> ActionMap {
    if epsilon == 0.0 {
        return map.clone();
    }
    let table = map
        .table
        .iter()
        .map(|row| {
            let dir = loop {
                let g: Vec<f64> = (0..row.len()).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
                let n = norm2(&g);
                if n > 0.0 {
                    break g.into_iter().map(|v| v / n).collect::<Vec<_>>();
                }
            };
            row.iter().zip(dir).map(|(x, u)| x + epsilon * u).collect()
        })
        .collect();
    ActionMap::from_table(map.theta_grid.clone(), table, map.provenance).expect("shape preserved")
}

/// A single-context linear bandit over a fixed, indexed action set.
pub trait SingleContextBandit {
    /// Chooses an arm for the current round.
    fn select(&mut self) -> usize;
    /// Feeds back the reward for the most recent selection.
    fn update(&mut self, reward: f64) -> Result<(), KnownError>;
}

/// Confidence width schedule for [`LinUcb`].
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BetaSchedule {
    #[default]
    /// `sqrt(lambda) + sqrt(2 ln t + d ln(1 + t / (lambda d)))`.
    Oful,
    Constant { beta: f64 },
}

/// Optimistic ridge regression over a finite arm set.
#[derive(Debug, Clone)]
pub struct LinUcb {
    arms: Vec<DVector<f64>>,
    gram: DMatrix<f64>,
    response: DVector<f64>,
    lambda: f64,
    schedule: BetaSchedule,
    round: u64,
    pending: Option<usize>,
}

impl LinUcb {
    pub fn new(arms: &[Vec<f64>], lambda: f64, schedule: BetaSchedule) -> Self {
        assert!(!arms.is_empty(), "LinUCB needs at least one arm");
        assert!(lambda > 0.0, "ridge parameter must be positive");
        let d = arms[0].len();
        Self {
            arms: arms.iter().map(|a| DVector::from_column_slice(a)).collect(),
            gram: DMatrix::identity(d, d) * lambda,
            response: DVector::zeros(d),
            lambda,
            schedule,
            round: 0,
            pending: None,
        }
    }

    pub fn gram(&self) -> &DMatrix<f64> {
        &self.gram
    }

    pub fn response(&self) -> &DVector<f64> {
        &self.response
    }

    pub fn beta(&self, t: u64) -> f64 {
        match self.schedule {
            BetaSchedule::Constant { beta } => beta,
            BetaSchedule::Oful => {
                let d = self.gram.nrows() as f64;
                let t = t.max(1) as f64;
                self.lambda.sqrt() + (2.0 * t.ln() + d * (1.0 + t / (self.lambda * d)).ln()).sqrt()
            }
        }
    }

    /// Ridge estimate `V^{-1} b`.
    pub fn estimate(&self) -> DVector<f64> {
        self.gram.clone().cholesky().expect("gram is SPD").solve(&self.response)
    }
}

impl SingleContextBandit for LinUcb {
    fn select(&mut self) -> usize {
        self.round += 1;
        let chol = self.gram.clone().cholesky().expect("gram is SPD");
        let theta = chol.solve(&self.response);
        let beta = self.beta(self.round);
        let mut best = 0;
        let mut best_score = f64::NEG_INFINITY;
        for (i, x) in self.arms.iter().enumerate() {
            let width = x.dot(&chol.solve(x)).max(0.0).sqrt();
            let score = theta.dot(x) + beta * width;
            if score > best_score {
                best = i;
                best_score = score;
            }
        }
        self.pending = Some(best);
        best
    }

    fn update(&mut self, reward: f64) -> Result<(), KnownError> {
        let arm = self.pending.take().ok_or(KnownError::UpdateWithoutSelect)?;
        let x = &self.arms[arm];
        self.gram += x * x.transpose();
        self.response += x * reward;
        Ok(())
    }
}

/// Always selects the same arm.
#[derive(Debug, Clone)]
pub struct FixedArm {
    pub arm: usize,
    pending: bool,
}

impl FixedArm {
    pub fn new(arm: usize) -> Self {
        Self { arm, pending: false }
    }
}

impl SingleContextBandit for FixedArm {
    fn select(&mut self) -> usize {
        self.pending = true;
        self.arm
    }

    fn update(&mut self, _reward: f64) -> Result<(), KnownError> {
        if !std::mem::take(&mut self.pending) {
            return Err(KnownError::UpdateWithoutSelect);
        }
        Ok(())
    }
}

/// Learner side: asks the bandit for an arm and returns the grid index of
/// the `theta_hat` to broadcast.
pub fn learner_round_known(bandit: &mut dyn SingleContextBandit, map: &ActionMap) -> usize {
    map.canonical_index(bandit.select())
}

/// Reported by the agent after one known-distribution round.
#[derive(Debug, Clone, PartialEq)]
pub struct KnownAgentStep {
    pub action: usize,
    pub reward: f64,
    pub reward_bit: bool,
}

/// Agent side: greedy play under `theta_hat`, then `SQ_1` of the reward.
pub fn agent_round_known<R: RngCore + ?Sized>(
    theta_hat: &[f64],
    context: &ContextSet,
    env: &mut Environment,
    quantizer_rng: &mut R,
) -> Result<KnownAgentStep, KnownError> {
    let action = context.greedy(theta_hat);
    let reward = env.reward(&context.0[action])?;
    let reward_bit = StochasticQuantizer::new(1)?.encode(reward, quantizer_rng)? == 1;
    Ok(KnownAgentStep { action, reward, reward_bit })
}

/// Trace of a known-distribution run plus the broadcast grid indices.
#[derive(Debug, Clone)]
pub struct KnownRun {
    pub trace: RegretTrace,
    pub theta_indices: Vec<usize>,
}

/// Runs the known-distribution protocol for `horizon` rounds.
pub fn run_known(
    spec: &EnvironmentSpec,
    map: &ActionMap,
    bandit: &mut dyn SingleContextBandit,
    horizon: usize,
    seed: u64,
    reward_map: RewardMap,
) -> Result<KnownRun, KnownError> {
    let mut env = Environment::new(spec.clone(), seed)?;
    let mut quant_rng = stream(seed, Stream::Quantizer);
    let mut trace = RegretTrace::new(seed, spec.fingerprint());
    let mut theta_indices = Vec::with_capacity(horizon);
    for _ in 0..horizon {
        let index = learner_round_known(bandit, map);
        theta_indices.push(index);
        let context = env.next_context()?;
        let step = agent_round_known(map.theta_for(index), &context, &mut env, &mut quant_rng)?;
        let wire = encode_known(step.reward_bit);
        if wire.len() != 1 {
            return Err(KnownError::BitCount(wire.len()));
        }
        trace.regret_step(&context, &spec.theta_star, step.action, wire.len() as u64)?;
        let bit = decode_known(&wire)?;
        bandit.update(reward_map.apply(bit as u8 as f64))?;
    }
    Ok(KnownRun { trace, theta_indices })
}

/// The straw-man fixed-arm policy: `argmax_a <E[X_a], theta_hat>`.
pub fn naive_policy(spec: &EnvironmentSpec, theta_hat: &[f64]) -> usize {
    ContextSet(spec.mean_contexts()).greedy(theta_hat)
}

/// The naive reduction: a single-context bandit over the per-action mean
/// features, with the agent playing the chosen action id regardless of its
/// realized context.
pub fn run_naive(
    spec: &EnvironmentSpec,
    bandit: &mut dyn SingleContextBandit,
    horizon: usize,
    seed: u64,
    reward_map: RewardMap,
) -> Result<RegretTrace, KnownError> {
    let mut env = Environment::new(spec.clone(), seed)?;
    let mut quant_rng = stream(seed, Stream::Quantizer);
    let sq1 = StochasticQuantizer::new(1)?;
    let mut trace = RegretTrace::new(seed, spec.fingerprint());
    for _ in 0..horizon {
        let action = bandit.select();
        let context = env.next_context()?;
        let reward = env.reward(&context.0[action])?;
        let bit = sq1.encode(reward, &mut quant_rng)? == 1;
        let wire = encode_known(bit);
        trace.regret_step(&context, &spec.theta_star, action, wire.len() as u64)?;
        bandit.update(reward_map.apply(decode_known(&wire)? as u8 as f64))?;
    }
    Ok(trace)
}

/// LinUCB over the naive mean-feature arm set.
pub fn naive_bandit(spec: &EnvironmentSpec, lambda: f64, schedule: BetaSchedule) -> LinUcb {
    LinUcb::new(&spec.mean_contexts(), lambda, schedule)
}
