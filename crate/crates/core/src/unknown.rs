//! Unknown context distribution: the agent uplinks a quantized context.
//!
//! The learner runs a least-squares estimate on decoded reports. Off-diagonal
//! Gram entries come from `xhat xhat^T`; the diagonal uses the unbiased
//! squared-value estimate carried by the e2 bits. The estimate
//! `theta_hat = V^+ u` is recomputed through a pseudo-inverse every round.

use nalgebra::{DMatrix, DVector};
use rand::RngCore;
use thiserror::Error;

use crate::codec::{BitBuffer, CodecError, UplinkCodec};
use crate::env::{ContextSet, EnvError, Environment, EnvironmentSpec, RegretTrace};
use crate::linalg::pinv_solve;
use crate::quantizer::{quantize_context, QuantizeError, StochasticQuantizer};
use crate::rng::{stream, Stream};
use crate::RewardMap;

#[derive(Debug, Error)]
pub enum UnknownError {
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Quantize(#[from] QuantizeError),
    #[error(transparent)]
    Codec(#[from] CodecError),
    #[error("expected {expected}-dimensional input, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("uplink used {got} bits, budget is {budget}")]
    BitBudget { got: usize, budget: usize },
}

/// Knobs for the quantized least-squares learner.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LearnerConfig {
    /// Keep `theta_hat = 0` until this many reports have arrived.
    pub warmup: usize,
    pub reward_map: RewardMap,
}

impl LearnerConfig {
    pub fn for_dim(dim: usize) -> Self {
        Self { warmup: dim, reward_map: RewardMap::default() }
    }
}

/// Learner state after `t` reports.
#[derive(Debug, Clone)]
pub struct QuantizedLeastSquares {
    codec: UplinkCodec,
    config: LearnerConfig,
    response: DVector<f64>,
    gram: DMatrix<f64>,
    theta_hat: DVector<f64>,
    rounds: usize,
}

impl QuantizedLeastSquares {
    pub fn new(dim: usize, config: LearnerConfig) -> Result<Self, UnknownError> {
        Ok(Self {
            codec: UplinkCodec::new(dim)?,
            config,
            response: DVector::zeros(dim),
            gram: DMatrix::zeros(dim, dim),
            theta_hat: DVector::zeros(dim),
            rounds: 0,
        })
    }

    pub fn dim(&self) -> usize {
        self.codec.dim()
    }

    pub fn codec(&self) -> &UplinkCodec {
        &self.codec
    }

    /// The `theta_hat` broadcast at the start of the next round.
    pub fn theta_hat(&self) -> &[f64] {
        self.theta_hat.as_slice()
    }

    /// `u = sum r_i xhat_i`.
    pub fn response(&self) -> &DVector<f64> {
        &self.response
    }

    /// `V` after diagonal replacement.
    pub fn gram(&self) -> &DMatrix<f64> {
        &self.gram
    }

    pub fn rounds(&self) -> usize {
        self.rounds
    }

    /// Decodes one uplink message and folds it into the estimate.
    pub fn receive(&mut self, message: &BitBuffer) -> Result<(), UnknownError> {
        let report = self.codec.decode(message)?;
        let (xhat, diag) = self.codec.quantized(&report)?.reconstruct();
        self.update_decoded(report.reward_bit as u8 as f64, &xhat, &diag)
    }

    /// Update from an already decoded report: reward `r`, reconstruction
    /// `xhat` and squared-value estimates `xhat_diag`.
    pub fn update_decoded(&mut self, reward: f64, xhat: &[f64], xhat_diag: &[f64]) -> Result<(), UnknownError> {
        let d = self.dim();
        for len in [xhat.len(), xhat_diag.len()] {
            if len != d {
                return Err(UnknownError::Dimension { expected: d, got: len });
            }
        }
        let target = self.config.reward_map.apply(reward);
        let x = DVector::from_column_slice(xhat);
        self.response += &x * target;
        self.gram += &x * x.transpose();
        for (i, &v) in xhat_diag.iter().enumerate() {
            self.gram[(i, i)] += v - xhat[i] * xhat[i];
        }
        self.gram = (&self.gram + self.gram.transpose()) * 0.5;
        self.rounds += 1;
        if self.rounds >= self.config.warmup {
            self.theta_hat = pinv_solve(&self.gram, &self.response);
        }
        Ok(())
    }
}

/// What the agent reports after acting.
#[derive(Debug, Clone)]
pub struct UnknownAgentStep {
    pub action: usize,
    pub reward: f64,
    pub message: BitBuffer,
}

/// Agent side: greedy play, then `SQ_1` of the reward and the context
/// quantizer on the played feature.
pub fn agent_round_unknown<R: RngCore + ?Sized>(
    codec: &UplinkCodec,
    theta_hat: &[f64],
    context: &ContextSet,
    env: &mut Environment,
    quantizer_rng: &mut R,
) -> Result<UnknownAgentStep, UnknownError> {
    let action = context.greedy(theta_hat);
    let played = &context.0[action];
    let reward = env.reward(played)?;
    let reward_bit = StochasticQuantizer::new(1)?.encode(reward, quantizer_rng)? == 1;
    let qc = quantize_context(played, quantizer_rng)?;
    let message = codec.encode(&codec.report(reward_bit, &qc)?)?;
    if message.len() != codec.message_bits() {
        return Err(UnknownError::BitBudget { got: message.len(), budget: codec.message_bits() });
    }
    Ok(UnknownAgentStep { action, reward, message })
}

/// Result of an unknown-distribution run.
#[derive(Debug, Clone)]
pub struct UnknownRun {
    pub trace: RegretTrace,
    /// Unquantized played features, for eigenvalue diagnostics.
    pub played: Vec<Vec<f64>>,
    pub final_theta: Vec<f64>,
}

/// Runs the quantized protocol for `horizon` rounds.
pub fn run_unknown(
    spec: &EnvironmentSpec,
    horizon: usize,
    seed: u64,
    config: LearnerConfig,
) -> Result<UnknownRun, UnknownError> {
    let mut env = Environment::new(spec.clone(), seed)?;
    let mut quant_rng = stream(seed, Stream::Quantizer);
    let mut learner = QuantizedLeastSquares::new(spec.dim, config)?;
    let codec = learner.codec().clone();
    let mut trace = RegretTrace::new(seed, spec.fingerprint());
    let mut played = Vec::with_capacity(horizon);
    for _ in 0..horizon {
        let theta_hat = learner.theta_hat().to_vec();
        let context = env.next_context()?;
        let step = agent_round_unknown(&codec, &theta_hat, &context, &mut env, &mut quant_rng)?;
        trace.regret_step(&context, &spec.theta_star, step.action, step.message.len() as u64)?;
        played.push(context.0[step.action].clone());
        learner.receive(&step.message)?;
    }
    Ok(UnknownRun { trace, played, final_theta: learner.theta_hat().to_vec() })
}

/// Bits charged per round to the unquantized baseline: `d + 1` doubles.
pub fn full_precision_bits(dim: usize) -> u64 {
    64 * (dim as u64 + 1)
}

/// Same greedy least-squares loop with exact contexts and real-valued
/// rewards: `V = sum x x^T`, `u = sum r x`.
pub fn run_full_precision(
    spec: &EnvironmentSpec,
    horizon: usize,
    seed: u64,
    config: LearnerConfig,
) -> Result<UnknownRun, UnknownError> {
    let d = spec.dim;
    let mut env = Environment::new(spec.clone(), seed)?;
    let mut trace = RegretTrace::new(seed, spec.fingerprint());
    let mut gram = DMatrix::<f64>::zeros(d, d);
    let mut response = DVector::<f64>::zeros(d);
    let mut theta = DVector::<f64>::zeros(d);
    let mut played = Vec::with_capacity(horizon);
    for t in 1..=horizon {
        let context = env.next_context()?;
        let action = context.greedy(theta.as_slice());
        let x = DVector::from_column_slice(&context.0[action]);
        let reward = env.reward(x.as_slice())?;
        trace.regret_step(&context, &spec.theta_star, action, full_precision_bits(d))?;
        gram += &x * x.transpose();
        response += &x * config.reward_map.apply(reward);
        if t >= config.warmup {
            theta = pinv_solve(&gram, &response);
        }
        played.push(x.as_slice().to_vec());
    }
    Ok(UnknownRun { trace, played, final_theta: theta.as_slice().to_vec() })
}
