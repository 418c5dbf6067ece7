//! Distributed contextual linear bandits over a bit-constrained uplink.
//!
//! Agents observe contexts, act greedily on a parameter broadcast by a
//! central learner, and report back over a narrow uplink:
//!
//! - [`known`]: the context distribution is known to the learner. The uplink
//!   carries one dithered reward bit per round and nothing about the context.
//! - [`unknown`]: the distribution is unknown. The agent sends its reward bit
//!   plus a quantized context of `1 + 2d + ceil(log2 C(3d, d))` bits in total.
//!
//! [`env`] provides synthetic environments and regret accounting, and
//! [`harness`] runs seeded experiments from TOML configs.

pub mod codec;
pub mod env;
pub mod harness;
pub mod known;
pub mod linalg;
pub mod quantizer;
pub mod rng;
pub mod unknown;

use serde::{Deserialize, Serialize};

pub use codec::{bit_budget, CodecError, UplinkCodec, UplinkMessage};
pub use env::{ContextModel, ContextSet, EnvError, Environment, EnvironmentSpec, NoiseModel, RegretTrace};
pub use quantizer::{quantize_context, QuantizeError, QuantizedContext, StochasticQuantizer};

/// How a learner turns a decoded reward bit into a regression target.
///
/// Environments emit rewards with mean `(<x, theta*> + 1) / 2`. `Centered`
/// inverts that map, giving targets `2 r - 1` whose mean is exactly
/// `<x, theta*>`. `Identity` feeds the bit through unchanged.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RewardMap {
    #[default]
    Centered,
    Identity,
}

impl RewardMap {
    pub fn apply(self, reward: f64) -> f64 {
        match self {
            RewardMap::Centered => 2.0 * reward - 1.0,
            RewardMap::Identity => reward,
        }
    }
}
