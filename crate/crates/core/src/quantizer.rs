//! Stochastic quantizers and the composite context quantizer.
//!
//! `SQ_l` maps `x in [0, l]` to `floor(x)` with probability `ceil(x) - x` and
//! to `ceil(x)` otherwise, so the decoded value is unbiased and within one
//! level of the input. The range variant rescales `[a, b]` onto `[0, l]`
//! first.
//!
//! The context quantizer splits a unit-ball vector into per-coordinate signs,
//! `SQ_m` magnitudes on the `1/m` grid (`m = ceil(sqrt(d))`), and one dithered
//! bit per coordinate carrying the squared-value correction `x^2 - xhat^2`.

use rand::{Rng, RngCore};
use thiserror::Error;

/// Slack tolerated on range checks before an input counts as out of range.
const RANGE_SLACK: f64 = 1e-12;

/// Slack on the unit-norm precondition of [`quantize_context`].
pub const NORM_SLACK: f64 = 1e-9;

/// Attempts at drawing a magnitude vector inside `Q` before falling back to
/// deterministic flooring.
const MAX_REDRAWS: u32 = 64;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QuantizeError {
    #[error("invalid quantizer: levels={levels}, range=[{lower}, {upper}]")]
    InvalidQuantizer { levels: u32, lower: f64, upper: f64 },
    #[error("value {value} at coordinate {coordinate:?} is outside [{lower}, {upper}]")]
    OutOfRange {
        coordinate: Option<usize>,
        value: f64,
        lower: f64,
        upper: f64,
    },
    #[error("level {level} exceeds quantizer maximum {levels}")]
    LevelOutOfRange { level: u32, levels: u32 },
    #[error("context norm {norm} exceeds 1")]
    NormViolation { norm: f64 },
    #[error("context vector is empty")]
    EmptyContext,
    #[error("non-finite context coordinate {coordinate}")]
    NonFinite { coordinate: usize },
}

/// Unbiased randomized rounding onto `levels + 1` equally spaced points of
/// `[lower, upper]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StochasticQuantizer {
    levels: u32,
    lower: f64,
    upper: f64,
}

impl StochasticQuantizer {
    /// Plain `SQ_l` on `[0, l]`.
    pub fn new(levels: u32) -> Result<Self, QuantizeError> {
        Self::with_range(levels, 0.0, levels as f64)
    }

    /// `SQ_l` on `[lower, upper]`.
    pub fn with_range(levels: u32, lower: f64, upper: f64) -> Result<Self, QuantizeError> {
        if levels == 0 || !lower.is_finite() || !upper.is_finite() || lower >= upper {
            return Err(QuantizeError::InvalidQuantizer { levels, lower, upper });
        }
        Ok(Self { levels, lower, upper })
    }

    pub fn levels(&self) -> u32 {
        self.levels
    }

    pub fn lower(&self) -> f64 {
        self.lower
    }

    pub fn upper(&self) -> f64 {
        self.upper
    }

    /// Worst-case decoding error, `(b - a) / l`.
    pub fn max_error(&self) -> f64 {
        (self.upper - self.lower) / self.levels as f64
    }

    /// Serialized width of one level: `ceil(log2(l + 1))`.
    pub fn bits(&self) -> u32 {
        u32::BITS - self.levels.leading_zeros()
    }

    /// Draws a level for `x`. Exactly one uniform variate is consumed per call.
    pub fn encode<R: RngCore + ?Sized>(&self, x: f64, rng: &mut R) -> Result<u32, QuantizeError> {
        self.encode_at(x, None, rng)
    }

    fn encode_at<R: RngCore + ?Sized>(
        &self,
        x: f64,
        coordinate: Option<usize>,
        rng: &mut R,
    ) -> Result<u32, QuantizeError> {
        let width = self.upper - self.lower;
        let slack = RANGE_SLACK * width.max(1.0);
        if !x.is_finite() || x < self.lower - slack || x > self.upper + slack {
            return Err(QuantizeError::OutOfRange {
                coordinate,
                value: x,
                lower: self.lower,
                upper: self.upper,
            });
        }
        let scaled = (self.levels as f64 * (x - self.lower) / width).clamp(0.0, self.levels as f64);
        Ok(round_stochastic(scaled, self.levels, rng))
    }

    pub fn decode(&self, level: u32) -> Result<f64, QuantizeError> {
        if level > self.levels {
            return Err(QuantizeError::LevelOutOfRange { level, levels: self.levels });
        }
        Ok(self.lower + (self.upper - self.lower) * level as f64 / self.levels as f64)
    }
}

/// Unbiased randomized rounding of `y in [0, levels]`.
fn round_stochastic<R: RngCore + ?Sized>(y: f64, levels: u32, rng: &mut R) -> u32 {
    let u: f64 = rng.random();
    let lo = y.floor();
    let frac = y - lo;
    let level = if u < frac { lo as u32 + 1 } else { lo as u32 };
    level.min(levels)
}

/// Smallest `m` with `m * m >= d`.
pub fn grid_resolution(d: usize) -> u32 {
    let mut m = (d as f64).sqrt().floor() as u64;
    while m * m < d as u64 {
        m += 1;
    }
    while m > 1 && (m - 1) * (m - 1) >= d as u64 {
        m -= 1;
    }
    m.max(1) as u32
}

/// Output of [`quantize_context`]: everything the agent uplinks about the
/// played feature vector.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QuantizedContext {
    /// `+1` or `-1` per coordinate; zero coordinates carry `+1`.
    pub signs: Vec<i8>,
    /// `SQ_m(m |x_i|)` per coordinate.
    pub magnitudes: Vec<u32>,
    /// Level (0 or 1) of the `SQ_1^[-3/m, 3/m]` squared-gap quantizer.
    pub e2_levels: Vec<u8>,
    pub m: u32,
}

impl QuantizedContext {
    pub fn dim(&self) -> usize {
        self.signs.len()
    }

    pub fn l1(&self) -> u64 {
        self.magnitudes.iter().map(|&v| v as u64).sum()
    }

    /// `true` when the magnitude vector lies in `Q = {x : |x|_1 <= 2d}`.
    pub fn in_q(&self) -> bool {
        self.l1() <= 2 * self.dim() as u64
    }

    /// Decoded squared-gap corrections, each `-3/m` or `+3/m`.
    pub fn e2_values(&self) -> Vec<f64> {
        let sq = e2_quantizer(self.m);
        self.e2_levels
            .iter()
            .map(|&l| sq.decode(l as u32).expect("e2 level is 0 or 1"))
            .collect()
    }

    /// Returns `(xhat, xhat_diag)` with `xhat = s * X / m` and
    /// `xhat_diag = xhat^2 + e2`.
    pub fn reconstruct(&self) -> (Vec<f64>, Vec<f64>) {
        let m = self.m as f64;
        let xhat: Vec<f64> = self
            .signs
            .iter()
            .zip(&self.magnitudes)
            .map(|(&s, &v)| s as f64 * v as f64 / m)
            .collect();
        let diag = xhat
            .iter()
            .zip(self.e2_values())
            .map(|(&x, e)| x * x + e)
            .collect();
        (xhat, diag)
    }
}

/// The squared-gap quantizer `SQ_1^[-3/m, 3/m]`.
pub fn e2_quantizer(m: u32) -> StochasticQuantizer {
    let half = 3.0 / m as f64;
    StochasticQuantizer::with_range(1, -half, half).expect("m >= 1 gives a valid range")
}

/// Quantizes a played feature vector with `|x|_2 <= 1`.
pub fn quantize_context<R: RngCore + ?Sized>(
    x: &[f64],
    rng: &mut R,
) -> Result<QuantizedContext, QuantizeError> {
    if x.is_empty() {
        return Err(QuantizeError::EmptyContext);
    }
    if let Some(coordinate) = x.iter().position(|v| !v.is_finite()) {
        return Err(QuantizeError::NonFinite { coordinate });
    }
    let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm > 1.0 + NORM_SLACK {
        return Err(QuantizeError::NormViolation { norm });
    }

    let d = x.len();
    let m = grid_resolution(d);
    let mf = m as f64;
    let signs: Vec<i8> = x.iter().map(|&v| if v < 0.0 { -1 } else { 1 }).collect();
    let scaled: Vec<f64> = x.iter().map(|v| (mf * v.abs()).clamp(0.0, mf)).collect();

    // Independent per-coordinate rounding can leave Q when d is not a perfect
    // square (e.g. d=5, m|x| ~ (2,1,1,1,1)+0 rounding all up gives l1 = 11).
    let budget = 2 * d as u64;
    let mut magnitudes = Vec::with_capacity(d);
    let mut placed = false;
    for _ in 0..MAX_REDRAWS {
        magnitudes.clear();
        magnitudes.extend(scaled.iter().map(|&y| round_stochastic(y, m, rng)));
        if magnitudes.iter().map(|&v| v as u64).sum::<u64>() <= budget {
            placed = true;
            break;
        }
    }
    if !placed {
        // sum floor(m|x_i|) <= m |x|_1 <= m sqrt(d) <= d + sqrt(d) <= 2d
        magnitudes.clear();
        magnitudes.extend(scaled.iter().map(|&y| y.floor() as u32));
    }

    let sq = e2_quantizer(m);
    let mut e2_levels = Vec::with_capacity(d);
    for (i, ((&xi, &s), &v)) in x.iter().zip(&signs).zip(&magnitudes).enumerate() {
        let xhat = s as f64 * v as f64 / mf;
        let gap = (xi * xi - xhat * xhat).clamp(sq.lower(), sq.upper());
        e2_levels.push(sq.encode_at(gap, Some(i), rng)? as u8);
    }

    Ok(QuantizedContext { signs, magnitudes, e2_levels, m })
}
