//! Bit-exact uplink messages.
//!
//! Wire layout of a context report for dimension `d`, most significant bit
//! first, no padding between fields:
//!
//! ```text
//! [reward: 1][signs: d, +1 -> 1][e2: d, +3/m -> 1][rank of X_t: ceil(log2 C(3d, d)), big-endian]
//! ```
//!
//! The known-distribution uplink is a single reward bit. Byte padding only
//! happens in [`BitBuffer::as_bytes`]; all bit accounting uses unpadded
//! lengths.

mod bits;
mod enumeration;

pub use bits::BitBuffer;
pub use enumeration::{binomial, ceil_log2, q_size, LatticeBall};

use num_bigint::BigUint;
use thiserror::Error;

use crate::quantizer::{grid_resolution, QuantizedContext};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum CodecError {
    #[error("dimension must be at least 1")]
    ZeroDimension,
    #[error("expected dimension {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("magnitude vector has l1 norm {l1} > {limit}, outside Q")]
    NotInQ { l1: u64, limit: u64 },
    #[error("rank {rank} out of range for |Q| = {size}")]
    RankOutOfRange { rank: String, size: String },
    #[error("truncated message: needed {needed} bits, {available} available")]
    Truncated { needed: usize, available: usize },
    #[error("message has {extra} trailing bits")]
    TrailingBits { extra: usize },
    #[error("value needs {bits} bits but field is {width} wide")]
    FieldOverflow { bits: u64, width: u32 },
    #[error("{bytes} bytes cannot frame {bits} bits")]
    Framing { bytes: usize, bits: usize },
    #[error("message length {got} bits, expected {expected}")]
    Length { expected: usize, got: usize },
}

/// Agent-to-learner payload.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum UplinkMessage {
    /// Known context distribution: one dithered reward bit and nothing else.
    Known { reward_bit: bool },
    /// Unknown context distribution: reward bit plus the quantized context.
    Unknown(ContextReport),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ContextReport {
    pub reward_bit: bool,
    /// `true` encodes sign `+1`.
    pub signs: Vec<bool>,
    /// `true` encodes `e2 = +3/m`.
    pub e2_bits: Vec<bool>,
    /// Lexicographic rank of the magnitude vector in `Q`.
    pub rank: BigUint,
}

/// Exact per-round bits of a context report: `1 + 2d + ceil(log2 C(3d, d))`.
pub fn bit_budget(d: usize) -> u64 {
    1 + 2 * d as u64 + ceil_log2(&q_size(d)) as u64
}

/// Published upper bound `1 + log2(2d + 1) + 5.03 d`.
pub fn published_bit_bound(d: usize) -> f64 {
    1.0 + (2.0 * d as f64 + 1.0).log2() + 5.03 * d as f64
}

pub fn encode_known(reward_bit: bool) -> BitBuffer {
    let mut buf = BitBuffer::new();
    buf.push_bit(reward_bit);
    buf
}

pub fn decode_known(buf: &BitBuffer) -> Result<bool, CodecError> {
    if buf.len() != 1 {
        return Err(CodecError::Length { expected: 1, got: buf.len() });
    }
    let mut buf = buf.clone();
    buf.rewind();
    buf.read_bit()
}

/// Encoder/decoder for context reports of one fixed dimension.
#[derive(Debug, Clone)]
pub struct UplinkCodec {
    ball: LatticeBall,
}

impl UplinkCodec {
    pub fn new(d: usize) -> Result<Self, CodecError> {
        Ok(Self { ball: LatticeBall::new(d)? })
    }

    pub fn dim(&self) -> usize {
        self.ball.dim()
    }

    pub fn ball(&self) -> &LatticeBall {
        &self.ball
    }

    pub fn message_bits(&self) -> usize {
        1 + 2 * self.dim() + self.ball.rank_bits() as usize
    }

    pub fn report(&self, reward_bit: bool, qc: &QuantizedContext) -> Result<ContextReport, CodecError> {
        if qc.dim() != self.dim() {
            return Err(CodecError::DimensionMismatch { expected: self.dim(), got: qc.dim() });
        }
        Ok(ContextReport {
            reward_bit,
            signs: qc.signs.iter().map(|&s| s > 0).collect(),
            e2_bits: qc.e2_levels.iter().map(|&l| l == 1).collect(),
            rank: self.ball.rank(&qc.magnitudes)?,
        })
    }

    /// Rebuilds the quantized context carried by `report`.
    pub fn quantized(&self, report: &ContextReport) -> Result<QuantizedContext, CodecError> {
        self.check_shape(report)?;
        Ok(QuantizedContext {
            signs: report.signs.iter().map(|&s| if s { 1 } else { -1 }).collect(),
            magnitudes: self.ball.unrank(&report.rank)?,
            e2_levels: report.e2_bits.iter().map(|&b| b as u8).collect(),
            m: grid_resolution(self.dim()),
        })
    }

    fn check_shape(&self, report: &ContextReport) -> Result<(), CodecError> {
        for len in [report.signs.len(), report.e2_bits.len()] {
            if len != self.dim() {
                return Err(CodecError::DimensionMismatch { expected: self.dim(), got: len });
            }
        }
        if report.rank >= *self.ball.size() {
            return Err(CodecError::RankOutOfRange {
                rank: report.rank.to_string(),
                size: self.ball.size().to_string(),
            });
        }
        Ok(())
    }

    pub fn encode(&self, report: &ContextReport) -> Result<BitBuffer, CodecError> {
        self.check_shape(report)?;
        let mut buf = BitBuffer::new();
        buf.push_bit(report.reward_bit);
        report.signs.iter().for_each(|&b| buf.push_bit(b));
        report.e2_bits.iter().for_each(|&b| buf.push_bit(b));
        buf.push_biguint(&report.rank, self.ball.rank_bits())?;
        debug_assert_eq!(buf.len(), self.message_bits());
        Ok(buf)
    }

    pub fn decode(&self, buf: &BitBuffer) -> Result<ContextReport, CodecError> {
        let expected = self.message_bits();
        if buf.len() < expected {
            return Err(CodecError::Truncated { needed: expected, available: buf.len() });
        }
        if buf.len() > expected {
            return Err(CodecError::TrailingBits { extra: buf.len() - expected });
        }
        let mut buf = buf.clone();
        buf.rewind();
        let d = self.dim();
        let reward_bit = buf.read_bit()?;
        let signs = (0..d).map(|_| buf.read_bit()).collect::<Result<Vec<_>, _>>()?;
        let e2_bits = (0..d).map(|_| buf.read_bit()).collect::<Result<Vec<_>, _>>()?;
        let rank = buf.read_biguint(self.ball.rank_bits())?;
        let report = ContextReport { reward_bit, signs, e2_bits, rank };
        self.check_shape(&report)?;
        Ok(report)
    }

    pub fn encode_message(&self, msg: &UplinkMessage) -> Result<BitBuffer, CodecError> {
        match msg {
            UplinkMessage::Known { reward_bit } => Ok(encode_known(*reward_bit)),
            UplinkMessage::Unknown(report) => self.encode(report),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hand_packed_d1_message() {
        let codec = UplinkCodec::new(1).unwrap();
        let report = ContextReport {
            reward_bit: true,
            signs: vec![true],
            e2_bits: vec![true],
            rank: codec.ball().rank(&[2]).unwrap(),
        };
        let buf = codec.encode(&report).unwrap();
        assert_eq!(buf.to_bit_string(), "11110");
        assert_eq!(buf.as_bytes(), &[0b1111_0000]);
        assert_eq!(codec.decode(&buf).unwrap(), report);
    }

    #[test]
    fn budgets() {
        assert_eq!(bit_budget(1), 5);
        assert!((published_bit_bound(1) - 7.6149).abs() < 1e-3);
        assert_eq!(bit_budget(5), 23);
        assert!(published_bit_bound(5) > 29.6 && published_bit_bound(5) < 29.7);
        let b64 = bit_budget(64);
        assert!((b64 as f64) <= published_bit_bound(64));
        assert!(b64 as f64 / 64.0 <= 5.03);
        assert_eq!(UplinkCodec::new(5).unwrap().message_bits(), 23);
    }

    #[test]
    fn corrupt_messages() {
        let codec = UplinkCodec::new(1).unwrap();
        // rank field 11 = 3 >= |Q| = 3
        let bad = BitBuffer::from_bytes(&[0b1111_1000], 5).unwrap();
        assert!(matches!(codec.decode(&bad), Err(CodecError::RankOutOfRange { .. })));
        let short = BitBuffer::from_bytes(&[0b1110_0000], 4).unwrap();
        assert!(matches!(codec.decode(&short), Err(CodecError::Truncated { .. })));
        let long = BitBuffer::from_bytes(&[0, 0], 9).unwrap();
        assert!(matches!(codec.decode(&long), Err(CodecError::TrailingBits { extra: 4 })));
    }

    #[test]
    fn known_message_is_one_bit() {
        for bit in [false, true] {
            let buf = encode_known(bit);
            assert_eq!(buf.len(), 1);
            assert_eq!(decode_known(&buf).unwrap(), bit);
        }
        assert!(decode_known(&BitBuffer::new()).is_err());
    }
}
