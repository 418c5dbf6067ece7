use num_bigint::BigUint;
use num_traits::Zero;

use super::CodecError;

/// Growable bit string, most significant bit of each byte first.
///
/// Lengths are tracked in bits; [`BitBuffer::as_bytes`] exposes the padded
/// byte framing with zero fill after the last bit.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct BitBuffer {
    bytes: Vec<u8>,
    len: usize,
    cursor: usize,
}

impl BitBuffer {
    pub fn new() -> Self {
        Self::default()
    }

    /// Wraps `bytes` and declares the first `len_bits` of them meaningful.
    pub fn from_bytes(bytes: &[u8], len_bits: usize) -> Result<Self, CodecError> {
        if len_bits > bytes.len() * 8 || bytes.len() != len_bits.div_ceil(8) {
            return Err(CodecError::Framing { bytes: bytes.len(), bits: len_bits });
        }
        let mut bytes = bytes.to_vec();
        if !len_bits.is_multiple_of(8) {
            // clear padding so equality only depends on payload bits
            let last = bytes.len() - 1;
            bytes[last] &= 0xffu8 << (8 - len_bits % 8);
        }
        Ok(Self { bytes, len: len_bits, cursor: 0 })
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn remaining(&self) -> usize {
        self.len - self.cursor
    }

    pub fn as_bytes(&self) -> &[u8] {
        &self.bytes
    }

    pub fn rewind(&mut self) {
        self.cursor = 0;
    }

    pub fn push_bit(&mut self, bit: bool) {
        if self.len.is_multiple_of(8) {
            self.bytes.push(0);
        }
        if bit {
            let last = self.bytes.len() - 1;
            self.bytes[last] |= 0x80 >> (self.len % 8);
        }
        self.len += 1;
    }

    /// Appends the low `width` bits of `value`, big-endian.
    pub fn push_bits(&mut self, value: u64, width: u32) {
        debug_assert!(width <= 64);
        for i in (0..width).rev() {
            self.push_bit((value >> i) & 1 == 1);
        }
    }

    /// Appends `value` as a big-endian field of exactly `width` bits.
    pub fn push_biguint(&mut self, value: &BigUint, width: u32) -> Result<(), CodecError> {
        if value.bits() > width as u64 {
            return Err(CodecError::FieldOverflow { bits: value.bits(), width });
        }
        for i in (0..width as u64).rev() {
            self.push_bit(value.bit(i));
        }
        Ok(())
    }

    fn need(&self, width: usize) -> Result<(), CodecError> {
        if self.remaining() < width {
            return Err(CodecError::Truncated { needed: width, available: self.remaining() });
        }
        Ok(())
    }

    fn bit_at(&self, pos: usize) -> bool {
        self.bytes[pos / 8] & (0x80 >> (pos % 8)) != 0
    }

    pub fn read_bit(&mut self) -> Result<bool, CodecError> {
        self.need(1)?;
        let bit = self.bit_at(self.cursor);
        self.cursor += 1;
        Ok(bit)
    }

    pub fn read_bits(&mut self, width: u32) -> Result<u64, CodecError> {
        debug_assert!(width <= 64);
        self.need(width as usize)?;
        let mut value = 0u64;
        for _ in 0..width {
            value = (value << 1) | self.read_bit()? as u64;
        }
        Ok(value)
    }

    pub fn read_biguint(&mut self, width: u32) -> Result<BigUint, CodecError> {
        self.need(width as usize)?;
        let mut value = BigUint::zero();
        for i in (0..width as u64).rev() {
            if self.read_bit()? {
                value.set_bit(i, true);
            }
        }
        Ok(value)
    }

    /// Renders the payload as a `0`/`1` string.
    pub fn to_bit_string(&self) -> String {
        (0..self.len).map(|i| if self.bit_at(i) { '1' } else { '0' }).collect()
    }
}
