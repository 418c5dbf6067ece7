//! Lexicographic ranking of the lattice ball `Q = {x in N^d : |x|_1 <= 2d}`.
//!
//! The number of length-`k` non-negative integer vectors with sum at most `b`
//! is `C(b + k, k)`. Ranking walks the coordinates left to right and, for each
//! coordinate value `v` skipped below `x_i`, adds the number of suffixes
//! that fit in the budget left over after `v`. Unranking inverts the walk.
//! Because the total of all coordinates is at most `2d`, both directions touch
//! at most `3d` table entries.

use num_bigint::BigUint;
use num_traits::{One, Zero};

use super::CodecError;

/// Exact `|Q| = C(3d, d)`.
pub fn q_size(d: usize) -> BigUint {
    binomial(3 * d as u64, d as u64)
}

pub fn binomial(n: u64, k: u64) -> BigUint {
    if k > n {
        return BigUint::zero();
    }
    let k = k.min(n - k);
    let mut acc = BigUint::one();
    for i in 0..k {
        // exact at every step: acc = C(n, i + 1) after the division
        acc = acc * BigUint::from(n - i) / BigUint::from(i + 1);
    }
    acc
}

/// `ceil(log2(n))`, with `0` for `n <= 1`.
pub fn ceil_log2(n: &BigUint) -> u32 {
    if *n <= BigUint::one() {
        0
    } else {
        (n - BigUint::one()).bits() as u32
    }
}

/// Rank/unrank tables for one dimension.
#[derive(Debug, Clone)]
pub struct LatticeBall {
    dim: usize,
    budget: usize,
    // suffix_counts[k][b] = C(b + k, k)
    suffix_counts: Vec<Vec<BigUint>>,
}

impl LatticeBall {
    pub fn new(dim: usize) -> Result<Self, CodecError> {
        if dim == 0 {
            return Err(CodecError::ZeroDimension);
        }
        let budget = 2 * dim;
        let mut suffix_counts: Vec<Vec<BigUint>> = Vec::with_capacity(dim + 1);
        suffix_counts.push(vec![BigUint::one(); budget + 1]);
        for k in 1..=dim {
            let prev = &suffix_counts[k - 1];
            let mut row = Vec::with_capacity(budget + 1);
            row.push(BigUint::one());
            for b in 1..=budget {
                let next = &row[b - 1] + &prev[b];
                row.push(next);
            }
            suffix_counts.push(row);
        }
        Ok(Self { dim, budget, suffix_counts })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn size(&self) -> &BigUint {
        &self.suffix_counts[self.dim][self.budget]
    }

    /// Width of the rank field on the wire.
    pub fn rank_bits(&self) -> u32 {
        ceil_log2(self.size())
    }

    pub fn contains(&self, x: &[u32]) -> bool {
        x.len() == self.dim && x.iter().map(|&v| v as u64).sum::<u64>() <= self.budget as u64
    }

    pub fn rank(&self, x: &[u32]) -> Result<BigUint, CodecError> {
        if x.len() != self.dim {
            return Err(CodecError::DimensionMismatch { expected: self.dim, got: x.len() });
        }
        let l1: u64 = x.iter().map(|&v| v as u64).sum();
        if l1 > self.budget as u64 {
            return Err(CodecError::NotInQ { l1, limit: self.budget as u64 });
        }
        let mut rank = BigUint::zero();
        let mut left = self.budget;
        for (i, &xi) in x.iter().enumerate() {
            let row = &self.suffix_counts[self.dim - i - 1];
            for v in 0..xi as usize {
                rank += &row[left - v];
            }
            left -= xi as usize;
        }
        Ok(rank)
    }

    pub fn unrank(&self, rank: &BigUint) -> Result<Vec<u32>, CodecError> {
        if rank >= self.size() {
            return Err(CodecError::RankOutOfRange { rank: rank.to_string(), size: self.size().to_string() });
        }
        let mut rest = rank.clone();
        let mut left = self.budget;
        let mut x = Vec::with_capacity(self.dim);
        for i in 0..self.dim {
            let row = &self.suffix_counts[self.dim - i - 1];
            let mut v = 0usize;
            while rest >= row[left - v] {
                rest -= &row[left - v];
                v += 1;
            }
            x.push(v as u32);
            left -= v;
        }
        debug_assert!(rest.is_zero());
        Ok(x)
    }
}
