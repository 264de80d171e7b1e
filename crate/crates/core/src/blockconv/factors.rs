use crate::error::{Error, Result};
use crate::real::Real;
use crate::tensor::Matrix;

/// The non-zero `lb x lb` sub-blocks `H_0 .. H_K` of the banded causal
/// Toeplitz matrix, with `K = ceil((lh - 1) / lb)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ToeplitzFactors<T = f64> {
    blocks: Vec<Matrix<T>>,
    block_size: usize,
    filter_len: usize,
}

/// Number of spill-over blocks `K` a filter of length `filter_len` needs.
pub fn spill_blocks(filter_len: usize, block_size: usize) -> usize {
    (filter_len.saturating_sub(1)).div_ceil(block_size)
}

/// Index into the *reversed* filter for entry `(row, col)` of factor `k`.
///
/// Factor `k` starts at offset `lh - 1 - k * lb`; the entry is
/// `offset + col - row` and is masked when it falls outside `[0, lh)`.
pub fn toeplitz_index(filter_len: usize, block_size: usize, k: usize, row: usize, col: usize) -> isize {
    let offset = filter_len as isize - 1 - (k * block_size) as isize;
    offset + col as isize - row as isize
}

impl<T: Real> ToeplitzFactors<T> {
    /// Materializes `H_0 .. H_K` by masked loads from the reversed filter.
    pub fn build(h: &[T], block_size: usize) -> Result<Self> {
        if block_size == 0 {
            return Err(Error::Shape("block size must be at least 1".into()));
        }
        if h.is_empty() {
            return Err(Error::InvalidFilter("filter must have at least one tap".into()));
        }
        let lh = h.len();
        let reversed: Vec<T> = h.iter().rev().copied().collect();
        let blocks = (0..=spill_blocks(lh, block_size))
            .map(|k| {
                Matrix::from_fn(block_size, block_size, |i, j| {
                    let idx = toeplitz_index(lh, block_size, k, i, j);
                    if (0..lh as isize).contains(&idx) {
                        reversed[idx as usize]
                    } else {
                        T::zero()
                    }
                })
            })
            .collect();
        Ok(Self {
            blocks,
            block_size,
            filter_len: lh,
        })
    }

    pub fn blocks(&self) -> &[Matrix<T>] {
        &self.blocks
    }

    pub fn block(&self, k: usize) -> &Matrix<T> {
        &self.blocks[k]
    }

    pub fn block_size(&self) -> usize {
        self.block_size
    }

    pub fn filter_len(&self) -> usize {
        self.filter_len
    }

    /// `K`, the index of the last non-zero factor.
    pub fn spill(&self) -> usize {
        self.blocks.len() - 1
    }

    /// Reassembles the `len x len` banded matrix from the blocks.
    pub fn assemble(&self, len: usize) -> Matrix<T> {
        let lb = self.block_size;
        let k_max = self.spill();
        Matrix::from_fn(len, len, |r, c| {
            let (br, bc) = (r / lb, c / lb);
            if br >= bc && br - bc <= k_max {
                self.blocks[br - bc][(r % lb, c % lb)]
            } else {
                T::zero()
            }
        })
    }
}

/// Builds the block factors of `h` at block size `block_size`.
pub fn build_factors<T: Real>(h: &[T], block_size: usize) -> Result<ToeplitzFactors<T>> {
    ToeplitzFactors::build(h, block_size)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::conv::full_toeplitz;
    use crate::rng;

    #[test]
    fn delta_filter_gives_identity_block() {
        let f = build_factors(&[1.0], 4).unwrap();
        assert_eq!(f.blocks().len(), 1);
        assert_eq!(f.block(0), &Matrix::identity(4));
    }

    #[test]
    fn masked_index_matches_tap_rule() {
        let mut r = rng::seeded(5);
        for (lh, lb) in [(1, 1), (4, 3), (7, 8), (9, 4), (40, 16), (33, 1)] {
            let h = rng::filter_taps(&mut r, lh);
            let f = build_factors(&h, lb).unwrap();
            assert_eq!(f.spill(), spill_blocks(lh, lb));
            for (k, b) in f.blocks().iter().enumerate() {
                for i in 0..lb {
                    for j in 0..lb {
                        let tap = (k * lb + i) as isize - j as isize;
                        let expect = if (0..lh as isize).contains(&tap) { h[tap as usize] } else { 0.0 };
                        assert_eq!(b[(i, j)], expect);
                    }
                }
            }
        }
    }

    #[test]
    fn reassembly_reproduces_full_toeplitz() {
        let mut r = rng::seeded(6);
        for (lh, lb, l) in [(4, 3, 6), (7, 8, 30), (9, 4, 13), (40, 16, 57), (5, 5, 5)] {
            let h = rng::filter_taps(&mut r, lh);
            let f = build_factors(&h, lb).unwrap();
            assert_eq!(f.assemble(l), full_toeplitz(&h, l).unwrap(), "lh={lh} lb={lb} l={l}");
        }
    }

    #[test]
    fn zero_block_size_rejected() {
        assert!(build_factors(&[1.0, 2.0], 0).is_err());
    }
}
