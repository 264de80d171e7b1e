use crate::real::Real;
use crate::tensor::{Matrix, SeqTensor};

/// A channel slab cut into time chunks `X_0 .. X_{N-1}`, each `lb x width`
/// (time-major). The last chunk is zero-padded to `lb`.
#[derive(Debug, Clone, PartialEq)]
pub struct ChunkedSeq<T = f64> {
    chunks: Vec<Matrix<T>>,
    block_size: usize,
    len: usize,
}

impl<T: Real> ChunkedSeq<T> {
    /// Chunks channels `c0..c1` of `x`.
    pub fn from_channels(x: &SeqTensor<T>, c0: usize, c1: usize, block_size: usize) -> Self {
        assert!(c0 < c1 && c1 <= x.channels() && block_size > 0);
        let len = x.seq_len();
        let n = len.div_ceil(block_size);
        let width = c1 - c0;
        let chunks = (0..n)
            .map(|b| {
                Matrix::from_fn(block_size, width, |i, c| {
                    let t = b * block_size + i;
                    if t < len {
                        x.get(c0 + c, t)
                    } else {
                        T::zero()
                    }
                })
            })
            .collect();
        Self { chunks, block_size, len }
    }

    pub fn from_seq(x: &SeqTensor<T>, block_size: usize) -> Self {
        Self::from_channels(x, 0, x.channels(), block_size)
    }

    pub fn from_chunks(chunks: Vec<Matrix<T>>, block_size: usize, len: usize) -> Self {
        assert_eq!(chunks.len(), len.div_ceil(block_size));
        Self { chunks, block_size, len }
    }

    pub fn chunks(&self) -> &[Matrix<T>] {
        &self.chunks
    }

    pub fn n_chunks(&self) -> usize {
        self.chunks.len()
    }

    pub fn block_size(&self) -> usize {
        self.block_size
    }

    pub fn width(&self) -> usize {
        self.chunks[0].cols()
    }

    /// Concatenates chunks along time and drops the padding.
    pub fn to_seq(&self) -> SeqTensor<T> {
        let lb = self.block_size;
        SeqTensor::from_fn(self.width(), self.len, |c, t| self.chunks[t / lb][(t % lb, c)])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;

    #[test]
    fn round_trip_with_padding() {
        let mut r = rng::seeded(7);
        let x = rng::uniform_tensor::<f64>(&mut r, 3, 11);
        let ch = ChunkedSeq::from_seq(&x, 4);
        assert_eq!(ch.n_chunks(), 3);
        assert_eq!(ch.chunks()[2][(3, 0)], 0.0);
        assert_eq!(ch.to_seq(), x);
    }
}
