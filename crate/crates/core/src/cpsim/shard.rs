use std::ops::Range;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::tensor::SeqTensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum Layout {
    /// Rank `r` holds the `r`-th contiguous slice of time.
    #[default]
    Sequential,
    /// Time is cut into `2N` chunks; rank `r` holds chunks `r` and `2N - 1 - r`.
    Zigzag,
}

impl Layout {
    pub fn name(self) -> &'static str {
        match self {
            Layout::Sequential => "seq",
            Layout::Zigzag => "zigzag",
        }
    }

    /// Global time ranges held by `rank`, in shard order.
    #[allow(clippy::single_range_in_vec_init)]
    pub fn segments(self, len: usize, n_ranks: usize, rank: usize) -> Vec<Range<usize>> {
        match self {
            Layout::Sequential => {
                let s = len / n_ranks;
                vec![rank * s..(rank + 1) * s]
            }
            Layout::Zigzag => {
                let c = len / (2 * n_ranks);
                let hi = 2 * n_ranks - 1 - rank;
                vec![rank * c..(rank + 1) * c, hi * c..(hi + 1) * c]
            }
        }
    }

    pub fn check(self, len: usize, n_ranks: usize) -> Result<()> {
        let parts = match self {
            Layout::Sequential => n_ranks,
            Layout::Zigzag => 2 * n_ranks,
        };
        if n_ranks == 0 || !len.is_multiple_of(parts) || len == 0 {
            return Err(Error::Divisibility(format!(
                "length {len} is not divisible into {parts} {} chunks",
                self.name()
            )));
        }
        Ok(())
    }
}

impl FromStr for Layout {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "seq" | "sequential" => Ok(Layout::Sequential),
            "zigzag" => Ok(Layout::Zigzag),
            other => Err(Error::Config(format!("unknown layout `{other}` (expected seq or zigzag)"))),
        }
    }
}

/// Per-rank `d x (l / N)` shards of one sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct ShardedSeq {
    shards: Vec<SeqTensor<f64>>,
    layout: Layout,
    len: usize,
}

impl ShardedSeq {
    pub fn from_shards(shards: Vec<SeqTensor<f64>>, layout: Layout) -> Result<Self> {
        let first = shards.first().ok_or(Error::Empty)?;
        if shards.iter().any(|s| !s.same_shape(first)) {
            return Err(Error::Shape("shards differ in shape".into()));
        }
        let len = first.seq_len() * shards.len();
        layout.check(len, shards.len())?;
        Ok(Self { shards, layout, len })
    }

    pub fn shards(&self) -> &[SeqTensor<f64>] {
        &self.shards
    }

    pub fn shard(&self, rank: usize) -> &SeqTensor<f64> {
        &self.shards[rank]
    }

    pub fn into_shards(self) -> Vec<SeqTensor<f64>> {
        self.shards
    }

    pub fn layout(&self) -> Layout {
        self.layout
    }

    pub fn n_ranks(&self) -> usize {
        self.shards.len()
    }

    pub fn channels(&self) -> usize {
        self.shards[0].channels()
    }

    pub fn seq_len(&self) -> usize {
        self.len
    }

    pub fn shard_len(&self) -> usize {
        self.len / self.shards.len()
    }

    /// Max abs difference after gathering both.
    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        gather(self).max_abs_diff(&gather(other))
    }
}

pub fn shard(x: &SeqTensor<f64>, n_ranks: usize, layout: Layout) -> Result<ShardedSeq> {
    layout.check(x.seq_len(), n_ranks)?;
    let shards = (0..n_ranks)
        .map(|r| {
            let parts: Vec<_> = layout
                .segments(x.seq_len(), n_ranks, r)
                .into_iter()
                .map(|seg| x.slice_time(seg))
                .collect();
            SeqTensor::concat_time(&parts).expect("same channels")
        })
        .collect();
    Ok(ShardedSeq {
        shards,
        layout,
        len: x.seq_len(),
    })
}

pub fn gather(xs: &ShardedSeq) -> SeqTensor<f64> {
    let n = xs.n_ranks();
    let mut out = SeqTensor::zeros(xs.channels(), xs.len);
    for (r, s) in xs.shards.iter().enumerate() {
        let mut at = 0;
        for seg in xs.layout.segments(xs.len, n, r) {
            for c in 0..s.channels() {
                out.row_mut(c)[seg.clone()].copy_from_slice(&s.row(c)[at..at + seg.len()]);
            }
            at += seg.len();
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;

    #[test]
    fn sequential_holds_contiguous_pairs() {
        let x = SeqTensor::from_rows(&[(0..8).map(f64::from).collect::<Vec<_>>()]).unwrap();
        let xs = shard(&x, 4, Layout::Sequential).unwrap();
        for r in 0..4 {
            assert_eq!(xs.shard(r).row(0), &[2.0 * r as f64, 2.0 * r as f64 + 1.0]);
        }
    }

    #[test]
    fn zigzag_pairs_chunks() {
        let x = SeqTensor::from_rows(&[(0..16).map(f64::from).collect::<Vec<_>>()]).unwrap();
        let xs = shard(&x, 4, Layout::Zigzag).unwrap();
        assert_eq!(xs.shard(0).row(0), &[0.0, 1.0, 14.0, 15.0]);
        assert_eq!(xs.shard(3).row(0), &[6.0, 7.0, 8.0, 9.0]);
    }

    #[test]
    fn round_trip_is_exact() {
        let mut r = rng::seeded(70);
        let x = rng::uniform_tensor::<f64>(&mut r, 3, 64);
        for layout in [Layout::Sequential, Layout::Zigzag] {
            for n in [1, 2, 4, 8] {
                assert_eq!(gather(&shard(&x, n, layout).unwrap()), x);
            }
        }
    }

    #[test]
    fn divisibility_is_checked() {
        let x = SeqTensor::<f64>::zeros(1, 12);
        assert!(shard(&x, 8, Layout::Sequential).is_err());
        assert!(shard(&x, 4, Layout::Zigzag).is_err());
        assert!(shard(&x, 4, Layout::Sequential).is_ok());
    }
}
