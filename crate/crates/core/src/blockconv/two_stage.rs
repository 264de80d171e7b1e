use rayon::prelude::*;

use super::chunked::ChunkedSeq;
use super::factors::{build_factors, ToeplitzFactors};
use super::kernel::{gemv_acc, padded_row, MulCounter, NoTally, Tally};
use crate::conv::check_channels;
use crate::error::{Error, Result};
use crate::filter::GroupSpec;
use crate::real::Real;
use crate::tensor::{Matrix, SeqTensor};

/// Whether a filter of `filter_len` taps fits in `H_0` plus a single
/// spill-over block `H_1`. `H_2` would hold tap `h_{lb+1}`, so the limit is
/// `lb + 1` taps.
pub fn two_stage_eligible(filter_len: usize, block_size: usize) -> bool {
    block_size >= 1 && filter_len <= block_size + 1
}

fn check_eligible(groups: &GroupSpec, block_size: usize) -> Result<()> {
    if block_size == 0 {
        return Err(Error::Shape("block size must be at least 1".into()));
    }
    let lh = groups.max_filter_len();
    if !two_stage_eligible(lh, block_size) {
        return Err(Error::TwoStageIneligible {
            filter_len: lh,
            block_size,
        });
    }
    Ok(())
}

/// General K-block convolution: `y_n = sum_{k=0}^{min(n, K)} H_k x_{n-k}`.
/// Works for any filter length.
pub fn block_conv<T: Real>(x: &SeqTensor<T>, groups: &GroupSpec, block_size: usize) -> Result<SeqTensor<T>> {
    check_channels(x, groups)?;
    if block_size == 0 {
        return Err(Error::Shape("block size must be at least 1".into()));
    }
    let taps = groups.materialize_as::<T>()?;
    let factors = taps.iter().map(|h| build_factors(h, block_size)).collect::<Result<Vec<_>>>()?;
    let len = x.seq_len();
    let n_chunks = len.div_ceil(block_size);
    let padded = n_chunks * block_size;
    let mut y = SeqTensor::zeros(x.channels(), len);
    let mut buf = vec![T::zero(); padded];
    for c in 0..x.channels() {
        let f = &factors[groups.group_of(c)];
        let xp = padded_row(x.row(c), padded);
        buf.fill(T::zero());
        for n in 0..n_chunks {
            let out = &mut buf[n * block_size..(n + 1) * block_size];
            for k in 0..=n.min(f.spill()) {
                let src = &xp[(n - k) * block_size..(n - k + 1) * block_size];
                gemv_acc(f.block(k), src, out, &mut NoTally);
            }
        }
        y.row_mut(c).copy_from_slice(&buf[..len]);
    }
    Ok(y)
}

/// `[H_0, H_1]` for a two-stage-eligible filter; `H_1` is all zeros when the
/// filter has a single tap.
pub(crate) fn two_factors<T: Real>(h: &[T], block_size: usize) -> Result<[Matrix<T>; 2]> {
    let f: ToeplitzFactors<T> = build_factors(h, block_size)?;
    let h1 = f.blocks().get(1).cloned().unwrap_or_else(|| Matrix::zeros(block_size, block_size));
    Ok([f.block(0).clone(), h1])
}

/// Ungated two-stage pass over every channel: `Y_n = H_0 X_n + H_1 X_{n-1}`
/// with `X_{-1} = 0`. Both products are dense for every chunk.
pub(crate) fn two_stage_core<T: Real, C: Tally>(
    u: &SeqTensor<T>,
    factors: &[[Matrix<T>; 2]],
    group_size: usize,
    block_size: usize,
    tally: &mut C,
) -> SeqTensor<T> {
    let len = u.seq_len();
    let n_chunks = len.div_ceil(block_size);
    let padded = n_chunks * block_size;
    let zero = vec![T::zero(); block_size];
    let mut y = SeqTensor::zeros(u.channels(), len);
    let mut buf = vec![T::zero(); padded];
    for c in 0..u.channels() {
        let [h0, h1] = &factors[c / group_size];
        let xp = padded_row(u.row(c), padded);
        buf.fill(T::zero());
        for n in 0..n_chunks {
            let out = &mut buf[n * block_size..(n + 1) * block_size];
            gemv_acc(h0, &xp[n * block_size..(n + 1) * block_size], out, tally);
            let prev = if n == 0 {
                &zero[..]
            } else {
                &xp[(n - 1) * block_size..n * block_size]
            };
            gemv_acc(h1, prev, out, tally);
        }
        y.row_mut(c).copy_from_slice(&buf[..len]);
    }
    y
}

fn check_gates<T: Real>(v: &SeqTensor<T>, q: Option<&SeqTensor<T>>, k: Option<&SeqTensor<T>>) -> Result<()> {
    if let Some(q) = q {
        v.ensure_same_shape(q, "q vs v")?;
    }
    if let Some(k) = k {
        v.ensure_same_shape(k, "k vs v")?;
    }
    Ok(())
}

/// State retained by [`two_stage_forward_saved`] for the backward pass.
#[derive(Debug, Clone)]
pub struct TwoStageContext<T = f64> {
    pub(crate) v: SeqTensor<T>,
    pub(crate) q: Option<SeqTensor<T>>,
    pub(crate) k: Option<SeqTensor<T>>,
    /// Pre-gated input `k * v`.
    pub(crate) u: SeqTensor<T>,
    /// Ungated convolution output.
    pub(crate) c: SeqTensor<T>,
    pub(crate) factors: Vec<[Matrix<T>; 2]>,
    pub(crate) filter_lens: Vec<usize>,
    pub(crate) group_size: usize,
    pub(crate) block_size: usize,
}

impl<T: Real> TwoStageContext<T> {
    /// Output of the ungated convolution `conv(k * v)`.
    pub fn conv_output(&self) -> &SeqTensor<T> {
        &self.c
    }
}

fn two_stage_impl<T: Real, C: Tally>(
    v: &SeqTensor<T>,
    q: Option<&SeqTensor<T>>,
    k: Option<&SeqTensor<T>>,
    groups: &GroupSpec,
    block_size: usize,
    tally: &mut C,
) -> Result<(SeqTensor<T>, TwoStageContext<T>)> {
    check_channels(v, groups)?;
    check_gates(v, q, k)?;
    check_eligible(groups, block_size)?;
    let taps = groups.materialize_as::<T>()?;
    let factors = taps.iter().map(|h| two_factors(h, block_size)).collect::<Result<Vec<_>>>()?;
    let u = match k {
        Some(k) => k.hadamard(v)?,
        None => v.clone(),
    };
    let c = two_stage_core(&u, &factors, groups.group_size(), block_size, tally);
    let y = match q {
        Some(q) => q.hadamard(&c)?,
        None => c.clone(),
    };
    let ctx = TwoStageContext {
        v: v.clone(),
        q: q.cloned(),
        k: k.cloned(),
        u,
        c,
        factors,
        filter_lens: taps.iter().map(Vec::len).collect(),
        group_size: groups.group_size(),
        block_size,
    };
    Ok((y, ctx))
}

/// Gated two-stage blocked convolution `q * conv(k * v)`; either gate may be
/// absent. Rejects filters longer than `block_size + 1` taps.
pub fn two_stage_forward<T: Real>(
    v: &SeqTensor<T>,
    q: Option<&SeqTensor<T>>,
    k: Option<&SeqTensor<T>>,
    groups: &GroupSpec,
    block_size: usize,
) -> Result<SeqTensor<T>> {
    two_stage_impl(v, q, k, groups, block_size, &mut NoTally).map(|(y, _)| y)
}

/// [`two_stage_forward`] that also returns the state needed by
/// [`two_stage_backward`](super::two_stage_backward).
pub fn two_stage_forward_saved<T: Real>(
    v: &SeqTensor<T>,
    q: Option<&SeqTensor<T>>,
    k: Option<&SeqTensor<T>>,
    groups: &GroupSpec,
    block_size: usize,
) -> Result<(SeqTensor<T>, TwoStageContext<T>)> {
    two_stage_impl(v, q, k, groups, block_size, &mut NoTally)
}

/// Ungated [`two_stage_forward`] instrumented with a multiply counter.
pub fn two_stage_forward_counted<T: Real>(v: &SeqTensor<T>, groups: &GroupSpec, block_size: usize) -> Result<(SeqTensor<T>, u64)> {
    let mut counter = MulCounter::default();
    let (y, _) = two_stage_impl(v, None, None, groups, block_size, &mut counter)?;
    Ok((y, counter.0))
}

/// Two-stage convolution of every channel of `v` with one filter `h`,
/// parallelized over chunks: each output chunk depends only on input chunks
/// `n` and `n - 1`, so chunks are evaluated independently.
pub fn chunk_parallel_forward<T: Real>(v: &SeqTensor<T>, h: &[T], block_size: usize) -> Result<SeqTensor<T>> {
    if block_size == 0 {
        return Err(Error::Shape("block size must be at least 1".into()));
    }
    if h.is_empty() {
        return Err(Error::InvalidFilter("filter must have at least one tap".into()));
    }
    if !two_stage_eligible(h.len(), block_size) {
        return Err(Error::TwoStageIneligible {
            filter_len: h.len(),
            block_size,
        });
    }
    let [h0, h1] = two_factors(h, block_size)?;
    let chunks = ChunkedSeq::from_seq(v, block_size);
    let width = v.channels();
    let zero = Matrix::zeros(block_size, width);
    let out: Vec<Matrix<T>> = (0..chunks.n_chunks())
        .into_par_iter()
        .map(|n| {
            let cur = &chunks.chunks()[n];
            let prev = if n == 0 { &zero } else { &chunks.chunks()[n - 1] };
            let mut y = Matrix::zeros(block_size, width);
            for i in 0..block_size {
                for c in 0..width {
                    let mut acc = T::zero();
                    for j in 0..block_size {
                        acc += h0[(i, j)] * cur[(j, c)];
                    }
                    for j in 0..block_size {
                        acc += h1[(i, j)] * prev[(j, c)];
                    }
                    y[(i, c)] = acc;
                }
            }
            y
        })
        .collect();
    Ok(ChunkedSeq::from_chunks(out, block_size, v.seq_len()).to_seq())
}

/// Model FLOPs of the dense two-stage path: two `(lb x lb)(lb x d)` products
/// per chunk, `2 * lb^2 * d * ceil(l / lb)`.
pub fn two_stage_flops(len: u64, block_size: u64, width: u64) -> u64 {
    2 * block_size * block_size * width * len.div_ceil(block_size)
}
