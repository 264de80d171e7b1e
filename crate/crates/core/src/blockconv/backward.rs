//! Backward pass of the gated two-stage convolution.
//!
//! Filter gradients are computed in two passes. Pass one walks the chunks
//! exactly like the forward kernel and writes per-chunk partial factor
//! gradients `dH_0^(n) = dC_n X_n^T`, `dH_1^(n) = dC_n X_{n-1}^T` into one
//! contiguous buffer. Pass two reduces the buffer over chunks and scatters
//! each factor entry onto its Toeplitz diagonal.

use super::kernel::{gemv_t_acc, padded_row};
use super::two_stage::TwoStageContext;
use crate::error::Result;
use crate::real::Real;
use crate::tensor::SeqTensor;

#[derive(Debug, Clone, PartialEq)]
pub struct TwoStageGrads<T = f64> {
    pub dv: SeqTensor<T>,
    pub dq: Option<SeqTensor<T>>,
    pub dk: Option<SeqTensor<T>>,
    /// Gradient w.r.t. each group's materialized taps.
    pub dh: Vec<Vec<T>>,
}

/// Per-chunk partial factor gradients, laid out `[chunk][factor][row][col]`.
#[derive(Debug, Clone)]
pub(crate) struct PartialFactorGrads<T> {
    pub(crate) data: Vec<T>,
    pub(crate) n_chunks: usize,
    pub(crate) block_size: usize,
}

impl<T: Real> PartialFactorGrads<T> {
    fn stride(&self) -> usize {
        2 * self.block_size * self.block_size
    }

    /// Pass two: reduce over chunks, then scatter onto `filter_len` taps.
    pub(crate) fn reduce(&self, filter_len: usize) -> Vec<T> {
        let lb = self.block_size;
        let stride = self.stride();
        let mut total = vec![T::zero(); stride];
        for n in 0..self.n_chunks {
            let part = &self.data[n * stride..(n + 1) * stride];
            for (acc, &p) in total.iter_mut().zip(part) {
                *acc += p;
            }
        }
        let mut dh = vec![T::zero(); filter_len];
        for k in 0..2 {
            for i in 0..lb {
                for j in 0..lb {
                    let tap = (k * lb + i) as isize - j as isize;
                    if (0..filter_len as isize).contains(&tap) {
                        dh[tap as usize] += total[k * lb * lb + i * lb + j];
                    }
                }
            }
        }
        dh
    }
}

/// Pass one over channels `c0..c1`: `x` is the convolution input, `dc` the
/// gradient at the convolution output.
pub(crate) fn partial_factor_grads<T: Real>(
    x: &SeqTensor<T>,
    dc: &SeqTensor<T>,
    c0: usize,
    c1: usize,
    block_size: usize,
) -> PartialFactorGrads<T> {
    let lb = block_size;
    let len = x.seq_len();
    let n_chunks = len.div_ceil(lb);
    let padded = n_chunks * lb;
    let stride = 2 * lb * lb;
    let xs: Vec<Vec<T>> = (c0..c1).map(|c| padded_row(x.row(c), padded)).collect();
    let dcs: Vec<Vec<T>> = (c0..c1).map(|c| padded_row(dc.row(c), padded)).collect();
    let mut data = vec![T::zero(); n_chunks * stride];
    for n in 0..n_chunks {
        let (p0, p1) = data[n * stride..(n + 1) * stride].split_at_mut(lb * lb);
        for (xc, dcc) in xs.iter().zip(&dcs) {
            let cur = &xc[n * lb..(n + 1) * lb];
            let g = &dcc[n * lb..(n + 1) * lb];
            for i in 0..lb {
                let a = g[i];
                let row = &mut p0[i * lb..(i + 1) * lb];
                for j in 0..lb {
                    row[j] += a * cur[j];
                }
            }
            if n > 0 {
                let prev = &xc[(n - 1) * lb..n * lb];
                for i in 0..lb {
                    let a = g[i];
                    let row = &mut p1[i * lb..(i + 1) * lb];
                    for j in 0..lb {
                        row[j] += a * prev[j];
                    }
                }
            }
        }
    }
    PartialFactorGrads {
        data,
        n_chunks,
        block_size,
    }
}

/// Exact gradients of `y = q * conv(k * v)` given the upstream `dy`.
pub fn two_stage_backward<T: Real>(ctx: &TwoStageContext<T>, dy: &SeqTensor<T>) -> Result<TwoStageGrads<T>> {
    ctx.c.ensure_same_shape(dy, "dy vs forward output")?;
    let lb = ctx.block_size;
    let len = dy.seq_len();
    let n_chunks = len.div_ceil(lb);
    let padded = n_chunks * lb;

    let dq = ctx.q.as_ref().map(|_| dy.zip_map(&ctx.c, |a, b| a * b));
    let dc = match &ctx.q {
        Some(q) => dy.zip_map(q, |a, b| a * b),
        None => dy.clone(),
    };

    // du_n = H_0^T dc_n + H_1^T dc_{n+1}
    let mut du = SeqTensor::zeros(dy.channels(), len);
    let zero = vec![T::zero(); lb];
    let mut buf = vec![T::zero(); padded];
    for c in 0..dy.channels() {
        let [h0, h1] = &ctx.factors[c / ctx.group_size];
        let g = padded_row(dc.row(c), padded);
        buf.fill(T::zero());
        for n in 0..n_chunks {
            let out = &mut buf[n * lb..(n + 1) * lb];
            gemv_t_acc(h0, &g[n * lb..(n + 1) * lb], out);
            let next = if n + 1 < n_chunks {
                &g[(n + 1) * lb..(n + 2) * lb]
            } else {
                &zero[..]
            };
            gemv_t_acc(h1, next, out);
        }
        du.row_mut(c).copy_from_slice(&buf[..len]);
    }

    let dk = ctx.k.as_ref().map(|_| du.zip_map(&ctx.v, |a, b| a * b));
    let dv = match &ctx.k {
        Some(k) => du.zip_map(k, |a, b| a * b),
        None => du,
    };

    let gs = ctx.group_size;
    let dh = ctx
        .filter_lens
        .iter()
        .enumerate()
        .map(|(g, &lh)| partial_factor_grads(&ctx.u, &dc, g * gs, (g + 1) * gs, lb).reduce(lh))
        .collect();

    Ok(TwoStageGrads { dv, dq, dk, dh })
}
