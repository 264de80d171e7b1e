//! Reference causal convolution. Every faster path in the crate is checked
//! against [`direct_causal_conv`].

use crate::error::{Error, Result};
use crate::filter::GroupSpec;
use crate::real::Real;
use crate::tensor::{Matrix, SeqTensor};

/// `out_t = sum_{k = max(0, t - lh + 1)}^{t} h_{t-k} x_k` for one channel.
pub fn causal_conv_into<T: Real>(x: &[T], h: &[T], out: &mut [T]) {
    assert_eq!(x.len(), out.len());
    let lh = h.len();
    for (t, y) in out.iter_mut().enumerate() {
        let k0 = (t + 1).saturating_sub(lh);
        let mut acc = T::zero();
        for k in k0..=t {
            acc += h[t - k] * x[k];
        }
        *y = acc;
    }
}

pub fn causal_conv<T: Real>(x: &[T], h: &[T]) -> Vec<T> {
    let mut out = vec![T::zero(); x.len()];
    causal_conv_into(x, h, &mut out);
    out
}

/// Adjoint of [`causal_conv`]: returns `(dx, dh)` for upstream gradient `dy`.
///
/// `dx_k = sum_t h_{t-k} dy_t` and `dh_j = sum_t dy_t x_{t-j}`.
pub fn causal_conv_adjoint<T: Real>(x: &[T], h: &[T], dy: &[T]) -> (Vec<T>, Vec<T>) {
    let l = x.len();
    let lh = h.len();
    let mut dx = vec![T::zero(); l];
    for (k, d) in dx.iter_mut().enumerate() {
        let mut acc = T::zero();
        for t in k..l.min(k + lh) {
            acc += h[t - k] * dy[t];
        }
        *d = acc;
    }
    let mut dh = vec![T::zero(); lh];
    for (j, d) in dh.iter_mut().enumerate() {
        let mut acc = T::zero();
        for t in j..l {
            acc += dy[t] * x[t - j];
        }
        *d = acc;
    }
    (dx, dh)
}

/// Grouped depthwise causal convolution by literal summation, O(d * l * lh).
pub fn direct_causal_conv<T: Real>(x: &SeqTensor<T>, groups: &GroupSpec) -> Result<SeqTensor<T>> {
    check_channels(x, groups)?;
    let taps = groups.materialize_as::<T>()?;
    Ok(direct_with_taps(x, &taps, groups.group_size()))
}

pub(crate) fn direct_with_taps<T: Real>(x: &SeqTensor<T>, taps: &[Vec<T>], group_size: usize) -> SeqTensor<T> {
    let mut y = SeqTensor::zeros(x.channels(), x.seq_len());
    for (c, out) in y.rows_mut().enumerate() {
        causal_conv_into(x.row(c), &taps[c / group_size], out);
    }
    y
}

/// Gradients of `sum(dy * direct_causal_conv(x))` w.r.t. `x` and each group's taps.
pub fn direct_conv_backward<T: Real>(
    x: &SeqTensor<T>,
    taps: &[Vec<T>],
    group_size: usize,
    dy: &SeqTensor<T>,
) -> Result<(SeqTensor<T>, Vec<Vec<T>>)> {
    x.ensure_same_shape(dy, "conv backward")?;
    let mut dx = SeqTensor::zeros(x.channels(), x.seq_len());
    let mut dh: Vec<Vec<T>> = taps.iter().map(|h| vec![T::zero(); h.len()]).collect();
    for c in 0..x.channels() {
        let g = c / group_size;
        let (dxc, dhc) = causal_conv_adjoint(x.row(c), &taps[g], dy.row(c));
        dx.row_mut(c).copy_from_slice(&dxc);
        for (a, b) in dh[g].iter_mut().zip(dhc) {
            *a += b;
        }
    }
    Ok((dx, dh))
}

/// Banded lower-triangular `l x l` matrix with `T[t][k] = h_{t-k}`.
pub fn full_toeplitz<T: Real>(h: &[T], len: usize) -> Result<Matrix<T>> {
    if len == 0 || h.is_empty() {
        return Err(Error::Shape("toeplitz needs l >= 1 and lh >= 1".into()));
    }
    Ok(Matrix::from_fn(len, len, |t, k| {
        if t >= k && t - k < h.len() {
            h[t - k]
        } else {
            T::zero()
        }
    }))
}

pub(crate) fn check_channels<T: Real>(x: &SeqTensor<T>, groups: &GroupSpec) -> Result<()> {
    if x.channels() != groups.channels() {
        return Err(Error::ChannelMismatch {
            expected: groups.channels(),
            got: x.channels(),
        });
    }
    Ok(())
}
