//! Radix-2 FFT machinery.
//!
//! The forward transform is decimation-in-frequency: natural-order input,
//! bit-reversed output. Its exact inverse runs the same butterflies in
//! reverse with conjugate twiddles and a factor of 1/2 per stage, taking a
//! bit-reversed spectrum back to natural-order samples. FFT convolution
//! multiplies in bit-reversed order and never permutes.

use std::f64::consts::PI;

use num_complex::Complex;

use crate::conv::check_channels;
use crate::error::{Error, Result};
use crate::filter::GroupSpec;
use crate::real::Real;
use crate::tensor::SeqTensor;

pub type Cplx<T = f64> = Complex<T>;

pub fn is_pow2(n: usize) -> bool {
    n != 0 && n & (n - 1) == 0
}

fn require_pow2(n: usize) -> Result<u32> {
    if is_pow2(n) {
        Ok(n.trailing_zeros())
    } else {
        Err(Error::NotPowerOfTwo(n))
    }
}

/// `exp(-2 pi i k / l)`, evaluated in `f64`.
pub fn twiddle<T: Real>(k: usize, l: usize) -> Cplx<T> {
    let theta = -2.0 * PI * (k % l) as f64 / l as f64;
    Complex::new(T::lit(theta.cos()), T::lit(theta.sin()))
}

fn twiddles<T: Real>(span: usize) -> Vec<Cplx<T>> {
    (0..span / 2).map(|j| twiddle(j, span)).collect()
}

pub fn to_complex<T: Real>(x: &[T]) -> Vec<Cplx<T>> {
    x.iter().map(|&v| Complex::new(v, T::zero())).collect()
}

/// Literal O(l^2) DFT `y_k = sum_j x_j w^(jk)` with `w = exp(-2 pi i / l)`.
pub fn dft_oracle<T: Real>(x: &[Cplx<T>]) -> Vec<Cplx<T>> {
    let l = x.len();
    (0..l)
        .map(|k| {
            let mut acc = Complex::new(T::zero(), T::zero());
            for (j, &v) in x.iter().enumerate() {
                acc = acc + v * twiddle::<T>((j * k) % l, l);
            }
            acc
        })
        .collect()
}

/// Reverses the low `bits` bits of `i`.
pub fn bit_reverse_index(i: usize, bits: u32) -> usize {
    if bits == 0 {
        0
    } else {
        i.reverse_bits() >> (usize::BITS - bits)
    }
}

/// Permutes `x` so index `b_{m-1}..b_0` moves to `b_0..b_{m-1}`.
pub fn bit_reversal<T: Copy>(x: &[T]) -> Result<Vec<T>> {
    let bits = require_pow2(x.len())?;
    Ok((0..x.len()).map(|i| x[bit_reverse_index(i, bits)]).collect())
}

/// Even-bin and odd-bin halves of one butterfly split.
pub type Halves<T> = (Vec<Cplx<T>>, Vec<Cplx<T>>);

/// One DiF butterfly stage over the full length:
/// `(x_lo + x_hi, (x_lo - x_hi) * W)` with `W_k = exp(-2 pi i k / l)`.
/// The DFT of the first half gives the even bins, the second half the odd.
pub fn dif_split<T: Real>(x: &[Cplx<T>]) -> Result<Halves<T>> {
    let l = x.len();
    if l == 0 || !l.is_multiple_of(2) {
        return Err(Error::Shape(format!("dif_split needs an even length, got {l}")));
    }
    let half = l / 2;
    let (lo, hi) = x.split_at(half);
    let s = lo.iter().zip(hi).map(|(&a, &b)| a + b).collect();
    let d = lo
        .iter()
        .zip(hi)
        .enumerate()
        .map(|(k, (&a, &b))| (a - b) * twiddle::<T>(k, l))
        .collect();
    Ok((s, d))
}

/// Inverse of [`dif_split`]: `x_lo = (a + conj(W) b) / 2`, `x_hi = (a - conj(W) b) / 2`.
pub fn dit_merge<T: Real>(a: &[Cplx<T>], b: &[Cplx<T>]) -> Result<Vec<Cplx<T>>> {
    if a.len() != b.len() || a.is_empty() {
        return Err(Error::Shape(format!(
            "dit_merge needs equal non-empty halves, got {} and {}",
            a.len(),
            b.len()
        )));
    }
    let l = 2 * a.len();
    let half = T::lit(0.5);
    let mut out = vec![Complex::new(T::zero(), T::zero()); l];
    for k in 0..a.len() {
        let t = twiddle::<T>(k, l).conj() * b[k];
        out[k] = (a[k] + t).scale(half);
        out[k + a.len()] = (a[k] - t).scale(half);
    }
    Ok(out)
}

/// In-place DiF FFT: natural-order input, bit-reversed output.
pub fn dif_fft_in_place<T: Real>(x: &mut [Cplx<T>]) -> Result<()> {
    require_pow2(x.len())?;
    let mut span = x.len();
    while span >= 2 {
        let half = span / 2;
        let w = twiddles::<T>(span);
        for block in x.chunks_exact_mut(span) {
            let (lo, hi) = block.split_at_mut(half);
            for j in 0..half {
                let (a, b) = (lo[j], hi[j]);
                lo[j] = a + b;
                hi[j] = (a - b) * w[j];
            }
        }
        span = half;
    }
    Ok(())
}

/// Exact inverse of [`dif_fft_in_place`]: bit-reversed spectrum in,
/// natural-order samples out, including the `1/l` normalization.
pub fn dif_ifft_in_place<T: Real>(x: &mut [Cplx<T>]) -> Result<()> {
    require_pow2(x.len())?;
    let half_t = T::lit(0.5);
    let mut span = 2;
    while span <= x.len() {
        let half = span / 2;
        let w = twiddles::<T>(span);
        for block in x.chunks_exact_mut(span) {
            let (lo, hi) = block.split_at_mut(half);
            for j in 0..half {
                let t = w[j].conj() * hi[j];
                let a = lo[j];
                lo[j] = (a + t).scale(half_t);
                hi[j] = (a - t).scale(half_t);
            }
        }
        span *= 2;
    }
    Ok(())
}

/// Natural-order forward transform.
pub fn fft<T: Real>(x: &[Cplx<T>]) -> Result<Vec<Cplx<T>>> {
    let mut buf = x.to_vec();
    dif_fft_in_place(&mut buf)?;
    bit_reversal(&buf)
}

/// Natural-order inverse transform, normalized by `1/l`.
pub fn ifft<T: Real>(y: &[Cplx<T>]) -> Result<Vec<Cplx<T>>> {
    let mut buf = bit_reversal(y)?;
    dif_ifft_in_place(&mut buf)?;
    Ok(buf)
}

pub fn next_pow2(n: usize) -> usize {
    n.max(1).next_power_of_two()
}

/// Causal linear convolution of `x` with `h`, truncated to `len(x)`.
/// Both operands are zero-padded to the next power of two
/// `>= len(x) + len(h) - 1`.
pub fn fft_conv<T: Real>(x: &[T], h: &[T]) -> Result<Vec<T>> {
    if x.is_empty() || h.is_empty() {
        return Err(Error::Empty);
    }
    let n = next_pow2(x.len() + h.len() - 1);
    let hf = padded_spectrum(h, n);
    Ok(conv_with_spectrum(x, &hf))
}

/// Bit-reversed spectrum of `h` zero-padded to `n`.
fn padded_spectrum<T: Real>(h: &[T], n: usize) -> Vec<Cplx<T>> {
    let mut buf = vec![Complex::new(T::zero(), T::zero()); n];
    for (b, &v) in buf.iter_mut().zip(h) {
        b.re = v;
    }
    dif_fft_in_place(&mut buf).expect("power of two");
    buf
}

fn conv_with_spectrum<T: Real>(x: &[T], hf: &[Cplx<T>]) -> Vec<T> {
    let mut buf = padded_spectrum(x, hf.len());
    for (a, &b) in buf.iter_mut().zip(hf) {
        *a = *a * b;
    }
    dif_ifft_in_place(&mut buf).expect("power of two");
    buf[..x.len()].iter().map(|c| c.re).collect()
}

/// Grouped depthwise causal convolution through the FFT; each group's
/// filter spectrum is computed once.
pub fn fft_causal_conv<T: Real>(x: &SeqTensor<T>, groups: &GroupSpec) -> Result<SeqTensor<T>> {
    check_channels(x, groups)?;
    let taps = groups.materialize_as::<T>()?;
    let len = x.seq_len();
    let mut y = SeqTensor::zeros(x.channels(), len);
    for (g, h) in taps.iter().enumerate() {
        let n = next_pow2(len + h.len() - 1);
        let hf = padded_spectrum(h, n);
        for c in g * groups.group_size()..(g + 1) * groups.group_size() {
            let out = conv_with_spectrum(x.row(c), &hf);
            y.row_mut(c).copy_from_slice(&out);
        }
    }
    Ok(y)
}

/// Circular convolution `y_t = sum_k h_{(t-k) mod l} x_k` by literal summation.
pub fn circular_conv_oracle<T: Real>(x: &[T], h: &[T]) -> Result<Vec<T>> {
    if x.len() != h.len() {
        return Err(Error::Shape(format!(
            "circular convolution needs equal lengths, got {} and {}",
            x.len(),
            h.len()
        )));
    }
    if x.is_empty() {
        return Err(Error::Empty);
    }
    let l = x.len();
    Ok((0..l)
        .map(|t| {
            let mut acc = T::zero();
            for (k, &xv) in x.iter().enumerate() {
                acc += h[(t + l - k) % l] * xv;
            }
            acc
        })
        .collect())
}
