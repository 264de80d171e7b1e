//! Dense block kernels shared by the blocked convolution paths.

use crate::real::Real;
use crate::tensor::Matrix;

/// Receives one tick per scalar multiply performed by a kernel.
pub trait Tally {
    fn tick(&mut self);
}

/// Discards ticks; compiles away.
pub struct NoTally;

impl Tally for NoTally {
    #[inline(always)]
    fn tick(&mut self) {}
}

/// Counts every multiply a kernel executes.
#[derive(Debug, Default, Clone, Copy, PartialEq, Eq)]
pub struct MulCounter(pub u64);

impl Tally for MulCounter {
    #[inline(always)]
    fn tick(&mut self) {
        self.0 += 1;
    }
}

/// `out += H x` for a single `lb`-long channel chunk.
#[inline]
pub(crate) fn gemv_acc<T: Real, C: Tally>(h: &Matrix<T>, x: &[T], out: &mut [T], tally: &mut C) {
    let lb = h.rows();
    debug_assert_eq!(x.len(), lb);
    debug_assert_eq!(out.len(), lb);
    for (i, y) in out.iter_mut().enumerate() {
        let row = h.row(i);
        let mut acc = *y;
        for j in 0..lb {
            acc += row[j] * x[j];
            tally.tick();
        }
        *y = acc;
    }
}

/// `out += H^T x`.
#[inline]
pub(crate) fn gemv_t_acc<T: Real>(h: &Matrix<T>, x: &[T], out: &mut [T]) {
    let lb = h.rows();
    for (j, y) in out.iter_mut().enumerate() {
        let mut acc = *y;
        for i in 0..lb {
            acc += h[(i, j)] * x[i];
        }
        *y = acc;
    }
}

/// Copies `x`'s row into a buffer padded with zeros to `padded` samples.
pub(crate) fn padded_row<T: Real>(row: &[T], padded: usize) -> Vec<T> {
    let mut out = vec![T::zero(); padded];
    out[..row.len()].copy_from_slice(row);
    out
}
