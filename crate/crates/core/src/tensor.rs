//! Dense containers: the channel-major [`SeqTensor`] signal carrier and a
//! small row-major [`Matrix`] used for Toeplitz factors and projections.

use std::ops::{Index, IndexMut, Range};

use crate::error::{Error, Result};
use crate::real::{DType, Real};

/// A `channels x len` array of real samples. Row `c` is the full time
/// series of channel `c`.
#[derive(Debug, Clone, PartialEq)]
pub struct SeqTensor<T = f64> {
    channels: usize,
    len: usize,
    data: Vec<T>,
}

impl<T: Real> SeqTensor<T> {
    /// Builds a tensor from channel-major data, rejecting empty shapes and
    /// non-finite samples.
    pub fn new(channels: usize, len: usize, data: Vec<T>) -> Result<Self> {
        if channels == 0 || len == 0 {
            return Err(Error::Shape(format!("tensor must be at least 1x1, got {channels}x{len}")));
        }
        if data.len() != channels * len {
            return Err(Error::Shape(format!(
                "expected {} samples for {channels}x{len}, got {}",
                channels * len,
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::Shape("tensor contains non-finite samples".into()));
        }
        Ok(Self { channels, len, data })
    }

    pub fn zeros(channels: usize, len: usize) -> Self {
        assert!(channels > 0 && len > 0, "zero-sized SeqTensor");
        Self {
            channels,
            len,
            data: vec![T::zero(); channels * len],
        }
    }

    pub fn from_rows<R: AsRef<[T]>>(rows: &[R]) -> Result<Self> {
        let channels = rows.len();
        let len = rows.first().map(|r| r.as_ref().len()).unwrap_or(0);
        if rows.iter().any(|r| r.as_ref().len() != len) {
            return Err(Error::Shape("rows have unequal lengths".into()));
        }
        let data = rows.iter().flat_map(|r| r.as_ref().iter().copied()).collect();
        Self::new(channels, len, data)
    }

    pub fn from_fn(channels: usize, len: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut out = Self::zeros(channels, len);
        for c in 0..channels {
            for t in 0..len {
                out.data[c * len + t] = f(c, t);
            }
        }
        out
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    /// Number of time steps.
    pub fn seq_len(&self) -> usize {
        self.len
    }

    pub fn dtype(&self) -> DType {
        T::DTYPE
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    pub fn row(&self, c: usize) -> &[T] {
        &self.data[c * self.len..(c + 1) * self.len]
    }

    pub fn row_mut(&mut self, c: usize) -> &mut [T] {
        &mut self.data[c * self.len..(c + 1) * self.len]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[T]> {
        self.data.chunks_exact(self.len)
    }

    pub fn rows_mut(&mut self) -> impl Iterator<Item = &mut [T]> {
        self.data.chunks_exact_mut(self.len)
    }

    pub fn get(&self, c: usize, t: usize) -> T {
        self.data[c * self.len + t]
    }

    pub fn set(&mut self, c: usize, t: usize, v: T) {
        self.data[c * self.len + t] = v;
    }

    pub fn same_shape(&self, other: &Self) -> bool {
        self.channels == other.channels && self.len == other.len
    }

    pub fn ensure_same_shape(&self, other: &Self, what: &str) -> Result<()> {
        if self.same_shape(other) {
            Ok(())
        } else {
            Err(Error::Shape(format!(
                "{what}: {}x{} vs {}x{}",
                self.channels, self.len, other.channels, other.len
            )))
        }
    }

    /// Elementwise product.
    pub fn hadamard(&self, other: &Self) -> Result<Self> {
        self.ensure_same_shape(other, "hadamard")?;
        Ok(self.zip_map(other, |a, b| a * b))
    }

    pub fn zip_map(&self, other: &Self, f: impl Fn(T, T) -> T) -> Self {
        debug_assert!(self.same_shape(other));
        Self {
            channels: self.channels,
            len: self.len,
            data: self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect(),
        }
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Self {
            channels: self.channels,
            len: self.len,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.ensure_same_shape(other, "add")?;
        Ok(self.zip_map(other, |a, b| a + b))
    }

    pub fn scale(&self, s: T) -> Self {
        self.map(|v| v * s)
    }

    /// Largest elementwise absolute difference, in `f64`.
    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        assert!(self.same_shape(other), "max_abs_diff on different shapes");
        self.data
            .iter()
            .zip(&other.data)
            .map(|(&a, &b)| (a.as_f64() - b.as_f64()).abs())
            .fold(0.0, f64::max)
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().map(|v| v.as_f64().abs()).fold(0.0, f64::max)
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn dot(&self, other: &Self) -> f64 {
        assert!(self.same_shape(other));
        self.data.iter().zip(&other.data).map(|(&a, &b)| a.as_f64() * b.as_f64()).sum()
    }

    pub fn cast<U: Real>(&self) -> SeqTensor<U> {
        SeqTensor {
            channels: self.channels,
            len: self.len,
            data: self.data.iter().map(|v| U::lit(v.as_f64())).collect(),
        }
    }

    /// Time window `range` of every channel.
    pub fn slice_time(&self, range: Range<usize>) -> Self {
        assert!(range.start < range.end && range.end <= self.len);
        let len = range.len();
        let mut data = Vec::with_capacity(self.channels * len);
        for row in self.rows() {
            data.extend_from_slice(&row[range.clone()]);
        }
        Self {
            channels: self.channels,
            len,
            data,
        }
    }

    pub fn slice_channels(&self, range: Range<usize>) -> Self {
        assert!(range.start < range.end && range.end <= self.channels);
        Self {
            channels: range.len(),
            len: self.len,
            data: self.data[range.start * self.len..range.end * self.len].to_vec(),
        }
    }

    /// Concatenates along time; all parts must share the channel count.
    pub fn concat_time(parts: &[Self]) -> Result<Self> {
        let first = parts.first().ok_or(Error::Empty)?;
        let channels = first.channels;
        if parts.iter().any(|p| p.channels != channels) {
            return Err(Error::Shape("concat_time: channel counts differ".into()));
        }
        let len: usize = parts.iter().map(|p| p.len).sum();
        let mut data = Vec::with_capacity(channels * len);
        for c in 0..channels {
            for p in parts {
                data.extend_from_slice(p.row(c));
            }
        }
        Ok(Self { channels, len, data })
    }

    /// Stacks along channels; all parts must share the length.
    pub fn concat_channels(parts: &[Self]) -> Result<Self> {
        let first = parts.first().ok_or(Error::Empty)?;
        let len = first.len;
        if parts.iter().any(|p| p.len != len) {
            return Err(Error::Shape("concat_channels: lengths differ".into()));
        }
        let channels = parts.iter().map(|p| p.channels).sum();
        let data = parts.iter().flat_map(|p| p.data.iter().copied()).collect();
        Ok(Self { channels, len, data })
    }
}

/// Row-major dense matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix<T = f64> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Real> Matrix<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![T::zero(); rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = T::one();
        }
        m
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::Shape(format!(
                "matrix {rows}x{cols} needs {} entries, got {}",
                rows * cols,
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_rows<R: AsRef<[T]>>(rows: &[R]) -> Result<Self> {
        let cols = rows.first().map(|r| r.as_ref().len()).unwrap_or(0);
        if rows.iter().any(|r| r.as_ref().len() != cols) {
            return Err(Error::Shape("matrix rows have unequal lengths".into()));
        }
        let data = rows.iter().flat_map(|r| r.as_ref().iter().copied()).collect();
        Self::from_vec(rows.len(), cols, data)
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut m = Self::zeros(rows, cols);
        for i in 0..rows {
            for j in 0..cols {
                m[(i, j)] = f(i, j);
            }
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn row(&self, i: usize) -> &[T] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self[(j, i)])
    }

    pub fn matmul(&self, other: &Self) -> Result<Self> {
        if self.cols != other.rows {
            return Err(Error::Shape(format!(
                "matmul {}x{} by {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let mut out = Self::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(i, k)];
                for j in 0..other.cols {
                    out.data[i * other.cols + j] += a * other[(k, j)];
                }
            }
        }
        Ok(out)
    }

    /// `self * x` for a vector `x`.
    pub fn mul_vec(&self, x: &[T]) -> Vec<T> {
        assert_eq!(x.len(), self.cols);
        (0..self.rows)
            .map(|i| self.row(i).iter().zip(x).map(|(&a, &b)| a * b).sum())
            .collect()
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        self.data
            .iter()
            .zip(&other.data)
            .map(|(&a, &b)| (a.as_f64() - b.as_f64()).abs())
            .fold(0.0, f64::max)
    }
}

impl<T> Index<(usize, usize)> for Matrix<T> {
    type Output = T;

    fn index(&self, (i, j): (usize, usize)) -> &T {
        &self.data[i * self.cols + j]
    }
}

impl<T> IndexMut<(usize, usize)> for Matrix<T> {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut T {
        &mut self.data[i * self.cols + j]
    }
}
