//! Seeded randomness. Every random draw in tests, benches and the CLI goes
//! through a ChaCha8 stream keyed by one 64-bit seed.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::real::Real;
use crate::tensor::{Matrix, SeqTensor};

pub type SimRng = ChaCha8Rng;

pub fn seeded(seed: u64) -> SimRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Derives an independent stream for sub-task `stream` of a run.
pub fn fork(seed: u64, stream: u64) -> SimRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

pub fn uniform_vec(rng: &mut SimRng, n: usize, lo: f64, hi: f64) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(lo..hi)).collect()
}

pub fn normal_vec(rng: &mut SimRng, n: usize, std: f64) -> Vec<f64> {
    (0..n)
        .map(|_| {
            let z: f64 = StandardNormal.sample(rng);
            z * std
        })
        .collect()
}

/// Samples uniform in `[-1, 1)`.
pub fn uniform_tensor<T: Real>(rng: &mut SimRng, channels: usize, len: usize) -> SeqTensor<T> {
    let data = (0..channels * len).map(|_| T::lit(rng.random_range(-1.0..1.0))).collect();
    SeqTensor::new(channels, len, data).expect("valid shape")
}

pub fn normal_matrix(rng: &mut SimRng, rows: usize, cols: usize, std: f64) -> Matrix<f64> {
    Matrix::from_vec(rows, cols, normal_vec(rng, rows * cols, std)).expect("valid shape")
}

/// Filter taps uniform in `[-1, 1)` scaled by `1/sqrt(len)`, which keeps
/// convolution outputs O(1) for any filter length.
pub fn filter_taps(rng: &mut SimRng, len: usize) -> Vec<f64> {
    let s = 1.0 / (len as f64).sqrt();
    (0..len).map(|_| rng.random_range(-1.0..1.0) * s).collect()
}
