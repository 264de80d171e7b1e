//! Convolution machinery for gated convolutional sequence operators.
//!
//! * [`conv`]: the brute-force causal convolution every other path is checked against.
//! * [`blockconv`]: Toeplitz block factorization, two-stage and K-block convolution.
//! * [`fft`]: radix-2 DiF/DiT transforms and FFT convolution.
//! * [`hyena`]: the gated operator, its SE/MR/LI variants and layer stacks.
//! * [`cpsim`]: a deterministic simulator of context-parallel convolution schemes.

pub mod blockconv;
pub mod conv;
pub mod cpsim;
pub mod error;
pub mod fft;
pub mod filter;
pub mod gradcheck;
pub mod hyena;
pub mod real;
pub mod rng;
pub mod tensor;

pub use conv::{direct_causal_conv, full_toeplitz};
pub use error::{Error, Result};
pub use filter::{FilterSpec, GroupSpec};
pub use real::{DType, Real};
pub use tensor::{Matrix, SeqTensor};
