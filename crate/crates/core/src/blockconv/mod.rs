//! Toeplitz block factorization and the blocked convolution paths: the
//! general K-block convolution, the gated two-stage forward/backward pair,
//! the chunk-parallel variant and the dense FLOP model.
//!
//! Factors are built once per (filter, block size) and shared by every chunk
//! and every channel of a group.

mod backward;
mod chunked;
mod factors;
mod kernel;
mod two_stage;

pub use backward::{two_stage_backward, TwoStageGrads};
pub use chunked::ChunkedSeq;
pub use factors::{build_factors, spill_blocks, toeplitz_index, ToeplitzFactors};
pub use kernel::{MulCounter, NoTally, Tally};
pub use two_stage::{
    block_conv, chunk_parallel_forward, two_stage_eligible, two_stage_flops, two_stage_forward, two_stage_forward_counted,
    two_stage_forward_saved, TwoStageContext,
};
