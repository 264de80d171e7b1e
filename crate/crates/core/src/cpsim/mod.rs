//! Deterministic simulation of a context-parallel rank group running the
//! convolution schemes: all-to-all (plain and channel-pipelined),
//! halo-exchange point-to-point (plain and overlapped) and a distributed FFT.

mod a2a;
mod fabric;
mod fft;
mod p2p;
mod run;
mod shard;

pub use a2a::{a2a_conv, a2a_conv_backward, a2a_conv_pipelined, a2a_conv_saved, A2aGrads, A2aSaved, A2A, A2A_BACKWARD, A2A_PIPELINED};
pub use fabric::{Dst, Envelope, ExecMode, MessageRecord, SimGroup};
pub use fft::{p2p_fft_causal_wrapper, p2p_fft_conv, p2p_fft_conv_traced, spectrum_bin, FftTrace, FFT_RANKS, P2P_FFT};
pub use p2p::{overlap_correction, p2p_conv, p2p_conv_overlapped, p2p_conv_overlapped_traced, OverlapTrace, P2P, P2P_OVERLAPPED};
pub use run::{run_scheme, Scheme, SchemeRun};
pub use shard::{gather, shard, Layout, ShardedSeq};

#[cfg(test)]
mod tests;
