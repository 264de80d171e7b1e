use thiserror::Error;

/// Errors raised by the convolution, operator and simulation layers.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid filter: {0}")]
    InvalidFilter(String),

    #[error("invalid shape: {0}")]
    Shape(String),

    #[error("channel mismatch: expected {expected} channels, got {got}")]
    ChannelMismatch { expected: usize, got: usize },

    #[error(
        "filter length {filter_len} needs more than one spill-over block at block size \
         {block_size} (two-stage requires filter_len <= block_size + 1); use block_conv"
    )]
    TwoStageIneligible { filter_len: usize, block_size: usize },

    #[error("length {0} is not a power of two")]
    NotPowerOfTwo(usize),

    #[error("divisibility violated: {0}")]
    Divisibility(String),

    #[error("unsupported rank count {ranks} for scheme {scheme}")]
    UnsupportedRanks { ranks: usize, scheme: &'static str },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("loss became non-finite at step {step}")]
    Diverged { step: usize },

    #[error("empty input")]
    Empty,
}

pub type Result<T> = std::result::Result<T, Error>;
