//! The gated operator `y = (q * conv(h_G, k * v)) M`, its three inner-filter
//! variants, layer stacks and a small training loop.

mod config;
mod init;
mod layout;
mod op;
mod train;

pub use config::{Backend, HyenaConfig, Projection, Variant, DEFAULT_FEATURIZER_LEN, DEFAULT_MR_LEN, DEFAULT_SE_LEN, SE_MAX_LEN};
pub use init::{random_config, random_inner, HyenaOptions};
pub use layout::{build_layout, layout_forward, stack_backward, stack_forward_saved, LayoutSpec, Stack, StackSaved};
pub use op::{hyena_backward, hyena_forward, hyena_forward_saved, inner_conv, HyenaGrads, HyenaSaved};
pub use train::{loss_and_grad, shift_task, smoke_stack, smoke_train, SmokeOptions, TrainReport};
