//! A small CPU convolutional-network engine: im2col convolutions on top of a
//! blocked GEMM, momentum SGD, finite-difference gradient checking and the
//! four reference architectures.

pub mod checkpoint;
pub mod error;
pub mod float;
pub mod gradcheck;
pub mod layer;
pub mod loss;
pub mod network;
pub mod optim;
pub mod presets;
pub mod tensor;

pub use checkpoint::{load_checkpoint, save_checkpoint, summary};
pub use error::{Error, Result};
pub use float::Float;
pub use gradcheck::{gradient_check, GradCheckConfig, GradCheckReport};
pub use layer::{LayerSpec, Shape};
pub use loss::{log_softmax_nll, nll_loss};
pub use network::{Mode, Network, StochasticKey};
pub use optim::{lr_schedule_cifar, sgd_step, SgdConfig};
pub use presets::{build_preset, Preset};
pub use tensor::Tensor;

#[cfg(feature = "fast-alloc")]
#[global_allocator]
static GLOBAL: mimalloc::MiMalloc = mimalloc::MiMalloc;
