//! Dense tensors, feed-forward blocks with hand-written backward passes,
//! optimizers, finite-difference gradient checking and checkpoints.

pub mod checkpoint;
pub mod ffn;
pub mod gradcheck;
pub mod ops;
pub mod optim;
pub mod param;
pub mod tensor;

pub use ffn::{Activation, Dense, FeedForwardBlock, FfnCache, DEFAULT_HIDDEN};
pub use gradcheck::{grad_check, GradCheckConfig, GradCheckReport};
pub use ops::{l2_normalize, sigmoid, softmax};
pub use optim::{Optimizer, OptimizerConfig, OptimizerKind};
pub use param::{Module, Parameter};
pub use tensor::Tensor;
