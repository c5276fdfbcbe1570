//! A small reverse-mode engine: exactly the layers, loss and optimizer the
//! detector needs.

pub mod adam;
pub mod batchnorm;
pub mod checkpoint;
pub mod conv;
pub mod gradcheck;
pub mod layer;
pub mod loss;
pub mod tensor;

pub use adam::{AdamConfig, AdamState};
pub use batchnorm::BatchNorm2d;
pub use checkpoint::Checkpoint;
pub use conv::{Conv2d, ConvSpec};
pub use gradcheck::{finite_diff_gradcheck, GradCheckOptions, GradCheckReport};
pub use layer::{Dropout, GlobalAvgPool, Layer, Linear, Relu, Sequential};
pub use loss::{bce_with_logits_loss, sigmoid};
pub use tensor::{Mode, Param, Scalar, Tensor};
