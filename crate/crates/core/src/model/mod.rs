//! FerretNet: architecture, size variants, accounting and training.

pub mod description;
pub mod ferretnet;
pub mod train;
pub mod variant;
pub mod verify;

pub use description::{describe_ferretnet, LayerDesc, ModelDescription, Node};
pub use ferretnet::{FerretBlock, FerretConfig, FerretNet, DEFAULT_DROPOUT, MIN_INPUT_SIDE};
pub use train::{
    eval_input, evaluate, images_to_batch, load_trained, predict_proba, save_trained, sidecar_path, train,
    EpochStats, EvalOptions, EvalReport, InputKind, TrainConfig, TrainHistory, TrainManifest,
};
pub use variant::{FerretVariant, VariantName};
pub use verify::{gradcheck_suite, CheckOutcome};

use crate::nn::{Layer, Scalar};

/// Number of trainable parameter elements actually allocated by `model`.
pub fn param_count<T: Scalar>(model: &dyn Layer<T>) -> u64 {
    model.num_params() as u64
}

/// FLOPs of `model`'s architecture at `input_shape` (`2 x MACs`).
pub fn flops_count(description: &ModelDescription, input_shape: &[usize]) -> crate::Result<u64> {
    description.flops_count(input_shape)
}
