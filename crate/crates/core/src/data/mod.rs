//! Dataset ingestion, transforms, the toy corpus and perturbations.

pub mod dataset;
pub mod io;
pub mod perturb;
pub mod toy;
pub mod transform;

pub use dataset::{load_dataset, Entry, LabeledDataset, FAKE, REAL};
pub use io::{load_image, save_png};
pub use perturb::{perturb, psnr, PerturbationSpec};
pub use toy::{gen_toy_corpus, toy_pair, ToyManifest};
pub use transform::{
    center_crop, eval_transform, resize_bilinear, resize_nearest, resize_shorter_side, train_transform,
    EVAL_CROP, TRAIN_CROP,
};
