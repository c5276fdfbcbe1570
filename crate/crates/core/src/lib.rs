//! Synthetic-image detection from local pixel dependencies.
//!
//! The crate is organized bottom-up:
//!
//! - [`lpd`]: neighborhood reconstruction and LPD maps.
//! - [`nn`]: tensors, layers, loss, Adam, gradient checks, checkpoints.
//! - [`model`]: the FerretNet detector, its size variants, accounting and
//!   training.
//! - [`data`]: datasets, transforms, the toy corpus and perturbations.
//! - [`metrics`]: accuracy, average precision and throughput.

pub mod data;
pub mod error;
pub mod image;
pub mod lpd;
pub mod metrics;
pub mod model;
pub mod nn;

pub use error::{Error, Result};
pub use image::Image;
pub use lpd::{lpd_map, lpd_to_image, reconstruct, zero_pad, CenterStrategy, LpdMap, NeighborhoodSpec, Statistic};
