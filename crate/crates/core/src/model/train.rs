//! Training, evaluation and trained-model persistence.

use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::ferretnet::{FerretConfig, FerretNet};
use crate::data::perturb::{perturb, PerturbationSpec};
use crate::data::transform::{eval_transform, train_transform, EVAL_CROP, TRAIN_CROP};
use crate::data::LabeledDataset;
use crate::error::{Error, Result};
use crate::image::Image;
use crate::lpd::{lpd_map, NeighborhoodSpec};
use crate::metrics::{accuracy, average_precision, ScoredBatch};
use crate::nn::{bce_with_logits_loss, sigmoid, AdamConfig, AdamState, Checkpoint, Layer, Mode, Tensor};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub lr: f64,
    pub betas: (f64, f64),
    pub weight_decay: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    pub crop_size: usize,
    /// Worker count. Not persisted.
    #[serde(skip, default = "one")]
    pub threads: usize,
}

fn one() -> usize {
    1
}

impl Default for TrainConfig {
    fn default() -> Self {
        let adam = AdamConfig::default();
        Self {
            lr: adam.lr,
            betas: (adam.beta1, adam.beta2),
            weight_decay: adam.weight_decay,
            batch_size: 32,
            epochs: 100,
            seed: 0,
            crop_size: TRAIN_CROP,
            threads: 1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let unit = |b: f64| b > 0.0 && b < 1.0;
        if !(self.lr > 0.0 && self.weight_decay >= 0.0 && unit(self.betas.0) && unit(self.betas.1)) {
            return Err(Error::Config(format!("bad optimizer settings {self:?}")));
        }
        if self.batch_size == 0 || self.epochs == 0 || self.crop_size == 0 || self.threads == 0 {
            return Err(Error::Config(
                "batch size, epochs, crop size and threads must be positive".into(),
            ));
        }
        Ok(())
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            lr: self.lr,
            beta1: self.betas.0,
            beta2: self.betas.1,
            weight_decay: self.weight_decay,
            ..AdamConfig::default()
        }
    }
}

/// What the network sees: the LPD map of a crop, or the crop itself.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "kind")]
pub enum InputKind {
    Lpd(NeighborhoodSpec),
    Raw,
}

impl InputKind {
    pub fn prepare(&self, image: Image<f32>) -> Result<Image<f32>> {
        match self {
            Self::Lpd(spec) => Ok(lpd_map(&image, spec)?.0),
            Self::Raw => Ok(image),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    /// Mean per-sample training loss.
    pub loss: f64,
    /// Accuracy of the train-mode predictions made during the epoch.
    pub acc: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub epochs: Vec<EpochStats>,
}

/// Stacks equally shaped `(C, H, W)` images into an `(N, C, H, W)` tensor.
pub fn images_to_batch(images: &[Image<f32>]) -> Result<Tensor<f32>> {
    let first = images.first().ok_or_else(|| Error::Empty("image batch".into()))?;
    let (c, h, w) = first.shape();
    let mut data = Vec::with_capacity(images.len() * c * h * w);
    for im in images {
        if im.shape() != (c, h, w) {
            return Err(Error::Shape(format!("{:?} vs {:?} in one batch", im.shape(), (c, h, w))));
        }
        data.extend_from_slice(im.data());
    }
    Tensor::new(&[images.len(), c, h, w], data)
}

fn sample_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn thread_pool(threads: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads.max(1))
        .build()
        .map_err(|e| Error::Config(e.to_string()))
}

/// Mini-batch training with BCE loss and Adam. The run is a pure function of
/// the initial model, the dataset and `config`: shuffles, crops, flips and
/// dropout masks all derive from `config.seed`.
pub fn train(
    model: &mut dyn Layer<f32>,
    dataset: &LabeledDataset,
    config: &TrainConfig,
    input: InputKind,
) -> Result<TrainHistory> {
    config.validate()?;
    dataset.require_both_classes()?;
    let labels = dataset.labels();
    let pool = thread_pool(config.threads)?;
    let mut adam = AdamState::<f32>::new(config.adam());
    let mut history = TrainHistory::default();
    let mut step = 0u64;

    for epoch in 0..config.epochs {
        let mut order: Vec<usize> = (0..dataset.len()).collect();
        order.shuffle(&mut sample_rng(config.seed ^ 0x5eed_5eed, epoch as u64));
        let (mut loss_sum, mut correct) = (0.0f64, 0usize);

        for chunk in order.chunks(config.batch_size) {
            let prepared: Vec<Image<f32>> = pool.install(|| {
                chunk
                    .par_iter()
                    .map(|&i| {
                        let mut rng = sample_rng(config.seed, ((epoch as u64) << 32) | i as u64);
                        let crop = train_transform(&dataset.load(i)?, config.crop_size, &mut rng)?;
                        input.prepare(crop)
                    })
                    .collect::<Result<_>>()
            })?;
            let x = images_to_batch(&prepared)?;
            let targets: Vec<f32> = chunk.iter().map(|&i| labels[i] as f32).collect();

            model.reseed(config.seed.wrapping_mul(0x9e37_79b9_7f4a_7c15).wrapping_add(step));
            model.zero_grad();
            let logits = model.forward(&x, Mode::Train)?;
            let (loss, grad) = bce_with_logits_loss(&logits, &targets)?;
            if !loss.is_finite() {
                return Err(Error::Config(format!("training diverged at step {step}")));
            }
            model.backward(&grad)?;
            adam.step_layer(model)?;

            loss_sum += loss as f64 * chunk.len() as f64;
            correct += logits
                .data()
                .iter()
                .zip(&targets)
                .filter(|(&z, &t)| (z >= 0.0) == (t == 1.0))
                .count();
            step += 1;
        }
        let stats = EpochStats {
            epoch: epoch + 1,
            loss: loss_sum / dataset.len() as f64,
            acc: correct as f64 / dataset.len() as f64,
        };
        log::info!("epoch {} loss {:.5} acc {:.4}", stats.epoch, stats.loss, stats.acc);
        history.epochs.push(stats);
    }
    Ok(history)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalOptions {
    pub eval_size: usize,
    pub input: InputKind,
    /// Applied once per image, before the eval transform.
    pub perturb: Option<PerturbationSpec>,
    pub seed: u64,
    pub batch_size: usize,
    pub threads: usize,
}

impl EvalOptions {
    pub fn new(input: InputKind) -> Self {
        Self {
            eval_size: EVAL_CROP,
            input,
            perturb: None,
            seed: 0,
            batch_size: 32,
            threads: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub acc: f64,
    pub ap: f64,
    pub n: usize,
    pub scores: Vec<f64>,
    pub labels: Vec<u8>,
}

/// Preprocessing shared by evaluation and single-image detection.
pub fn eval_input(
    image: &Image<f32>,
    opts: &EvalOptions,
    index: usize,
) -> Result<Image<f32>> {
    let image = match &opts.perturb {
        Some(spec) => perturb(image, spec, &mut sample_rng(opts.seed, index as u64))?,
        None => image.clone(),
    };
    opts.input.prepare(eval_transform(&image, opts.eval_size)?)
}

/// Fake-probabilities `sigmoid(logit)` for a prepared batch.
pub fn predict_proba(model: &dyn Layer<f32>, images: &[Image<f32>]) -> Result<Vec<f64>> {
    let logits = model.infer(&images_to_batch(images)?)?;
    Ok(logits.data().iter().map(|&z| sigmoid(z as f64)).collect())
}

/// Eval-mode ACC (threshold 0.5) and AP over the whole dataset.
pub fn evaluate(model: &dyn Layer<f32>, dataset: &LabeledDataset, opts: &EvalOptions) -> Result<EvalReport> {
    if opts.batch_size == 0 {
        return Err(Error::Config("batch size must be positive".into()));
    }
    let pool = thread_pool(opts.threads)?;
    let mut scores = Vec::with_capacity(dataset.len());
    let indices: Vec<usize> = (0..dataset.len()).collect();
    for chunk in indices.chunks(opts.batch_size) {
        let prepared: Vec<Image<f32>> = pool.install(|| {
            chunk
                .par_iter()
                .map(|&i| eval_input(&dataset.load(i)?, opts, i))
                .collect::<Result<_>>()
        })?;
        scores.extend(pool.install(|| predict_proba(model, &prepared))?);
    }
    let labels = dataset.labels();
    let batch = ScoredBatch::new(scores.clone(), labels.clone())?;
    Ok(EvalReport {
        acc: accuracy(&batch, 0.5),
        ap: average_precision(&batch)?,
        n: batch.len(),
        scores,
        labels,
    })
}

/// Everything needed to rebuild and re-run a trained detector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainManifest {
    pub model: FerretConfig,
    pub input: InputKind,
    pub train: TrainConfig,
    pub seed: u64,
    pub history: TrainHistory,
}

/// Sidecar manifest path for a checkpoint: `model.ckpt` -> `model.json`.
pub fn sidecar_path(checkpoint: &Path) -> PathBuf {
    checkpoint.with_extension("json")
}

/// Writes the checkpoint (manifest embedded as metadata) and its sidecar JSON.
pub fn save_trained(path: &Path, model: &FerretNet<f32>, manifest: &TrainManifest) -> Result<()> {
    let meta = serde_json::to_value(manifest)?;
    Checkpoint::capture(model, manifest.seed, meta).save(path)?;
    let side = sidecar_path(path);
    let json = serde_json::to_string_pretty(manifest)?;
    std::fs::write(&side, json).map_err(|e| Error::io(&side, e))
}

pub fn load_trained(path: &Path) -> Result<(FerretNet<f32>, TrainManifest)> {
    let ckpt = Checkpoint::load(path)?;
    let manifest: TrainManifest = serde_json::from_value(ckpt.meta.clone())
        .map_err(|e| Error::Checkpoint(format!("missing or bad training manifest: {e}")))?;
    let mut model = FerretNet::new(manifest.model.clone(), manifest.seed)?;
    ckpt.restore(&mut model)?;
    Ok((model, manifest))
}
