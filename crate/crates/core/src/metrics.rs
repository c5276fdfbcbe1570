//! Accuracy, average precision and throughput.

mod throughput;

pub use throughput::{benchmark_throughput, percentile, BenchConfig, ThroughputReport, WARMUP_BATCHES};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Probabilities and binary labels of equal, non-zero length.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredBatch {
    scores: Vec<f64>,
    labels: Vec<u8>,
}

impl ScoredBatch {
    pub fn new(scores: Vec<f64>, labels: Vec<u8>) -> Result<Self> {
        if scores.is_empty() {
            return Err(Error::Empty("scored batch".into()));
        }
        if scores.len() != labels.len() {
            return Err(Error::Shape(format!(
                "{} scores but {} labels",
                scores.len(),
                labels.len()
            )));
        }
        if labels.iter().any(|&l| l > 1) {
            return Err(Error::Config("labels must be 0 or 1".into()));
        }
        if scores.iter().any(|s| s.is_nan()) {
            return Err(Error::Config("NaN score".into()));
        }
        Ok(Self { scores, labels })
    }

    pub fn scores(&self) -> &[f64] {
        &self.scores
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }
}

/// Fraction of samples where `(score >= threshold) == label`.
pub fn accuracy(batch: &ScoredBatch, threshold: f64) -> f64 {
    let correct = batch
        .scores
        .iter()
        .zip(&batch.labels)
        .filter(|(&s, &l)| (s >= threshold) == (l == 1))
        .count();
    correct as f64 / batch.len() as f64
}

/// Non-interpolated AP: mean of precision@k over the ranks of the positives,
/// ranking by descending score with ties broken by original index.
pub fn average_precision(batch: &ScoredBatch) -> Result<f64> {
    let positives = batch.labels.iter().filter(|&&l| l == 1).count();
    if positives == 0 {
        return Err(Error::Config("average precision needs at least one positive".into()));
    }
    let mut order: Vec<usize> = (0..batch.len()).collect();
    order.sort_by(|&a, &b| batch.scores[b].total_cmp(&batch.scores[a]).then(a.cmp(&b)));
    let mut hits = 0usize;
    let mut sum = 0.0;
    for (rank, &i) in order.iter().enumerate() {
        if batch.labels[i] == 1 {
            hits += 1;
            sum += hits as f64 / (rank + 1) as f64;
        }
    }
    Ok(sum / positives as f64)
}
