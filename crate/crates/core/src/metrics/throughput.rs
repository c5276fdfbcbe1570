use std::fmt;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::Image;
use crate::lpd::{lpd_map, NeighborhoodSpec};
use crate::model::train::images_to_batch;
use crate::nn::Layer;

pub const WARMUP_BATCHES: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchConfig {
    /// `(channels, height, width)` of one synthetic input.
    pub input_shape: (usize, usize, usize),
    pub batch_size: usize,
    pub duration: Duration,
    /// `None` benchmarks the network alone.
    pub lpd: Option<NeighborhoodSpec>,
    pub threads: usize,
    pub warmup_batches: usize,
    pub seed: u64,
}

impl BenchConfig {
    pub fn new(input_shape: (usize, usize, usize), batch_size: usize, duration: Duration) -> Self {
        Self {
            input_shape,
            batch_size,
            duration,
            lpd: Some(NeighborhoodSpec::default()),
            threads: 1,
            warmup_batches: WARMUP_BATCHES,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThroughputReport {
    pub fps: f64,
    pub p50_latency_ms: f64,
    pub p95_latency_ms: f64,
    pub batches: usize,
    pub images: usize,
    pub elapsed_s: f64,
    pub batch_size: usize,
    pub input_shape: (usize, usize, usize),
    pub lpd: bool,
    pub threads: usize,
}

impl fmt::Display for ThroughputReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let (c, h, w) = self.input_shape;
        let rows = [
            ("fps", format!("{:.2}", self.fps)),
            ("p50 latency (ms)", format!("{:.3}", self.p50_latency_ms)),
            ("p95 latency (ms)", format!("{:.3}", self.p95_latency_ms)),
            ("batches", self.batches.to_string()),
            ("images", self.images.to_string()),
            ("elapsed (s)", format!("{:.3}", self.elapsed_s)),
            ("batch size", self.batch_size.to_string()),
            ("input", format!("{c}x{h}x{w}")),
            ("lpd", self.lpd.to_string()),
            ("threads", self.threads.to_string()),
        ];
        for (k, v) in rows {
            writeln!(f, "{k:<18} {v:>14}")?;
        }
        Ok(())
    }
}

/// Nearest-rank percentile of `values` (`q` in `[0, 100]`).
pub fn percentile(values: &[f64], q: f64) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let rank = ((q / 100.0) * v.len() as f64).ceil() as usize;
    v[rank.clamp(1, v.len()) - 1]
}

/// Times `model` in eval mode on synthetic `[0, 1]` batches, including the
/// LPD stage when configured. Warmup batches are excluded; measurement runs
/// until `duration` has elapsed (at least one batch).
pub fn benchmark_throughput(model: &dyn Layer<f32>, config: &BenchConfig) -> Result<ThroughputReport> {
    if config.batch_size == 0 || config.threads == 0 {
        return Err(Error::Config("batch size and threads must be positive".into()));
    }
    let (c, h, w) = config.input_shape;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let images: Vec<Image<f32>> = (0..config.batch_size)
        .map(|_| Image::from_fn(c, h, w, |_, _, _| rng.random::<f32>()))
        .collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.threads)
        .build()
        .map_err(|e| Error::Config(e.to_string()))?;

    let run_batch = || -> Result<()> {
        let inputs: Vec<Image<f32>> = match &config.lpd {
            Some(spec) => images
                .par_iter()
                .map(|im| lpd_map(im, spec).map(|m| m.0))
                .collect::<Result<_>>()?,
            None => images.clone(),
        };
        let logits = model.infer(&images_to_batch(&inputs)?)?;
        std::hint::black_box(logits);
        Ok(())
    };

    pool.install(|| {
        for _ in 0..config.warmup_batches {
            run_batch()?;
        }
        let mut latencies = Vec::new();
        let start = Instant::now();
        while latencies.is_empty() || start.elapsed() < config.duration {
            let t = Instant::now();
            run_batch()?;
            latencies.push(t.elapsed().as_secs_f64());
        }
        let elapsed = start.elapsed().as_secs_f64();
        let images = latencies.len() * config.batch_size;
        Ok(ThroughputReport {
            fps: images as f64 / elapsed,
            p50_latency_ms: percentile(&latencies, 50.0) * 1e3,
            p95_latency_ms: percentile(&latencies, 95.0) * 1e3,
            batches: latencies.len(),
            images,
            elapsed_s: elapsed,
            batch_size: config.batch_size,
            input_shape: config.input_shape,
            lpd: config.lpd.is_some(),
            threads: config.threads,
        })
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{FerretConfig, FerretNet, FerretVariant};

    #[test]
    fn percentiles() {
        let v = [5.0, 1.0, 3.0, 2.0, 4.0];
        assert_eq!(percentile(&v, 50.0), 3.0);
        assert_eq!(percentile(&v, 95.0), 5.0);
        assert_eq!(percentile(&v, 0.0), 1.0);
    }

    #[test]
    fn reports_positive_fps() {
        let model = FerretNet::<f32>::new(FerretConfig::new(FerretVariant::small()), 0).unwrap();
        let mut cfg = BenchConfig::new((3, 32, 32), 2, Duration::from_millis(50));
        cfg.warmup_batches = 1;
        let r = benchmark_throughput(&model, &cfg).unwrap();
        assert!(r.fps.is_finite() && r.fps > 0.0);
        assert!(r.batches >= 1 && r.p95_latency_ms >= r.p50_latency_ms);
        assert_eq!(r.threads, 1);
    }
}
