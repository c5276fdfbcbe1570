//! Procedural real/fake corpus for desk-scale experiments.
//!
//! "Real" images are colored 1/f noise with a few flat shapes pasted on top.
//! "Fake" images come from the same generator but are then halved and
//! re-enlarged (alternately with nearest-neighbor and bilinear upsampling),
//! which leaves the blocky or smoothed local statistics that decoder
//! upsampling produces.

use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use super::dataset::{load_dataset, LabeledDataset};
use super::io::save_png;
use super::transform::{resize_bilinear, resize_nearest};
use crate::error::{Error, Result};
use crate::image::Image;

pub const SPECTRAL_EXPONENT: f64 = 1.0;
pub const MIN_TOY_SIZE: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Upsampling {
    Nearest,
    Bilinear,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToyManifest {
    pub generator: String,
    pub count_per_class: usize,
    pub size: usize,
    pub seed: u64,
    pub spectral_exponent: f64,
    pub shapes_per_image: (usize, usize),
    pub fake_downscale: usize,
    /// Upsampling used for fake image `i` is `fake_upsampling[i % 2]`.
    pub fake_upsampling: [Upsampling; 2],
}

/// Zero-mean, unit-variance Gaussian field with a `1/f^exponent` amplitude
/// spectrum.
pub fn pink_noise(size: usize, exponent: f64, rng: &mut impl Rng) -> Vec<f64> {
    let mut planner = FftPlanner::<f64>::new();
    let fft = planner.plan_fft_inverse(size);
    let freq = |k: usize| k.min(size - k) as f64 / size as f64;
    let mut buf: Vec<Complex<f64>> = Vec::with_capacity(size * size);
    for ky in 0..size {
        for kx in 0..size {
            let f = (freq(ky).powi(2) + freq(kx).powi(2)).sqrt();
            let amp = if f == 0.0 { 0.0 } else { f.powf(-exponent) };
            let re: f64 = rng.sample(StandardNormal);
            let im: f64 = rng.sample(StandardNormal);
            buf.push(Complex::new(re * amp, im * amp));
        }
    }
    for row in buf.chunks_exact_mut(size) {
        fft.process(row);
    }
    let mut col = vec![Complex::new(0.0, 0.0); size];
    for x in 0..size {
        for y in 0..size {
            col[y] = buf[y * size + x];
        }
        fft.process(&mut col);
        for y in 0..size {
            buf[y * size + x] = col[y];
        }
    }
    let vals: Vec<f64> = buf.iter().map(|c| c.re).collect();
    let n = vals.len() as f64;
    let mean = vals.iter().sum::<f64>() / n;
    let std = (vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
    vals.iter().map(|v| (v - mean) / std.max(1e-12)).collect()
}

/// One natural-looking sample of the generator.
pub fn generate_real(size: usize, rng: &mut impl Rng) -> Image<f32> {
    let lum = pink_noise(size, SPECTRAL_EXPONENT, rng);
    let chroma: Vec<Vec<f64>> = (0..3).map(|_| pink_noise(size, SPECTRAL_EXPONENT, rng)).collect();
    let contrast = rng.random_range(0.10..0.22);
    let offsets: Vec<f64> = (0..3).map(|_| rng.random_range(0.35..0.65)).collect();
    let mut img = Image::from_fn(3, size, size, |c, y, x| {
        let i = y * size + x;
        (offsets[c] + contrast * (lum[i] + 0.35 * chroma[c][i])) as f32
    });

    let shapes = rng.random_range(2..=6);
    for _ in 0..shapes {
        let color: Vec<f32> = (0..3).map(|_| rng.random_range(0.1..0.9)).collect();
        let alpha = rng.random_range(0.7f32..1.0);
        let cy = rng.random_range(0.0..size as f64);
        let cx = rng.random_range(0.0..size as f64);
        let ry = rng.random_range(0.05..0.25) * size as f64;
        let rx = rng.random_range(0.05..0.25) * size as f64;
        let disk = rng.random_bool(0.5);
        for y in 0..size {
            for x in 0..size {
                let dy = (y as f64 + 0.5 - cy) / ry;
                let dx = (x as f64 + 0.5 - cx) / rx;
                let inside = if disk {
                    dy * dy + dx * dx <= 1.0
                } else {
                    dy.abs() <= 1.0 && dx.abs() <= 1.0
                };
                if inside {
                    for (c, &col) in color.iter().enumerate() {
                        let v = alpha * col + (1.0 - alpha) * img.get(c, y, x);
                        img.set(c, y, x, v);
                    }
                }
            }
        }
    }
    img.clamp01()
}

/// Halves and re-enlarges `image`, the artifact the fake class carries.
pub fn degrade(image: &Image<f32>, factor: usize, up: Upsampling) -> Result<Image<f32>> {
    let (_, h, w) = image.shape();
    let small = resize_bilinear(image, (h / factor).max(1), (w / factor).max(1))?;
    match up {
        Upsampling::Nearest => resize_nearest(&small, h, w),
        Upsampling::Bilinear => resize_bilinear(&small, h, w),
    }
}

fn sample_rng(seed: u64, index: usize, fake: bool) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(2 * index as u64 + fake as u64);
    rng
}

/// Generates the `index`-th pair of the corpus in memory: `(real, fake)`.
pub fn toy_pair(seed: u64, index: usize, size: usize) -> Result<(Image<f32>, Image<f32>)> {
    let real = generate_real(size, &mut sample_rng(seed, index, false));
    let source = generate_real(size, &mut sample_rng(seed, index, true));
    let up = if index % 2 == 0 {
        Upsampling::Nearest
    } else {
        Upsampling::Bilinear
    };
    Ok((real, degrade(&source, 2, up)?))
}

/// Writes `count_per_class` real and fake PNGs under `root` plus a
/// `manifest.json`, and returns the indexed dataset.
pub fn gen_toy_corpus(root: &Path, count_per_class: usize, size: usize, seed: u64) -> Result<LabeledDataset> {
    if count_per_class == 0 {
        return Err(Error::Config("toy corpus needs at least one image per class".into()));
    }
    if size < MIN_TOY_SIZE {
        return Err(Error::Config(format!("toy images must be at least {MIN_TOY_SIZE} pixels")));
    }
    for sub in ["real", "fake"] {
        let d = root.join(sub);
        fs::create_dir_all(&d).map_err(|e| Error::io(&d, e))?;
    }
    for i in 0..count_per_class {
        let (real, fake) = toy_pair(seed, i, size)?;
        save_png(&root.join("real").join(format!("{i:05}.png")), &real)?;
        save_png(&root.join("fake").join(format!("{i:05}.png")), &fake)?;
    }
    let manifest = ToyManifest {
        generator: "pink-noise-shapes".into(),
        count_per_class,
        size,
        seed,
        spectral_exponent: SPECTRAL_EXPONENT,
        shapes_per_image: (2, 6),
        fake_downscale: 2,
        fake_upsampling: [Upsampling::Nearest, Upsampling::Bilinear],
    };
    let path = root.join("manifest.json");
    let json = serde_json::to_string_pretty(&manifest)?;
    fs::write(&path, json).map_err(|e| Error::io(&path, e))?;
    load_dataset(root)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lpd::{lpd_map, NeighborhoodSpec};

    #[test]
    fn pink_noise_is_standardized() {
        let v = pink_noise(32, 1.0, &mut ChaCha8Rng::seed_from_u64(1));
        let mean = v.iter().sum::<f64>() / v.len() as f64;
        let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / v.len() as f64;
        assert!(mean.abs() < 1e-9 && (var - 1.0).abs() < 1e-9);
    }

    #[test]
    fn real_images_in_range() {
        let im = generate_real(40, &mut ChaCha8Rng::seed_from_u64(2));
        assert_eq!(im.shape(), (3, 40, 40));
        assert!(im.data().iter().all(|&v| (0.0..=1.0).contains(&v)));
    }

    #[test]
    fn fakes_have_weaker_local_dependency_residuals() {
        let spec = NeighborhoodSpec::default();
        let mean_abs = |im: &Image<f32>| {
            let q = Image::from_interleaved_u8(3, im.height(), im.width(), &im.to_interleaved_u8()).unwrap();
            let m = lpd_map(&q, &spec).unwrap();
            m.0.data().iter().map(|v| v.abs() as f64).sum::<f64>() / m.0.data().len() as f64
        };
        let pairs = 20;
        let wins = (0..pairs)
            .filter(|&i| {
                let (real, fake) = toy_pair(7, i, 64).unwrap();
                mean_abs(&fake) < mean_abs(&real)
            })
            .count();
        assert!(wins * 10 >= pairs * 9, "{wins}/{pairs}");
    }

    #[test]
    fn zero_count_rejected() {
        let tmp = tempfile::tempdir().unwrap();
        assert!(gen_toy_corpus(tmp.path(), 0, 32, 1).is_err());
    }

    #[test]
    fn corpus_is_byte_reproducible() {
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        let ds = gen_toy_corpus(a.path(), 3, 32, 7).unwrap();
        gen_toy_corpus(b.path(), 3, 32, 7).unwrap();
        assert_eq!(ds.counts(), (3, 3));
        for e in &ds.entries {
            let x = fs::read(a.path().join(&e.path)).unwrap();
            let y = fs::read(b.path().join(&e.path)).unwrap();
            assert_eq!(x, y, "{}", e.path.display());
        }
        assert!(a.path().join("manifest.json").is_file());
    }
}
