//! Shared fixtures for the criterion benchmarks.

use ferret_core::nn::Tensor;
use ferret_core::Image;

/// Deterministic pseudo-random `[0, 1]` image (xorshift, no RNG crate needed).
pub fn noise_image(c: usize, h: usize, w: usize, seed: u64) -> Image<f32> {
    let mut s = seed.wrapping_mul(0x9e37_79b9_7f4a_7c15) | 1;
    Image::from_fn(c, h, w, |_, _, _| {
        s ^= s << 13;
        s ^= s >> 7;
        s ^= s << 17;
        (s >> 40) as f32 / (1u64 << 24) as f32
    })
}

pub fn noise_batch(n: usize, c: usize, h: usize, w: usize, seed: u64) -> Tensor<f32> {
    let data = (0..n)
        .flat_map(|i| noise_image(c, h, w, seed + i as u64).into_data())
        .collect();
    Tensor::new(&[n, c, h, w], data).expect("shape and data agree")
}
