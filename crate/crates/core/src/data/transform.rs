//! Resampling, cropping and the train / eval input transforms.

use rand::Rng;

use crate::error::{Error, Result};
use crate::image::Image;

pub const TRAIN_CROP: usize = 224;
pub const EVAL_CROP: usize = 256;

/// Bilinear sample with half-pixel centers (`align_corners = false`),
/// clamping coordinates to the border.
fn source_coord(dst: usize, in_len: usize, out_len: usize) -> (usize, usize, f32) {
    let scale = in_len as f64 / out_len as f64;
    let src = ((dst as f64 + 0.5) * scale - 0.5).max(0.0);
    let i0 = (src.floor() as usize).min(in_len - 1);
    let i1 = (i0 + 1).min(in_len - 1);
    (i0, i1, (src - i0 as f64).min(1.0) as f32)
}

/// Bilinear resize to `(out_h, out_w)`; output is clamped to `[0, 1]`.
pub fn resize_bilinear(image: &Image<f32>, out_h: usize, out_w: usize) -> Result<Image<f32>> {
    if out_h == 0 || out_w == 0 {
        return Err(Error::Shape(format!("resize to {out_h}x{out_w}")));
    }
    let (c, h, w) = image.shape();
    if (h, w) == (out_h, out_w) {
        return Ok(image.clone());
    }
    let ys: Vec<_> = (0..out_h).map(|y| source_coord(y, h, out_h)).collect();
    let xs: Vec<_> = (0..out_w).map(|x| source_coord(x, w, out_w)).collect();
    let out = Image::from_fn(c, out_h, out_w, |ch, y, x| {
        let (y0, y1, fy) = ys[y];
        let (x0, x1, fx) = xs[x];
        let top = image.get(ch, y0, x0) * (1.0 - fx) + image.get(ch, y0, x1) * fx;
        let bottom = image.get(ch, y1, x0) * (1.0 - fx) + image.get(ch, y1, x1) * fx;
        top * (1.0 - fy) + bottom * fy
    });
    Ok(out.clamp01())
}

/// Nearest-neighbor resize (pixel-center convention).
pub fn resize_nearest(image: &Image<f32>, out_h: usize, out_w: usize) -> Result<Image<f32>> {
    if out_h == 0 || out_w == 0 {
        return Err(Error::Shape(format!("resize to {out_h}x{out_w}")));
    }
    let (c, h, w) = image.shape();
    let pick = |d: usize, in_len: usize, out_len: usize| {
        (((d as f64 + 0.5) * in_len as f64 / out_len as f64) as usize).min(in_len - 1)
    };
    Ok(Image::from_fn(c, out_h, out_w, |ch, y, x| {
        image.get(ch, pick(y, h, out_h), pick(x, w, out_w))
    }))
}

/// Scales so that the shorter side equals `target`, keeping aspect ratio.
pub fn resize_shorter_side(image: &Image<f32>, target: usize) -> Result<Image<f32>> {
    let (_, h, w) = image.shape();
    let short = h.min(w);
    let scale = |d: usize| ((d * target) as f64 / short as f64).round().max(1.0) as usize;
    let (nh, nw) = if h <= w { (target, scale(w)) } else { (scale(h), target) };
    resize_bilinear(image, nh, nw)
}

/// Offsets of a centered `size x size` window.
pub fn center_offsets(h: usize, w: usize, size: usize) -> (usize, usize) {
    ((h - size) / 2, (w - size) / 2)
}

pub fn center_crop(image: &Image<f32>, size: usize) -> Result<Image<f32>> {
    let (_, h, w) = image.shape();
    if h < size || w < size {
        return Err(Error::Shape(format!("{h}x{w} image is smaller than the {size} crop")));
    }
    let (top, left) = center_offsets(h, w, size);
    image.crop(top, left, size, size)
}

/// Uniform crop position and horizontal flip probability 0.5. Images whose
/// shorter side is below `crop` are first upscaled so it fits.
pub fn train_transform(image: &Image<f32>, crop: usize, rng: &mut impl Rng) -> Result<Image<f32>> {
    let (_, top, left, flip) = train_crop_params(image, crop, rng)?;
    let base = if image.height().min(image.width()) < crop {
        resize_shorter_side(image, crop)?
    } else {
        image.clone()
    };
    let out = base.crop(top, left, crop, crop)?;
    Ok(if flip { out.hflip() } else { out })
}

/// The random draws `train_transform` makes: `(resized, top, left, flip)`.
pub fn train_crop_params(
    image: &Image<f32>,
    crop: usize,
    rng: &mut impl Rng,
) -> Result<(bool, usize, usize, bool)> {
    if crop == 0 {
        return Err(Error::Config("crop size must be positive".into()));
    }
    let (_, mut h, mut w) = image.shape();
    let resized = h.min(w) < crop;
    if resized {
        let short = h.min(w);
        let scale = |d: usize| ((d * crop) as f64 / short as f64).round().max(1.0) as usize;
        (h, w) = if h <= w { (crop, scale(w)) } else { (scale(h), crop) };
    }
    let top = rng.random_range(0..=h - crop);
    let left = rng.random_range(0..=w - crop);
    let flip = rng.random_bool(0.5);
    Ok((resized, top, left, flip))
}

/// Upscales small images (shorter side to `size`), then center-crops.
pub fn eval_transform(image: &Image<f32>, size: usize) -> Result<Image<f32>> {
    let base = if image.height().min(image.width()) < size {
        resize_shorter_side(image, size)?
    } else {
        image.clone()
    };
    center_crop(&base, size)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn noise(c: usize, h: usize, w: usize, seed: u64) -> Image<f32> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Image::from_fn(c, h, w, |_, _, _| rng.random_range(0.0..1.0))
    }

    #[test]
    fn downscale_by_two_averages_pairs() {
        let im = Image::new(1, 2, 4, vec![0.0, 0.2, 0.4, 0.6, 0.2, 0.4, 0.6, 0.8]).unwrap();
        let r = resize_bilinear(&im, 1, 2).unwrap();
        assert!((r.get(0, 0, 0) - 0.2).abs() < 1e-6);
        assert!((r.get(0, 0, 1) - 0.6).abs() < 1e-6);
    }

    #[test]
    fn resize_keeps_range_and_constants() {
        let im = Image::filled(3, 5, 7, 0.3f32);
        let r = resize_bilinear(&im, 11, 3).unwrap();
        assert!(r.data().iter().all(|&v| (v - 0.3).abs() < 1e-6));
        let n = resize_bilinear(&noise(3, 9, 9, 1), 20, 13).unwrap();
        assert!(n.data().iter().all(|&v| (0.0..=1.0).contains(&v)));
    }

    #[test]
    fn eval_identity_and_center() {
        let im = noise(3, 256, 256, 2);
        assert_eq!(eval_transform(&im, 256).unwrap(), im);
        let big = noise(3, 512, 512, 3);
        let c = eval_transform(&big, 256).unwrap();
        assert_eq!(c, big.crop(128, 128, 256, 256).unwrap());
    }

    #[test]
    fn eval_small_non_square() {
        // 300x200: shorter side 200 -> 256, so 384x256, then offsets (64, 0)
        let im = noise(3, 300, 200, 4);
        let resized = resize_shorter_side(&im, 256).unwrap();
        assert_eq!(resized.shape(), (3, 384, 256));
        assert_eq!(center_offsets(384, 256, 256), (64, 0));
        let out = eval_transform(&im, 256).unwrap();
        assert_eq!(out, resized.crop(64, 0, 256, 256).unwrap());
    }

    #[test]
    fn eval_is_idempotent() {
        let im = noise(3, 300, 280, 5);
        let once = eval_transform(&im, 256).unwrap();
        assert_eq!(eval_transform(&once, 256).unwrap(), once);
    }

    #[test]
    fn train_degenerate_crop_only_flips() {
        let im = noise(3, 224, 224, 6);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for _ in 0..8 {
            let out = train_transform(&im, 224, &mut rng).unwrap();
            assert!(out == im || out == im.hflip());
        }
    }

    #[test]
    fn train_is_seed_deterministic() {
        let im = noise(3, 256, 256, 7);
        let a = train_transform(&im, 224, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        let b = train_transform(&im, 224, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.shape(), (3, 224, 224));
    }

    #[test]
    fn train_upscales_small_images() {
        let im = noise(3, 100, 150, 8);
        let out = train_transform(&im, 224, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        assert_eq!(out.shape(), (3, 224, 224));
    }

    #[test]
    fn nearest_doubles_pixels() {
        let im = Image::new(1, 1, 2, vec![0.1f32, 0.9]).unwrap();
        let r = resize_nearest(&im, 2, 4).unwrap();
        assert_eq!(r.data(), &[0.1, 0.1, 0.9, 0.9, 0.1, 0.1, 0.9, 0.9]);
    }
}
