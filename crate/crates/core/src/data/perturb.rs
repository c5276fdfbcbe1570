//! Post-processing attacks for robustness evaluation.

use std::fmt;
use std::str::FromStr;

use image::codecs::jpeg::JpegEncoder;
use image::ExtendedColorType;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::io::decode_image;
use super::transform::resize_bilinear;
use crate::error::{Error, Result};
use crate::image::Image;

pub const MAX_ROTATION_DEGREES: f64 = 45.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "kind")]
pub enum PerturbationSpec {
    /// Baseline JPEG round trip at `quality`.
    Jpeg { quality: u8 },
    /// Bilinear rescale of both sides by `scale`.
    Resize { scale: f64 },
    /// Rotation by an angle drawn uniformly from `[-max_degrees, max_degrees]`.
    Rotate { max_degrees: f64 },
}

impl PerturbationSpec {
    pub fn validate(&self) -> Result<()> {
        match *self {
            Self::Jpeg { quality } if !(1..=100).contains(&quality) => {
                Err(Error::Config(format!("jpeg quality {quality} outside 1..=100")))
            }
            Self::Resize { scale } if !(scale.is_finite() && scale > 0.0) => {
                Err(Error::Config(format!("resize scale {scale} must be positive")))
            }
            Self::Rotate { max_degrees }
                if !(0.0..=MAX_ROTATION_DEGREES).contains(&max_degrees) =>
            {
                Err(Error::Config(format!("rotation bound {max_degrees} outside [0, 45]")))
            }
            _ => Ok(()),
        }
    }
}

impl FromStr for PerturbationSpec {
    type Err = Error;

    /// Accepts `jpeg:Q`, `resize:S`, `rotate` and `rotate:D`.
    fn from_str(s: &str) -> Result<Self> {
        let lower = s.trim().to_ascii_lowercase();
        let (kind, arg) = match lower.split_once(':') {
            Some((k, a)) => (k, Some(a)),
            None => (lower.as_str(), None),
        };
        let bad = || Error::Config(format!("bad perturbation `{s}`"));
        let spec = match (kind, arg) {
            ("jpeg", Some(q)) => Self::Jpeg {
                quality: q.parse().map_err(|_| bad())?,
            },
            ("resize", Some(x)) => Self::Resize {
                scale: x.parse().map_err(|_| bad())?,
            },
            ("rotate", None) => Self::Rotate {
                max_degrees: MAX_ROTATION_DEGREES,
            },
            ("rotate", Some(d)) => Self::Rotate {
                max_degrees: d.parse().map_err(|_| bad())?,
            },
            _ => return Err(bad()),
        };
        spec.validate()?;
        Ok(spec)
    }
}

impl fmt::Display for PerturbationSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Jpeg { quality } => write!(f, "jpeg:{quality}"),
            Self::Resize { scale } => write!(f, "resize:{scale}"),
            Self::Rotate { max_degrees } => write!(f, "rotate:{max_degrees}"),
        }
    }
}

/// Output side length of a resize perturbation.
pub fn scaled_len(len: usize, scale: f64) -> usize {
    ((len as f64 * scale).round() as usize).max(1)
}

pub fn jpeg_round_trip(image: &Image<f32>, quality: u8) -> Result<Image<f32>> {
    let (c, h, w) = image.shape();
    if c != 3 {
        return Err(Error::Shape(format!("jpeg needs 3 channels, got {c}")));
    }
    let mut bytes = Vec::new();
    JpegEncoder::new_with_quality(&mut bytes, quality).encode(
        &image.to_interleaved_u8(),
        w as u32,
        h as u32,
        ExtendedColorType::Rgb8,
    )?;
    decode_image(&bytes).map_err(|msg| Error::Config(format!("jpeg round trip: {msg}")))
}

/// Rotates about the image center by `degrees` (counter-clockwise), bilinear
/// sampling with zeros outside the source.
pub fn rotate(image: &Image<f32>, degrees: f64) -> Image<f32> {
    let (c, h, w) = image.shape();
    let (sin, cos) = degrees.to_radians().sin_cos();
    let (cy, cx) = (h as f64 / 2.0, w as f64 / 2.0);
    let sample = |ch: usize, y: isize, x: isize| {
        if y < 0 || x < 0 || y >= h as isize || x >= w as isize {
            0.0
        } else {
            image.get(ch, y as usize, x as usize)
        }
    };
    Image::from_fn(c, h, w, |ch, y, x| {
        let dy = y as f64 + 0.5 - cy;
        let dx = x as f64 + 0.5 - cx;
        // Inverse map: rotate the output offset by -angle (y axis points down).
        let sx = cos * dx - sin * dy + cx - 0.5;
        let sy = sin * dx + cos * dy + cy - 0.5;
        let (x0, y0) = (sx.floor(), sy.floor());
        let (fx, fy) = ((sx - x0) as f32, (sy - y0) as f32);
        let (x0, y0) = (x0 as isize, y0 as isize);
        let top = sample(ch, y0, x0) * (1.0 - fx) + sample(ch, y0, x0 + 1) * fx;
        let bottom = sample(ch, y0 + 1, x0) * (1.0 - fx) + sample(ch, y0 + 1, x0 + 1) * fx;
        top * (1.0 - fy) + bottom * fy
    })
    .clamp01()
}

pub fn perturb(image: &Image<f32>, spec: &PerturbationSpec, rng: &mut impl Rng) -> Result<Image<f32>> {
    spec.validate()?;
    match *spec {
        PerturbationSpec::Jpeg { quality } => jpeg_round_trip(image, quality),
        PerturbationSpec::Resize { scale } => resize_bilinear(
            image,
            scaled_len(image.height(), scale),
            scaled_len(image.width(), scale),
        ),
        PerturbationSpec::Rotate { max_degrees } => {
            let angle = if max_degrees == 0.0 {
                0.0
            } else {
                rng.random_range(-max_degrees..=max_degrees)
            };
            Ok(rotate(image, angle))
        }
    }
}

/// Peak signal-to-noise ratio in dB for `[0, 1]` images.
pub fn psnr(a: &Image<f32>, b: &Image<f32>) -> Result<f64> {
    if a.shape() != b.shape() {
        return Err(Error::Shape(format!("{:?} vs {:?}", a.shape(), b.shape())));
    }
    let mse = a
        .data()
        .iter()
        .zip(b.data())
        .map(|(&x, &y)| ((x - y) as f64).powi(2))
        .sum::<f64>()
        / a.data().len().max(1) as f64;
    Ok(if mse == 0.0 {
        f64::INFINITY
    } else {
        10.0 * (1.0 / mse).log10()
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn ramp(h: usize, w: usize) -> Image<f32> {
        Image::from_fn(3, h, w, |c, y, x| ((c + y + x) % 17) as f32 / 16.0)
    }

    #[test]
    fn parses() {
        assert_eq!("jpeg:75".parse::<PerturbationSpec>().unwrap(), PerturbationSpec::Jpeg { quality: 75 });
        assert_eq!("resize:0.75".parse::<PerturbationSpec>().unwrap(), PerturbationSpec::Resize { scale: 0.75 });
        assert_eq!(
            "rotate".parse::<PerturbationSpec>().unwrap(),
            PerturbationSpec::Rotate { max_degrees: 45.0 }
        );
        for bad in ["jpeg:0", "jpeg:101", "resize:0", "resize:-1", "rotate:90", "blur", "jpeg"] {
            assert!(bad.parse::<PerturbationSpec>().is_err(), "{bad}");
        }
    }

    #[test]
    fn resize_dimensions() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let im = Image::<f32>::filled(3, 256, 256, 0.5);
        let down = perturb(&im, &PerturbationSpec::Resize { scale: 0.75 }, &mut rng).unwrap();
        assert_eq!(down.shape(), (3, 192, 192));
        let up = perturb(&im, &PerturbationSpec::Resize { scale: 1.25 }, &mut rng).unwrap();
        assert_eq!(up.shape(), (3, 320, 320));
    }

    #[test]
    fn zero_rotation_is_identity() {
        let im = ramp(9, 12);
        assert_eq!(rotate(&im, 0.0), im);
    }

    #[test]
    fn quarter_turn_matches_rot90() {
        let im = ramp(8, 8);
        let r = rotate(&im, 90.0);
        let expected = im.rot90(1);
        for (a, b) in r.data().iter().zip(expected.data()) {
            assert!((a - b).abs() < 1e-5);
        }
    }

    #[test]
    fn rotation_is_seeded_and_zero_fills() {
        let im = Image::<f32>::filled(3, 32, 32, 1.0);
        let spec = PerturbationSpec::Rotate { max_degrees: 45.0 };
        let a = perturb(&im, &spec, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        let b = perturb(&im, &spec, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        assert_eq!(a, b);
        let r = rotate(&im, 45.0);
        assert_eq!(r.get(0, 0, 0), 0.0);
        assert_eq!(r.get(0, 16, 16), 1.0);
    }

    #[test]
    fn jpeg_high_quality_is_close() {
        let im = Image::from_fn(3, 32, 32, |c, y, x| 0.3 + 0.2 * ((c * 7 + y + x) as f32 / 70.0));
        let out = jpeg_round_trip(&im, 100).unwrap();
        assert_eq!(out.shape(), im.shape());
        assert!(psnr(&im, &out).unwrap() > 40.0);
    }
}
