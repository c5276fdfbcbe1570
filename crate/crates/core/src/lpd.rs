//! Local pixel dependency (LPD) features.
//!
//! Every pixel is compared against a statistic of its `n x n` neighborhood,
//! taken over a zero-padded copy of its own channel. With the default
//! configuration (3x3, zero-masked center, median) the reconstruction of a
//! pixel is the median of its eight neighbors plus a literal zero standing in
//! for the pixel itself, and the LPD value is `pixel - reconstruction`.

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use num_traits::Float;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::Image;

/// How the window's center pixel enters the statistic.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CenterStrategy {
    /// Replace the center with a non-selecting value and keep it in the set.
    Mask,
    /// Drop the center, leaving `n² - 1` values.
    Exclusion,
    /// Keep the center unchanged.
    Retention,
}

/// Reduction applied to the window multiset.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Statistic {
    Median,
    Max,
    Min,
    Avg,
}

impl CenterStrategy {
    pub const ALL: [CenterStrategy; 3] = [Self::Mask, Self::Exclusion, Self::Retention];
}

impl Statistic {
    pub const ALL: [Statistic; 4] = [Self::Median, Self::Max, Self::Min, Self::Avg];
}

impl FromStr for CenterStrategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mask" => Ok(Self::Mask),
            "exclude" | "exclusion" => Ok(Self::Exclusion),
            "retain" | "retention" => Ok(Self::Retention),
            _ => Err(Error::Config(format!("unknown center strategy `{s}`"))),
        }
    }
}

impl FromStr for Statistic {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "median" | "med" => Ok(Self::Median),
            "max" => Ok(Self::Max),
            "min" => Ok(Self::Min),
            "avg" | "mean" => Ok(Self::Avg),
            _ => Err(Error::Config(format!("unknown statistic `{s}`"))),
        }
    }
}

impl fmt::Display for CenterStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Mask => "mask",
            Self::Exclusion => "exclude",
            Self::Retention => "retain",
        })
    }
}

impl fmt::Display for Statistic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Median => "median",
            Self::Max => "max",
            Self::Min => "min",
            Self::Avg => "avg",
        })
    }
}

/// Window configuration for LPD extraction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct NeighborhoodSpec {
    pub size: usize,
    pub center: CenterStrategy,
    pub statistic: Statistic,
}

impl Default for NeighborhoodSpec {
    fn default() -> Self {
        Self {
            size: 3,
            center: CenterStrategy::Mask,
            statistic: Statistic::Median,
        }
    }
}

impl fmt::Display for NeighborhoodSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{0}x{0}/{1}/{2}", self.size, self.center, self.statistic)
    }
}

impl NeighborhoodSpec {
    pub fn new(size: usize, center: CenterStrategy, statistic: Statistic) -> Result<Self> {
        let spec = Self {
            size,
            center,
            statistic,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.size < 3 || self.size % 2 == 0 {
            return Err(Error::InvalidNeighborhood(self.size));
        }
        Ok(())
    }

    pub fn radius(&self) -> usize {
        self.size / 2
    }

    /// Number of values the statistic is taken over.
    pub fn multiset_len(&self) -> usize {
        match self.center {
            CenterStrategy::Exclusion => self.size * self.size - 1,
            _ => self.size * self.size,
        }
    }
}

/// Pixel-wise difference between an image and its neighborhood reconstruction.
#[derive(Debug, Clone, PartialEq)]
pub struct LpdMap<T = f32>(pub Image<T>);

impl<T> LpdMap<T> {
    pub fn as_image(&self) -> &Image<T> {
        &self.0
    }

    pub fn into_image(self) -> Image<T> {
        self.0
    }
}

/// Constant zero padding of width `pad` on every spatial border.
pub fn zero_pad<T: Float>(image: &Image<T>, pad: usize) -> Image<T> {
    if pad == 0 {
        return image.clone();
    }
    let (c, h, w) = image.shape();
    let mut out = Image::zeros(c, h + 2 * pad, w + 2 * pad);
    let pw = w + 2 * pad;
    let ph = h + 2 * pad;
    for ch in 0..c {
        let src = image.plane(ch);
        let dst = &mut out.data_mut()[ch * ph * pw..(ch + 1) * ph * pw];
        for y in 0..h {
            let row = (y + pad) * pw + pad;
            dst[row..row + w].copy_from_slice(&src[y * w..(y + 1) * w]);
        }
    }
    out
}

#[inline]
fn cmp<T: Float>(a: &T, b: &T) -> Ordering {
    a.partial_cmp(b).unwrap_or(Ordering::Equal)
}

/// Reduces a window already prepared according to the center strategy.
fn reduce<T: Float>(values: &mut [T], stat: Statistic, avg_divisor: T) -> T {
    match stat {
        Statistic::Median => {
            let len = values.len();
            let mid = len / 2;
            let (lower, hi, _) = values.select_nth_unstable_by(mid, cmp);
            let hi = *hi;
            if len % 2 == 1 {
                hi
            } else {
                let lo = lower.iter().copied().fold(T::neg_infinity(), T::max);
                (lo + hi) / (T::one() + T::one())
            }
        }
        Statistic::Max => values.iter().copied().fold(T::neg_infinity(), T::max),
        Statistic::Min => values.iter().copied().fold(T::infinity(), T::min),
        Statistic::Avg => {
            // Sorted summation makes the mean a function of the multiset alone.
            values.sort_unstable_by(cmp);
            let mut sum = T::zero();
            for &v in values.iter() {
                sum = sum + v;
            }
            sum / avg_divisor
        }
    }
}

/// The value a masked center takes so that it does not win the reduction.
fn mask_value<T: Float>(stat: Statistic) -> T {
    match stat {
        Statistic::Median | Statistic::Avg => T::zero(),
        Statistic::Max => T::neg_infinity(),
        Statistic::Min => T::infinity(),
    }
}

/// Neighborhood reconstruction `I'` of every pixel.
pub fn reconstruct<T: Float>(image: &Image<T>, spec: &NeighborhoodSpec) -> Result<Image<T>> {
    spec.validate()?;
    let (channels, h, w) = image.shape();
    let n = spec.size;
    let r = spec.radius();
    let padded = zero_pad(image, r);
    let pw = w + 2 * r;
    let ph = h + 2 * r;
    let center_idx = (n * n) / 2;
    let divisor = match (spec.statistic, spec.center) {
        (Statistic::Avg, CenterStrategy::Exclusion) => T::from(n * n - 1).unwrap(),
        _ => T::from(n * n).unwrap(),
    };
    let masked = mask_value::<T>(spec.statistic);

    let mut out = Vec::with_capacity(channels * h * w);
    let mut window = vec![T::zero(); n * n];
    for c in 0..channels {
        let plane = &padded.data()[c * ph * pw..(c + 1) * ph * pw];
        for y in 0..h {
            for x in 0..w {
                let mut k = 0;
                for dy in 0..n {
                    let row = &plane[(y + dy) * pw + x..(y + dy) * pw + x + n];
                    window[k..k + n].copy_from_slice(row);
                    k += n;
                }
                let values = match spec.center {
                    CenterStrategy::Mask => {
                        window[center_idx] = masked;
                        &mut window[..]
                    }
                    CenterStrategy::Exclusion => {
                        window.swap(center_idx, n * n - 1);
                        &mut window[..n * n - 1]
                    }
                    CenterStrategy::Retention => &mut window[..],
                };
                out.push(reduce(values, spec.statistic, divisor));
            }
        }
    }
    Image::new(channels, h, w, out)
}

/// `image - reconstruct(image, spec)`, channel by channel.
pub fn lpd_map<T: Float>(image: &Image<T>, spec: &NeighborhoodSpec) -> Result<LpdMap<T>> {
    let recon = reconstruct(image, spec)?;
    Ok(LpdMap(image.zip_map(&recon, |a, b| a - b)?))
}

/// Maps LPD values from `[-1, 1]` onto `[0, 255]`, rounding half up.
///
/// Only meant for looking at maps; it discards the sign asymmetry of the
/// quantization and clamps anything outside the nominal range.
pub fn lpd_to_u8(v: f32) -> u8 {
    let scaled = (v as f64 + 1.0) * 0.5 * 255.0;
    (scaled + 0.5).floor().clamp(0.0, 255.0) as u8
}

/// Visualization of an LPD map as an 8-bit-exact `[0, 1]` image, via
/// [`lpd_to_u8`].
pub fn lpd_to_image(map: &LpdMap<f32>) -> Image<f32> {
    map.0.map(|v| lpd_to_u8(v) as f32 / 255.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tenths() -> Image<f64> {
        Image::new(1, 3, 3, (1..=9).map(|v| v as f64 / 10.0).collect()).unwrap()
    }

    fn spec(n: usize, c: CenterStrategy, s: Statistic) -> NeighborhoodSpec {
        NeighborhoodSpec::new(n, c, s).unwrap()
    }

    #[test]
    fn pad_single_pixel() {
        let im = Image::new(1, 1, 1, vec![0.5f64]).unwrap();
        let p = zero_pad(&im, 1);
        assert_eq!(p.shape(), (1, 3, 3));
        for y in 0..3 {
            for x in 0..3 {
                let want = if (y, x) == (1, 1) { 0.5 } else { 0.0 };
                assert_eq!(p.get(0, y, x), want);
            }
        }
        assert_eq!(zero_pad(&im, 0), im);
    }

    #[test]
    fn pad_matches_loop_oracle() {
        let im = Image::new(1, 2, 2, vec![0.1f64, 0.2, 0.3, 0.4]).unwrap();
        let p = zero_pad(&im, 1);
        for y in 0..4usize {
            for x in 0..4usize {
                let inside = (1..3).contains(&y) && (1..3).contains(&x);
                let want = if inside { im.get(0, y - 1, x - 1) } else { 0.0 };
                assert_eq!(p.get(0, y, x), want, "({y},{x})");
            }
        }
    }

    #[test]
    fn rejects_even_or_tiny_windows() {
        for n in [0, 1, 2, 4, 6] {
            assert!(NeighborhoodSpec::new(n, CenterStrategy::Mask, Statistic::Median).is_err());
        }
        let bad = NeighborhoodSpec {
            size: 4,
            ..Default::default()
        };
        assert!(reconstruct(&tenths(), &bad).is_err());
    }

    #[test]
    fn window_larger_than_image_is_fine() {
        let s = spec(7, CenterStrategy::Mask, Statistic::Median);
        let r = reconstruct(&tenths(), &s).unwrap();
        assert_eq!(r.shape(), (1, 3, 3));
    }

    #[test]
    fn default_is_mask_median_3() {
        let d = NeighborhoodSpec::default();
        assert_eq!((d.size, d.center, d.statistic), (3, CenterStrategy::Mask, Statistic::Median));
    }

    #[test]
    fn constant_image_interior() {
        let im = Image::<f64>::filled(1, 5, 5, 0.5);
        let s = NeighborhoodSpec::default();
        let rec = reconstruct(&im, &s).unwrap();
        let lpd = lpd_map(&im, &s).unwrap();
        for y in 1..4 {
            for x in 1..4 {
                assert_eq!(rec.get(0, y, x), 0.5);
                assert_eq!(lpd.0.get(0, y, x), 0.0);
            }
        }
        // corner: five padded zeros and the masked center outnumber three 0.5s
        assert_eq!(lpd.0.get(0, 0, 0), 0.5);
    }

    #[test]
    fn tenths_mask_median() {
        let s = NeighborhoodSpec::default();
        let rec = reconstruct(&tenths(), &s).unwrap();
        assert_eq!(rec.get(0, 1, 1), 0.4);
        assert_eq!(rec.get(0, 0, 0), 0.0);
        let lpd = lpd_map(&tenths(), &s).unwrap();
        assert!((lpd.0.get(0, 1, 1) - 0.1).abs() < 1e-15);
        assert_eq!(lpd.0.get(0, 0, 0), 0.1);
    }

    #[test]
    fn tenths_retention_median() {
        let s = spec(3, CenterStrategy::Retention, Statistic::Median);
        assert_eq!(reconstruct(&tenths(), &s).unwrap().get(0, 1, 1), 0.5);
    }

    #[test]
    fn exclusion_median_interpolates() {
        let s = spec(3, CenterStrategy::Exclusion, Statistic::Median);
        // {.1,.2,.3,.4,.6,.7,.8,.9}: middle pair .4/.6
        let v = reconstruct(&tenths(), &s).unwrap().get(0, 1, 1);
        assert!((v - 0.5).abs() < 1e-15);
    }

    #[test]
    fn masked_extremes_ignore_center() {
        let mut im = Image::<f64>::filled(1, 3, 3, 0.2);
        im.set(0, 1, 1, 0.9);
        let max = reconstruct(&im, &spec(3, CenterStrategy::Mask, Statistic::Max)).unwrap();
        assert_eq!(max.get(0, 1, 1), 0.2);
        im.set(0, 1, 1, 0.0);
        let min = reconstruct(&im, &spec(3, CenterStrategy::Mask, Statistic::Min)).unwrap();
        assert_eq!(min.get(0, 1, 1), 0.2);
        let avg = reconstruct(&im, &spec(3, CenterStrategy::Mask, Statistic::Avg)).unwrap();
        assert!((avg.get(0, 1, 1) - 1.6 / 9.0).abs() < 1e-15);
        let ex = reconstruct(&im, &spec(3, CenterStrategy::Exclusion, Statistic::Avg)).unwrap();
        assert!((ex.get(0, 1, 1) - 0.2).abs() < 1e-15);
    }

    #[test]
    fn zero_image_gives_zero_map() {
        let im = Image::<f32>::zeros(3, 6, 7);
        for n in [3, 5, 7] {
            for c in CenterStrategy::ALL {
                for st in Statistic::ALL {
                    let m = lpd_map(&im, &spec(n, c, st)).unwrap();
                    assert!(m.0.data().iter().all(|&v| v == 0.0), "{n} {c} {st}");
                }
            }
        }
    }

    #[test]
    fn visualization_mapping() {
        assert_eq!(lpd_to_u8(-1.0), 0);
        assert_eq!(lpd_to_u8(1.0), 255);
        assert_eq!(lpd_to_u8(0.0), 128);
        assert_eq!(lpd_to_u8(5.0), 255);
    }

    #[test]
    fn parse_names() {
        assert_eq!("exclude".parse::<CenterStrategy>().unwrap(), CenterStrategy::Exclusion);
        assert_eq!("avg".parse::<Statistic>().unwrap(), Statistic::Avg);
        assert!("blur".parse::<Statistic>().is_err());
    }
}
