//! Channel-major raster images.

use num_traits::Float;

use crate::error::{Error, Result};

/// A `(C, H, W)` raster stored channel-major.
///
/// Freshly loaded images hold values in `[0, 1]` (8-bit samples divided by
/// 255). The same type also carries intermediate results such as median
/// reconstructions and LPD maps, which may leave that range.
#[derive(Debug, Clone, PartialEq)]
pub struct Image<T = f32> {
    channels: usize,
    height: usize,
    width: usize,
    data: Vec<T>,
}

impl<T: Float> Image<T> {
    pub fn new(channels: usize, height: usize, width: usize, data: Vec<T>) -> Result<Self> {
        if channels == 0 || height == 0 || width == 0 {
            return Err(Error::Shape(format!(
                "image dimensions must be positive, got {channels}x{height}x{width}"
            )));
        }
        if data.len() != channels * height * width {
            return Err(Error::Shape(format!(
                "{} values for a {channels}x{height}x{width} image",
                data.len()
            )));
        }
        Ok(Self {
            channels,
            height,
            width,
            data,
        })
    }

    pub fn zeros(channels: usize, height: usize, width: usize) -> Self {
        Self::filled(channels, height, width, T::zero())
    }

    pub fn filled(channels: usize, height: usize, width: usize, value: T) -> Self {
        assert!(channels > 0 && height > 0 && width > 0, "empty image");
        Self {
            channels,
            height,
            width,
            data: vec![value; channels * height * width],
        }
    }

    pub fn from_fn(
        channels: usize,
        height: usize,
        width: usize,
        mut f: impl FnMut(usize, usize, usize) -> T,
    ) -> Self {
        assert!(channels > 0 && height > 0 && width > 0, "empty image");
        let mut data = Vec::with_capacity(channels * height * width);
        for c in 0..channels {
            for y in 0..height {
                for x in 0..width {
                    data.push(f(c, y, x));
                }
            }
        }
        Self {
            channels,
            height,
            width,
            data,
        }
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        (self.channels, self.height, self.width)
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    #[inline]
    pub fn get(&self, c: usize, y: usize, x: usize) -> T {
        self.data[(c * self.height + y) * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, c: usize, y: usize, x: usize, v: T) {
        self.data[(c * self.height + y) * self.width + x] = v;
    }

    pub fn plane(&self, c: usize) -> &[T] {
        let n = self.height * self.width;
        &self.data[c * n..(c + 1) * n]
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Self {
            data: self.data.iter().map(|&v| f(v)).collect(),
            ..*self
        }
    }

    pub fn zip_map(&self, other: &Self, f: impl Fn(T, T) -> T) -> Result<Self> {
        if self.shape() != other.shape() {
            return Err(Error::Shape(format!(
                "{:?} vs {:?}",
                self.shape(),
                other.shape()
            )));
        }
        Ok(Self {
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
            ..*self
        })
    }

    pub fn hflip(&self) -> Self {
        let w = self.width;
        Self::from_fn(self.channels, self.height, w, |c, y, x| {
            self.get(c, y, w - 1 - x)
        })
    }

    pub fn vflip(&self) -> Self {
        let h = self.height;
        Self::from_fn(self.channels, h, self.width, |c, y, x| {
            self.get(c, h - 1 - y, x)
        })
    }

    /// Rotates by 90° counter-clockwise, `k` times.
    pub fn rot90(&self, k: usize) -> Self {
        match k % 4 {
            0 => self.clone(),
            1 => {
                let w = self.width;
                Self::from_fn(self.channels, self.width, self.height, |c, y, x| {
                    self.get(c, x, w - 1 - y)
                })
            }
            2 => self.hflip().vflip(),
            _ => self.rot90(1).rot90(2),
        }
    }

    /// Copies out the `(h, w)` window whose top-left corner is `(top, left)`.
    pub fn crop(&self, top: usize, left: usize, h: usize, w: usize) -> Result<Self> {
        if h == 0 || w == 0 || top + h > self.height || left + w > self.width {
            return Err(Error::Shape(format!(
                "crop {h}x{w} at ({top},{left}) outside {}x{}",
                self.height, self.width
            )));
        }
        Ok(Self::from_fn(self.channels, h, w, |c, y, x| {
            self.get(c, top + y, left + x)
        }))
    }

    /// Reorders channels so that output channel `i` is input channel `perm[i]`.
    pub fn permute_channels(&self, perm: &[usize]) -> Result<Self> {
        let mut seen = vec![false; self.channels];
        if perm.len() != self.channels
            || perm.iter().any(|&p| p >= self.channels || std::mem::replace(&mut seen[p], true))
        {
            return Err(Error::Shape(format!("{perm:?} is not a channel permutation")));
        }
        Ok(Self::from_fn(self.channels, self.height, self.width, |c, y, x| {
            self.get(perm[c], y, x)
        }))
    }

    pub fn clamp01(mut self) -> Self {
        for v in &mut self.data {
            *v = v.max(T::zero()).min(T::one());
        }
        self
    }

    pub fn cast<U: Float>(&self) -> Image<U> {
        Image {
            channels: self.channels,
            height: self.height,
            width: self.width,
            data: self
                .data
                .iter()
                .map(|v| U::from(*v).expect("float cast"))
                .collect(),
        }
    }
}

impl Image<f32> {
    /// Interleaved 8-bit samples (HWC) to a `[0, 1]` image.
    pub fn from_interleaved_u8(channels: usize, height: usize, width: usize, raw: &[u8]) -> Result<Self> {
        if raw.len() != channels * height * width {
            return Err(Error::Shape(format!(
                "{} bytes for {channels}x{height}x{width}",
                raw.len()
            )));
        }
        Ok(Self::from_fn(channels, height, width, |c, y, x| {
            raw[(y * width + x) * channels + c] as f32 / 255.0
        }))
    }

    /// Quantizes to interleaved 8-bit samples, rounding half up and clamping.
    pub fn to_interleaved_u8(&self) -> Vec<u8> {
        let mut out = vec![0u8; self.data.len()];
        for c in 0..self.channels {
            for y in 0..self.height {
                for x in 0..self.width {
                    out[(y * self.width + x) * self.channels + c] = quantize_u8(self.get(c, y, x));
                }
            }
        }
        out
    }
}

#[inline]
pub(crate) fn quantize_u8(v: f32) -> u8 {
    (v * 255.0 + 0.5).floor().clamp(0.0, 255.0) as u8
}
