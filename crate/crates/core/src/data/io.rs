use std::path::Path;

use image::{DynamicImage, ImageBuffer, Luma, Rgb};

use crate::error::{Error, Result};
use crate::image::Image;

/// Decodes a PNG or JPEG file to a 3-channel `[0, 1]` image.
pub fn load_image(path: &Path) -> Result<Image<f32>> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_image(&bytes).map_err(|msg| Error::Decode {
        path: path.to_path_buf(),
        msg,
    })
}

pub(crate) fn decode_image(bytes: &[u8]) -> std::result::Result<Image<f32>, String> {
    let img = image::load_from_memory(bytes).map_err(|e| e.to_string())?;
    let rgb = img.to_rgb8();
    let (w, h) = rgb.dimensions();
    Image::from_interleaved_u8(3, h as usize, w as usize, rgb.as_raw()).map_err(|e| e.to_string())
}

pub(crate) fn to_dynamic(image: &Image<f32>) -> Result<DynamicImage> {
    let (c, h, w) = image.shape();
    let raw = image.to_interleaved_u8();
    let (w, h) = (w as u32, h as u32);
    let bad = || Error::Shape(format!("cannot encode a {c}-channel image"));
    match c {
        1 => ImageBuffer::<Luma<u8>, _>::from_raw(w, h, raw)
            .map(DynamicImage::ImageLuma8)
            .ok_or_else(bad),
        3 => ImageBuffer::<Rgb<u8>, _>::from_raw(w, h, raw)
            .map(DynamicImage::ImageRgb8)
            .ok_or_else(bad),
        _ => Err(bad()),
    }
}

/// Writes an 8-bit PNG (grayscale or RGB), quantizing with round-half-up.
pub fn save_png(path: &Path, image: &Image<f32>) -> Result<()> {
    let dynamic = to_dynamic(image)?;
    let mut bytes = Vec::new();
    dynamic.write_to(&mut std::io::Cursor::new(&mut bytes), image::ImageFormat::Png)?;
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}
