//! 8-bit RGB PNG export and import.
//!
//! Samples in `[-1, 1]` map affinely to `[0, 255]`, clamped and rounded.
//! Single-channel planes are written as grey RGB.

use std::path::Path;

use image::codecs::png::PngEncoder;
use image::{ExtendedColorType, ImageEncoder};

use crate::error::{Error, Result};
use crate::image::{ImagePlane, Shape};

pub fn to_u8(v: f64) -> u8 {
    let unit = ((v + 1.0) * 0.5).clamp(0.0, 1.0);
    (unit * 255.0).round() as u8
}

pub fn from_u8(v: u8) -> f64 {
    v as f64 / 255.0 * 2.0 - 1.0
}

/// Interleaved RGB bytes of `img`.
pub fn rgb_bytes(img: &ImagePlane) -> Result<Vec<u8>> {
    let channel_of = match img.channels() {
        1 => |_: usize| 0,
        3 => |c: usize| c,
        n => {
            return Err(Error::Format(format!(
                "PNG export needs 1 or 3 channels, image has {n}"
            )))
        }
    };
    let (w, h) = (img.width(), img.height());
    let mut out = Vec::with_capacity(3 * w * h);
    for y in 0..h {
        for x in 0..w {
            for c in 0..3 {
                out.push(to_u8(img.get(channel_of(c), y, x)));
            }
        }
    }
    Ok(out)
}

pub fn encode_png(img: &ImagePlane) -> Result<Vec<u8>> {
    let bytes = rgb_bytes(img)?;
    let mut out = Vec::new();
    let (w, h) = (dim(img.width())?, dim(img.height())?);
    PngEncoder::new(&mut out)
        .write_image(&bytes, w, h, ExtendedColorType::Rgb8)
        .map_err(|e| Error::Format(format!("PNG encoding: {e}")))?;
    Ok(out)
}

fn dim(v: usize) -> Result<u32> {
    u32::try_from(v).map_err(|_| Error::Format(format!("dimension {v} too large for PNG")))
}

pub fn write_png(path: &Path, img: &ImagePlane) -> Result<Vec<u8>> {
    let encoded = encode_png(img)?;
    std::fs::write(path, &encoded).map_err(|e| Error::io(path, e))?;
    Ok(encoded)
}

pub fn decode_png(bytes: &[u8], channels: usize, resolution: f64) -> Result<ImagePlane> {
    let decoded = image::load_from_memory_with_format(bytes, image::ImageFormat::Png)
        .map_err(|e| Error::Format(format!("PNG decoding: {e}")))?
        .to_rgb8();
    if channels != 1 && channels != 3 {
        return Err(Error::Format(format!(
            "PNG import needs 1 or 3 channels, asked for {channels}"
        )));
    }
    let (w, h) = (decoded.width() as usize, decoded.height() as usize);
    let mut img = ImagePlane::zeros(Shape::new(channels, h, w), resolution);
    for (x, y, px) in decoded.enumerate_pixels() {
        for c in 0..channels {
            img.set(c, y as usize, x as usize, from_u8(px.0[c]));
        }
    }
    Ok(img)
}

pub fn read_png(path: &Path, channels: usize, resolution: f64) -> Result<ImagePlane> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_png(&bytes, channels, resolution)
}
