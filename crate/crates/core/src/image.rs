//! Multi-channel sample planes tagged with their spatial resolution.
//!
//! Samples are stored channel-major (`c`, then `y`, then `x`) in double
//! precision. The resolution tag is the physical extent of one pixel in
//! µm/px; downsampling by `k` multiplies it by `k`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Shape {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
}

impl Shape {
    pub fn new(channels: usize, height: usize, width: usize) -> Self {
        Self {
            channels,
            height,
            width,
        }
    }

    pub fn len(&self) -> usize {
        self.channels * self.height * self.width
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn plane_len(&self) -> usize {
        self.height * self.width
    }
}

impl std::fmt::Display for Shape {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}x{}x{}", self.channels, self.height, self.width)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ImagePlane {
    shape: Shape,
    data: Vec<f64>,
    resolution: f64,
}

impl ImagePlane {
    pub fn zeros(shape: Shape, resolution: f64) -> Self {
        Self::filled(shape, 0.0, resolution)
    }

    pub fn filled(shape: Shape, value: f64, resolution: f64) -> Self {
        Self {
            shape,
            data: vec![value; shape.len()],
            resolution,
        }
    }

    /// A plane where every pixel carries the per-channel `color`.
    pub fn with_color(shape: Shape, color: &[f64], resolution: f64) -> Result<Self> {
        check_color(shape, color)?;
        let mut data = Vec::with_capacity(shape.len());
        for &v in color {
            data.extend(std::iter::repeat_n(v, shape.plane_len()));
        }
        Ok(Self {
            shape,
            data,
            resolution,
        })
    }

    pub fn from_vec(shape: Shape, data: Vec<f64>, resolution: f64) -> Result<Self> {
        if data.len() != shape.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} samples supplied for shape {shape}",
                data.len()
            )));
        }
        Ok(Self {
            shape,
            data,
            resolution,
        })
    }

    pub fn shape(&self) -> Shape {
        self.shape
    }

    pub fn channels(&self) -> usize {
        self.shape.channels
    }

    pub fn height(&self) -> usize {
        self.shape.height
    }

    pub fn width(&self) -> usize {
        self.shape.width
    }

    pub fn resolution(&self) -> f64 {
        self.resolution
    }

    pub fn set_resolution(&mut self, resolution: f64) {
        self.resolution = resolution;
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn index(&self, c: usize, y: usize, x: usize) -> usize {
        (c * self.shape.height + y) * self.shape.width + x
    }

    #[inline]
    pub fn get(&self, c: usize, y: usize, x: usize) -> f64 {
        self.data[self.index(c, y, x)]
    }

    #[inline]
    pub fn set(&mut self, c: usize, y: usize, x: usize, value: f64) {
        let i = self.index(c, y, x);
        self.data[i] = value;
    }

    pub fn channel(&self, c: usize) -> &[f64] {
        let n = self.shape.plane_len();
        &self.data[c * n..(c + 1) * n]
    }

    pub fn row(&self, c: usize, y: usize) -> &[f64] {
        let start = self.index(c, y, 0);
        &self.data[start..start + self.shape.width]
    }

    pub fn row_mut(&mut self, c: usize, y: usize) -> &mut [f64] {
        let start = self.index(c, y, 0);
        let w = self.shape.width;
        &mut self.data[start..start + w]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn ensure_finite(&self, what: &str) -> Result<()> {
        if self.is_finite() {
            Ok(())
        } else {
            Err(Error::NonFinite(format!("{what} contains NaN or infinite samples")))
        }
    }

    pub fn ensure_same_shape(&self, other: &ImagePlane, what: &str) -> Result<()> {
        if self.shape != other.shape {
            return Err(Error::ShapeMismatch(format!(
                "{what}: {} vs {}",
                self.shape, other.shape
            )));
        }
        Ok(())
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> ImagePlane {
        ImagePlane {
            shape: self.shape,
            data: self.data.iter().map(|&v| f(v)).collect(),
            resolution: self.resolution,
        }
    }

    /// Element-wise combination; shapes must agree. The result keeps `self`'s tag.
    pub fn zip_map(&self, other: &ImagePlane, f: impl Fn(f64, f64) -> f64) -> Result<ImagePlane> {
        self.ensure_same_shape(other, "zip_map")?;
        Ok(ImagePlane {
            shape: self.shape,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
            resolution: self.resolution,
        })
    }

    pub fn scaled(&self, factor: f64) -> ImagePlane {
        self.map(|v| v * factor)
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn sum_sq(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum()
    }

    pub fn mean(&self) -> f64 {
        if self.data.is_empty() {
            return 0.0;
        }
        self.data.iter().sum::<f64>() / self.data.len() as f64
    }

    pub fn channel_means(&self) -> Vec<f64> {
        (0..self.shape.channels)
            .map(|c| {
                let ch = self.channel(c);
                ch.iter().sum::<f64>() / ch.len().max(1) as f64
            })
            .collect()
    }

    /// Copies a `height`×`width` window whose top-left corner sits at
    /// `(x0, y0)`. Samples outside the plane are filled with `fill`.
    pub fn crop_padded(
        &self,
        x0: i64,
        y0: i64,
        width: usize,
        height: usize,
        fill: &[f64],
    ) -> Result<ImagePlane> {
        let shape = Shape::new(self.shape.channels, height, width);
        let mut out = ImagePlane::with_color(shape, fill, self.resolution)?;
        let Some((sx, sy, dx, dy, w, h)) =
            overlap(x0, y0, width, height, self.shape.width, self.shape.height)
        else {
            return Ok(out);
        };
        for c in 0..self.shape.channels {
            for row in 0..h {
                let src = self.index(c, sy + row, sx);
                let dst = out.index(c, dy + row, dx);
                out.data[dst..dst + w].copy_from_slice(&self.data[src..src + w]);
            }
        }
        Ok(out)
    }

    /// Writes the in-bounds part of `patch` (placed with its top-left corner
    /// at `(x0, y0)`) into `self`. Out-of-bounds samples are discarded.
    pub fn paste(&mut self, patch: &ImagePlane, x0: i64, y0: i64) -> Result<()> {
        if patch.shape.channels != self.shape.channels {
            return Err(Error::ShapeMismatch(format!(
                "paste: {} channels into {}",
                patch.shape.channels, self.shape.channels
            )));
        }
        let Some((dx, dy, sx, sy, w, h)) = overlap(
            x0,
            y0,
            patch.shape.width,
            patch.shape.height,
            self.shape.width,
            self.shape.height,
        ) else {
            return Ok(());
        };
        for c in 0..self.shape.channels {
            for row in 0..h {
                let src = patch.index(c, sy + row, sx);
                let dst = self.index(c, dy + row, dx);
                self.data[dst..dst + w].copy_from_slice(&patch.data[src..src + w]);
            }
        }
        Ok(())
    }
}

pub(crate) fn check_color(shape: Shape, color: &[f64]) -> Result<()> {
    if color.len() != shape.channels {
        return Err(Error::ShapeMismatch(format!(
            "fill color has {} channels, image has {}",
            color.len(),
            shape.channels
        )));
    }
    Ok(())
}

/// Intersection of a window at `(x0, y0)` with a `plane_w`×`plane_h` plane.
///
/// Returns `(plane_x, plane_y, window_x, window_y, w, h)` or `None` when the
/// two do not overlap.
pub(crate) fn overlap(
    x0: i64,
    y0: i64,
    width: usize,
    height: usize,
    plane_w: usize,
    plane_h: usize,
) -> Option<(usize, usize, usize, usize, usize, usize)> {
    let left = x0.max(0);
    let top = y0.max(0);
    let right = (x0 + width as i64).min(plane_w as i64);
    let bottom = (y0 + height as i64).min(plane_h as i64);
    if right <= left || bottom <= top {
        return None;
    }
    Some((
        left as usize,
        top as usize,
        (left - x0) as usize,
        (top - y0) as usize,
        (right - left) as usize,
        (bottom - top) as usize,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ramp(shape: Shape) -> ImagePlane {
        let data = (0..shape.len()).map(|i| i as f64).collect();
        ImagePlane::from_vec(shape, data, 1.0).unwrap()
    }

    #[test]
    fn crop_pads_out_of_bounds() {
        let img = ramp(Shape::new(1, 4, 4));
        let crop = img.crop_padded(-1, -1, 3, 3, &[-9.0]).unwrap();
        assert_eq!(
            crop.data(),
            &[-9.0, -9.0, -9.0, -9.0, 0.0, 1.0, -9.0, 4.0, 5.0]
        );
    }

    #[test]
    fn crop_entirely_outside_is_fill() {
        let img = ramp(Shape::new(2, 4, 4));
        let crop = img.crop_padded(10, 10, 2, 2, &[1.0, 2.0]).unwrap();
        assert_eq!(crop.data(), &[1.0, 1.0, 1.0, 1.0, 2.0, 2.0, 2.0, 2.0]);
    }

    #[test]
    fn paste_discards_padding() {
        let mut img = ImagePlane::zeros(Shape::new(1, 3, 3), 1.0);
        let patch = ImagePlane::filled(Shape::new(1, 2, 2), 5.0, 1.0);
        img.paste(&patch, 2, -1).unwrap();
        assert_eq!(img.data(), &[0.0, 0.0, 5.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn from_vec_checks_length() {
        assert!(ImagePlane::from_vec(Shape::new(1, 2, 2), vec![0.0; 3], 1.0).is_err());
    }
}
