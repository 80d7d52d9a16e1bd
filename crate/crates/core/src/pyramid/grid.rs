//! Patch grids, grid shifting, patch extraction and stitching.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::store::RegionSource;
use crate::error::{Error, Result};
use crate::image::{ImagePlane, Shape};
use crate::rng::{rng_stream, Purpose};

/// A tiling of a `width`×`height` extent by `patch_size` squares whose
/// origin is shifted by `-offset`. Patches at the border may extend past the
/// extent; those parts are padding.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PatchGrid {
    patch_size: usize,
    offset: (usize, usize),
    width: usize,
    height: usize,
}

/// Placement of one patch in image coordinates.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PatchRect {
    pub index: usize,
    pub x0: i64,
    pub y0: i64,
    pub size: usize,
}

impl PatchGrid {
    pub fn new(patch_size: usize, offset: (usize, usize), width: usize, height: usize) -> Result<Self> {
        if patch_size == 0 {
            return Err(Error::InvalidParameter("patch size must be positive".into()));
        }
        if offset.0 >= patch_size || offset.1 >= patch_size {
            return Err(Error::InvalidParameter(format!(
                "grid offset {offset:?} must be below the patch size {patch_size}"
            )));
        }
        Ok(Self {
            patch_size,
            offset,
            width,
            height,
        })
    }

    pub fn fixed(patch_size: usize, width: usize, height: usize) -> Result<Self> {
        Self::new(patch_size, (0, 0), width, height)
    }

    pub fn patch_size(&self) -> usize {
        self.patch_size
    }

    pub fn offset(&self) -> (usize, usize) {
        self.offset
    }

    pub fn extent(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn cols(&self) -> usize {
        (self.width + self.offset.0).div_ceil(self.patch_size)
    }

    pub fn rows(&self) -> usize {
        (self.height + self.offset.1).div_ceil(self.patch_size)
    }

    pub fn len(&self) -> usize {
        self.cols() * self.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn rect(&self, index: usize) -> PatchRect {
        let cols = self.cols();
        let (row, col) = (index / cols, index % cols);
        PatchRect {
            index,
            x0: (col * self.patch_size) as i64 - self.offset.0 as i64,
            y0: (row * self.patch_size) as i64 - self.offset.1 as i64,
            size: self.patch_size,
        }
    }

    /// Patches in raster order.
    pub fn rects(&self) -> impl Iterator<Item = PatchRect> + '_ {
        (0..self.len()).map(|i| self.rect(i))
    }

    /// The same physical tiling on an image `factor` times smaller.
    pub fn coarsen(&self, factor: usize) -> Result<PatchGrid> {
        let divisible = |v: usize| v.is_multiple_of(factor);
        if !(divisible(self.patch_size)
            && divisible(self.offset.0)
            && divisible(self.offset.1)
            && divisible(self.width)
            && divisible(self.height))
        {
            return Err(Error::ShapeMismatch(format!(
                "grid (patch {}, offset {:?}, extent {}x{}) does not align with factor {factor}",
                self.patch_size, self.offset, self.width, self.height
            )));
        }
        PatchGrid::new(
            self.patch_size / factor,
            (self.offset.0 / factor, self.offset.1 / factor),
            self.width / factor,
            self.height / factor,
        )
    }
}

/// Redraws the grid offset uniformly from `{0, k, 2k, …, M−k}²` using the
/// stream for `(stage, iteration)`.
pub fn shift_patch_grid(
    seed: u64,
    stage: u64,
    iteration: u64,
    grid: &PatchGrid,
    factor: usize,
) -> Result<PatchGrid> {
    let m = grid.patch_size;
    if factor == 0 || !m.is_multiple_of(factor) {
        return Err(Error::InvalidParameter(format!(
            "patch size {m} is not a multiple of factor {factor}"
        )));
    }
    let mut rng = rng_stream(seed, stage, iteration, 0, Purpose::GridShift);
    let slots = m / factor;
    let dx = rng.random_range(0..slots) * factor;
    let dy = rng.random_range(0..slots) * factor;
    PatchGrid::new(m, (dx, dy), grid.width, grid.height)
}

/// Pairs each patch of `x` with the guide patch of `z_prev` covering the
/// same physical region. Out-of-bounds samples are filled with `fill`.
pub fn patch_pair<S, G>(
    x: &S,
    z_prev: &G,
    grid: &PatchGrid,
    factor: usize,
    fill: &[f64],
) -> Result<Vec<(ImagePlane, ImagePlane)>>
where
    S: RegionSource + ?Sized,
    G: RegionSource + ?Sized,
{
    let guide_grid = check_pairing(x.shape(), z_prev.shape(), grid, factor)?;
    grid.rects()
        .map(|r| {
            let g = guide_grid.rect(r.index);
            Ok((
                x.read_region(r.x0, r.y0, r.size, r.size, fill)?,
                z_prev.read_region(g.x0, g.y0, g.size, g.size, fill)?,
            ))
        })
        .collect()
}

pub(crate) fn check_pairing(x: Shape, z_prev: Shape, grid: &PatchGrid, factor: usize) -> Result<PatchGrid> {
    if x.width != factor * z_prev.width
        || x.height != factor * z_prev.height
        || x.channels != z_prev.channels
    {
        return Err(Error::ShapeMismatch(format!(
            "image {x} is not {factor}x guide {z_prev}"
        )));
    }
    if grid.extent() != (x.width, x.height) {
        return Err(Error::ShapeMismatch(format!(
            "grid extent {:?} does not match image {x}",
            grid.extent()
        )));
    }
    grid.coarsen(factor)
}

/// Reassembles an image from one patch per grid cell (raster order). Every
/// in-bounds sample must be written exactly once; padding is dropped.
pub fn stitch(
    patches: &[ImagePlane],
    grid: &PatchGrid,
    channels: usize,
    resolution: f64,
) -> Result<ImagePlane> {
    if patches.len() != grid.len() {
        return Err(Error::Coverage(format!(
            "{} patches supplied for a grid of {}",
            patches.len(),
            grid.len()
        )));
    }
    let (w, h) = grid.extent();
    let mut out = ImagePlane::zeros(Shape::new(channels, h, w), resolution);
    let counts = write_counts(grid);
    if let Some(i) = counts.iter().position(|&c| c != 1) {
        return Err(Error::Coverage(format!(
            "sample ({}, {}) written {} times",
            i % w,
            i / w,
            counts[i]
        )));
    }
    for (r, p) in grid.rects().zip(patches) {
        if p.shape() != Shape::new(channels, r.size, r.size) {
            return Err(Error::ShapeMismatch(format!(
                "patch {} is {}, expected {channels}x{}x{}",
                r.index,
                p.shape(),
                r.size,
                r.size
            )));
        }
        out.paste(p, r.x0, r.y0)?;
    }
    Ok(out)
}

/// How many grid patches cover each in-bounds sample (row-major).
pub fn write_counts(grid: &PatchGrid) -> Vec<u32> {
    let (w, h) = grid.extent();
    let mut counts = vec![0u32; w * h];
    for r in grid.rects() {
        if let Some((px, py, _, _, cw, ch)) = crate::image::overlap(r.x0, r.y0, r.size, r.size, w, h) {
            for y in py..py + ch {
                for c in &mut counts[y * w + px..y * w + px + cw] {
                    *c += 1;
                }
            }
        }
    }
    counts
}
