//! Tissue/background segmentation of the initial image.
//!
//! The mask is a grid of square cells on `z_0`. Later stages see it through
//! nearest-neighbour upscaling, so a stage-`l` sample at `(x, y)` belongs to
//! cell `(x / k^l / cell, y / k^l / cell)`.

use serde::{Deserialize, Serialize};

use super::store::{PlaneStore, Precision};
use crate::error::{Error, Result};
use crate::image::{check_color, ImagePlane};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TissueParams {
    pub enabled: bool,
    /// A sample is tissue when some channel differs from the background by
    /// more than this.
    pub threshold: f64,
    /// Fraction of tissue samples that makes a cell tissue.
    pub coverage: f64,
    /// Cell edge on `z_0`, in pixels. Defaults to the footprint of one
    /// final-stage patch.
    pub cell: Option<usize>,
}

impl Default for TissueParams {
    fn default() -> Self {
        Self {
            enabled: true,
            threshold: 0.1,
            coverage: crate::defaults::TISSUE_COVERAGE,
            cell: None,
        }
    }
}

impl TissueParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.threshold >= 0.0 && self.threshold.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "tissue threshold must be >= 0, got {}",
                self.threshold
            )));
        }
        if !(0.0..=1.0).contains(&self.coverage) {
            return Err(Error::InvalidParameter(format!(
                "tissue coverage must lie in [0, 1], got {}",
                self.coverage
            )));
        }
        if self.cell == Some(0) {
            return Err(Error::InvalidParameter("tissue cell size must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TissueMask {
    cell: usize,
    cols: usize,
    rows: usize,
    cells: Vec<bool>,
}

impl TissueMask {
    /// Everything is tissue.
    pub fn full(width: usize, height: usize, cell: usize) -> Self {
        let cell = cell.max(1);
        let cols = width.div_ceil(cell);
        let rows = height.div_ceil(cell);
        Self {
            cell,
            cols,
            rows,
            cells: vec![true; cols * rows],
        }
    }

    pub fn cell(&self) -> usize {
        self.cell
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.cols, self.rows)
    }

    pub fn cells(&self) -> &[bool] {
        &self.cells
    }

    pub fn is_tissue(&self, col: usize, row: usize) -> bool {
        self.cells[row * self.cols + col]
    }

    pub fn tissue_count(&self) -> usize {
        self.cells.iter().filter(|&&c| c).count()
    }

    pub fn is_full(&self) -> bool {
        self.cells.iter().all(|&c| c)
    }

    pub fn is_empty(&self) -> bool {
        !self.cells.iter().any(|&c| c)
    }

    /// Inclusive cell ranges touched by a stage window, or `None` when the
    /// window lies outside the image.
    fn cell_span(&self, scale: usize, x0: i64, y0: i64, w: usize, h: usize) -> Option<((usize, usize), (usize, usize))> {
        let span = (self.cell * scale) as i64;
        let (ext_x, ext_y) = ((self.cols as i64) * span, (self.rows as i64) * span);
        let (ax, bx) = (x0.max(0), (x0 + w as i64).min(ext_x));
        let (ay, by) = (y0.max(0), (y0 + h as i64).min(ext_y));
        if ax >= bx || ay >= by {
            return None;
        }
        Some((
            ((ax / span) as usize, ((bx - 1) / span) as usize),
            ((ay / span) as usize, ((by - 1) / span) as usize),
        ))
    }

    /// Whether any tissue cell meets the window at a stage with upscale
    /// `scale = k^l` relative to `z_0`.
    pub fn region_has_tissue(&self, scale: usize, x0: i64, y0: i64, w: usize, h: usize) -> bool {
        let Some(((cx0, cx1), (cy0, cy1))) = self.cell_span(scale, x0, y0, w, h) else {
            return false;
        };
        (cy0..=cy1).any(|r| (cx0..=cx1).any(|c| self.is_tissue(c, r)))
    }

    /// Sets every background cell of a stage image to `color`.
    pub fn apply_background(&self, store: &mut PlaneStore, scale: usize, color: &[f64], precision: Precision) -> Result<()> {
        let span = self.cell * scale;
        for r in 0..self.rows {
            for c in 0..self.cols {
                if !self.is_tissue(c, r) {
                    store.fill_region((c * span) as i64, (r * span) as i64, span, span, color, precision)?;
                }
            }
        }
        Ok(())
    }
}

/// Segments `z0` into tissue and background cells.
pub fn tissue_mask_from(z0: &ImagePlane, background: &[f64], params: &TissueParams, cell: usize) -> Result<TissueMask> {
    params.validate()?;
    check_color(z0.shape(), background)?;
    let cell = params.cell.unwrap_or(cell).max(1);
    let mut mask = TissueMask::full(z0.width(), z0.height(), cell);
    if !params.enabled {
        return Ok(mask);
    }
    let mut hits = vec![0usize; mask.cells.len()];
    let mut totals = vec![0usize; mask.cells.len()];
    for y in 0..z0.height() {
        for x in 0..z0.width() {
            let i = (y / cell) * mask.cols + x / cell;
            totals[i] += 1;
            let differs = (0..z0.channels()).any(|ch| (z0.get(ch, y, x) - background[ch]).abs() > params.threshold);
            if differs {
                hits[i] += 1;
            }
        }
    }
    for ((m, &h), &t) in mask.cells.iter_mut().zip(&hits).zip(&totals) {
        *m = h > 0 && h as f64 >= params.coverage * t as f64;
    }
    Ok(mask)
}

/// Per-channel median of the four corner samples.
pub fn corner_median(img: &ImagePlane) -> Vec<f64> {
    let (w, h) = (img.width(), img.height());
    (0..img.channels())
        .map(|c| {
            let mut v = [
                img.get(c, 0, 0),
                img.get(c, 0, w - 1),
                img.get(c, h - 1, 0),
                img.get(c, h - 1, w - 1),
            ];
            v.sort_by(f64::total_cmp);
            0.5 * (v[1] + v[2])
        })
        .collect()
}
