//! Sequential overlapping-patch baseline.
//!
//! Patches overlap by a fixed fraction and are processed in raster order.
//! Samples already produced by earlier patches are frozen: they are reset
//! to their final values before the first step and after every step, so a
//! patch can only start once its left and upper neighbours are done.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::{ImagePlane, Shape};
use crate::pyramid::{corner_median, PyramidSampler};
use crate::solver::{guided_step, initial_noise, StepContext};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PatchEvent {
    pub index: usize,
    pub col: usize,
    pub row: usize,
    pub x0: usize,
    pub y0: usize,
    /// Sequence numbers on a single logical clock.
    pub started: usize,
    pub finished: usize,
}

#[derive(Clone, Debug)]
pub struct MaskShiftResult {
    pub image: ImagePlane,
    pub trace: Vec<PatchEvent>,
    pub stride: usize,
    pub wall_clock_s: f64,
}

impl MaskShiftResult {
    pub fn patches(&self) -> usize {
        self.trace.len()
    }
}

/// Patch origins along one axis: stride `M(1−o)` rounded to a multiple of
/// `k`, with the last patch clamped to the far edge.
pub fn mask_shift_positions(extent: usize, patch: usize, factor: usize, overlap: f64) -> Result<(usize, Vec<usize>)> {
    if !(overlap > 0.0 && overlap < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "overlap must lie in (0, 1), got {overlap}"
        )));
    }
    let raw = patch as f64 * (1.0 - overlap) / factor as f64;
    let stride = ((raw.round() as usize) * factor).clamp(factor, patch);
    let mut out = vec![0];
    if extent > patch {
        let last = extent - patch;
        let mut p = stride;
        while p < last {
            out.push(p);
            p += stride;
        }
        out.push(last);
    }
    Ok((stride, out))
}

/// Whether every patch started after its left and upper neighbours
/// finished.
pub fn respects_raster_dependencies(trace: &[PatchEvent]) -> bool {
    let find = |c: usize, r: usize| trace.iter().find(|e| e.col == c && e.row == r);
    trace.iter().all(|e| {
        let left = e.col.checked_sub(1).and_then(|c| find(c, e.row));
        let up = e.row.checked_sub(1).and_then(|r| find(e.col, r));
        [left, up].into_iter().flatten().all(|n| n.finished < e.started)
    })
}

pub fn mask_shift_upscale(
    sampler: &PyramidSampler<'_>,
    z_prev: &ImagePlane,
    overlap: f64,
    stage: usize,
    seed: u64,
) -> Result<MaskShiftResult> {
    let started_at = Instant::now();
    z_prev.ensure_finite("stage guide")?;
    let k = sampler.plan.factor;
    let m = sampler.plan.patch_size;
    let background = sampler.plan.background.clone().unwrap_or_else(|| corner_median(z_prev));
    let resolution = z_prev.resolution() / k as f64;
    let shape = Shape::new(z_prev.channels(), z_prev.height() * k, z_prev.width() * k);
    let (stride, xs) = mask_shift_positions(shape.width, m, k, overlap)?;
    let (_, ys) = mask_shift_positions(shape.height, m, k, overlap)?;
    let ctx = StepContext {
        schedule: &sampler.schedule,
        denoiser: sampler.denoiser,
        guidance: sampler.guidance,
        operator: crate::guidance::DownsampleOperator::new(k)?,
        resolution,
        method: sampler.method,
    };
    let noise = initial_noise(shape, sampler.schedule.sigma_max(), seed, stage as u64, resolution);
    let mut out = ImagePlane::with_color(shape, &background, resolution)?;
    let mut done = vec![false; shape.width * shape.height];
    let mut trace = Vec::with_capacity(xs.len() * ys.len());
    let mut clock = 0;

    for (row, &y0) in ys.iter().enumerate() {
        for (col, &x0) in xs.iter().enumerate() {
            let index = trace.len();
            let started = clock;
            clock += 1;
            let (px, py) = (x0 as i64, y0 as i64);
            let guide = z_prev.crop_padded(px / k as i64, py / k as i64, m / k, m / k, &background)?;
            let frozen_values = out.crop_padded(px, py, m, m, &background)?;
            let frozen: Vec<bool> = (0..m * m)
                .map(|i| {
                    let (x, y) = (x0 + i % m, y0 + i / m);
                    x < shape.width && y < shape.height && done[y * shape.width + x]
                })
                .collect();
            let freeze = |x: &mut ImagePlane| {
                for c in 0..shape.channels {
                    let fv = frozen_values.channel(c);
                    let plane = &mut x.data_mut()[c * m * m..(c + 1) * m * m];
                    for (i, v) in plane.iter_mut().enumerate() {
                        if frozen[i] {
                            *v = fv[i];
                        }
                    }
                }
            };
            let mut x = noise.crop_padded(px, py, m, m, &background)?;
            freeze(&mut x);
            for step in 0..sampler.schedule.steps() {
                x = guided_step(&ctx, &x, Some(&guide), step).map_err(|e| Error::Stage {
                    stage,
                    iteration: step + 1,
                    patch: index,
                    source: Box::new(e),
                })?;
                freeze(&mut x);
            }
            out.paste(&x, px, py)?;
            for y in y0..(y0 + m).min(shape.height) {
                for v in &mut done[y * shape.width + x0..y * shape.width + (x0 + m).min(shape.width)] {
                    *v = true;
                }
            }
            trace.push(PatchEvent {
                index,
                col,
                row,
                x0,
                y0,
                started,
                finished: clock,
            });
            clock += 1;
        }
    }
    Ok(MaskShiftResult {
        image: out,
        trace,
        stride,
        wall_clock_s: started_at.elapsed().as_secs_f64(),
    })
}
