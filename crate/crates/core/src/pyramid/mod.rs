//! Coarse-to-fine pyramid sampling with per-iteration grid shifting.
//!
//! Stage 0 samples an `M×M` image unconditionally. Each later stage draws
//! fresh noise at `k` times the previous extent and runs `N` guided steps,
//! re-tiling the image into `M×M` patches at every step and using the
//! previous stage as the guide.

mod grid;
mod store;
mod tissue;

use std::time::Instant;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use grid::{patch_pair, shift_patch_grid, stitch, write_counts, PatchGrid, PatchRect};
pub use store::{DiskPlane, PlaneStore, Precision, RegionSource, StorageConfig};
pub use tissue::{corner_median, tissue_mask_from, TissueMask, TissueParams};

use crate::denoiser::Denoiser;
use crate::error::{Error, Result};
use crate::guidance::{DownsampleOperator, GuidanceConfig};
use crate::image::{ImagePlane, Shape};
use crate::rng::{rng_stream, Purpose};
use crate::schedule::NoiseSchedule;
use crate::solver::{guided_step, noise_row, sample_unconditional, Method, StepContext};

/// How the patch grid moves between iterations.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GridMode {
    #[default]
    Shift,
    Fixed,
}

impl std::str::FromStr for GridMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "shift" => Ok(GridMode::Shift),
            "fixed" => Ok(GridMode::Fixed),
            other => Err(Error::InvalidParameter(format!(
                "unknown grid mode {other:?}, expected shift or fixed"
            ))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StagePlan {
    /// Number of upscaling stages `L`.
    pub levels: usize,
    /// Per-stage upscale factor `k`.
    pub factor: usize,
    /// Patch edge `M` in pixels.
    pub patch_size: usize,
    pub channels: usize,
    /// Interval for the initial spatial resolution `s_0`, µm/px.
    pub s0_range: (f64, f64),
    /// Fill colour for background and padding; the corner median of `z_0`
    /// when absent.
    #[serde(default)]
    pub background: Option<Vec<f64>>,
    #[serde(default)]
    pub grid: GridMode,
    #[serde(default)]
    pub tissue: TissueParams,
}

impl Default for StagePlan {
    fn default() -> Self {
        Self {
            levels: crate::defaults::LEVELS,
            factor: crate::defaults::FACTOR,
            patch_size: crate::defaults::PATCH_SIZE,
            channels: 3,
            s0_range: crate::defaults::S0_RANGE,
            background: None,
            grid: GridMode::Shift,
            tissue: TissueParams::default(),
        }
    }
}

impl StagePlan {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParameter(m));
        if self.factor < 2 {
            return bad(format!("factor k must be >= 2, got {}", self.factor));
        }
        if self.patch_size == 0 || !self.patch_size.is_multiple_of(self.factor) {
            return bad(format!(
                "patch size M={} must be a positive multiple of k={}",
                self.patch_size, self.factor
            ));
        }
        if self.channels == 0 {
            return bad("channel count must be positive".into());
        }
        let (lo, hi) = self.s0_range;
        if !(lo > 0.0 && lo <= hi && hi.is_finite()) {
            return bad(format!("s0 range ({lo}, {hi}) must satisfy 0 < lo <= hi < inf"));
        }
        if let Some(bg) = &self.background {
            if bg.len() != self.channels || bg.iter().any(|v| !v.is_finite()) {
                return bad(format!(
                    "background colour needs {} finite channels, got {bg:?}",
                    self.channels
                ));
            }
        }
        self.tissue.validate()?;
        self.final_extent_checked().map(|_| ())
    }

    /// `k^l`, the linear scale of stage `l` relative to stage 0.
    pub fn scale(&self, stage: usize) -> Result<usize> {
        u32::try_from(stage)
            .ok()
            .and_then(|s| self.factor.checked_pow(s))
            .ok_or_else(|| Error::InvalidParameter(format!("k^{stage} overflows")))
    }

    pub fn stage_extent(&self, stage: usize) -> Result<usize> {
        self.scale(stage)?
            .checked_mul(self.patch_size)
            .ok_or_else(|| Error::InvalidParameter(format!("stage {stage} extent overflows")))
    }

    fn final_extent_checked(&self) -> Result<usize> {
        self.stage_extent(self.levels)
    }

    /// `M·k^L`.
    pub fn final_extent(&self) -> usize {
        self.final_extent_checked().expect("validated plan")
    }

    /// `s_l = s_0 / k^l`.
    pub fn stage_resolution(&self, s0: f64, stage: usize) -> f64 {
        stage_resolution(s0, self.factor, stage)
    }

    /// Default tissue cell: the `z_0` footprint of one final-stage patch.
    pub fn default_tissue_cell(&self) -> usize {
        (self.patch_size / self.scale(self.levels).unwrap_or(usize::MAX)).max(1)
    }
}

pub fn stage_resolution(s0: f64, factor: usize, stage: usize) -> f64 {
    s0 / (factor as f64).powi(stage as i32)
}

/// Accounting for one stage.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StageReport {
    pub stage: usize,
    pub extent: usize,
    pub resolution: f64,
    /// Patches submitted to the solver, per iteration.
    pub processed: Vec<usize>,
    /// Patches skipped as background, per iteration.
    pub skipped: Vec<usize>,
    /// Grid offset per iteration.
    pub offsets: Vec<(usize, usize)>,
    pub wall_clock_s: f64,
    pub spilled: bool,
}

/// All stages of one run.
#[derive(Debug)]
pub struct PyramidRun {
    pub seed: u64,
    pub s0: f64,
    pub factor: usize,
    pub background: Vec<f64>,
    pub mask: TissueMask,
    /// `z_0 … z_L`.
    pub levels: Vec<PlaneStore>,
    pub reports: Vec<StageReport>,
    /// False when a stage failed; `levels` then holds the completed prefix.
    pub complete: bool,
}

impl PyramidRun {
    pub fn level_resolution(&self, stage: usize) -> f64 {
        stage_resolution(self.s0, self.factor, stage)
    }
}

/// Drives stage execution for a fixed plan, schedule and denoiser.
pub struct PyramidSampler<'a> {
    pub plan: StagePlan,
    pub schedule: NoiseSchedule,
    pub guidance: GuidanceConfig,
    pub method: Method,
    pub denoiser: &'a dyn Denoiser,
    pub workers: usize,
    pub precision: Precision,
    pub storage: StorageConfig,
}

const BATCH: usize = 256;

impl<'a> PyramidSampler<'a> {
    pub fn new(plan: StagePlan, schedule: NoiseSchedule, denoiser: &'a dyn Denoiser) -> Result<Self> {
        plan.validate()?;
        Ok(Self {
            plan,
            schedule,
            guidance: GuidanceConfig::default(),
            method: Method::Heun,
            denoiser,
            workers: 1,
            precision: Precision::Double,
            storage: StorageConfig::default(),
        })
    }

    fn validate(&self) -> Result<()> {
        self.plan.validate()?;
        self.guidance.validate(self.schedule.steps())?;
        if self.workers == 0 {
            return Err(Error::InvalidParameter("worker count must be positive".into()));
        }
        Ok(())
    }

    fn pool(&self) -> Result<rayon::ThreadPool> {
        rayon::ThreadPoolBuilder::new()
            .num_threads(self.workers)
            .build()
            .map_err(|e| Error::InvalidParameter(format!("thread pool: {e}")))
    }

    fn context(&self, resolution: f64) -> Result<StepContext<'_>> {
        Ok(StepContext {
            schedule: &self.schedule,
            denoiser: self.denoiser,
            guidance: self.guidance,
            operator: DownsampleOperator::new(self.plan.factor)?,
            resolution,
            method: self.method,
        })
    }

    /// Draws `s_0` uniformly from the plan's interval.
    pub fn initial_resolution(&self, seed: u64) -> f64 {
        let (lo, hi) = self.plan.s0_range;
        if lo == hi {
            return lo;
        }
        rng_stream(seed, 0, 0, 0, Purpose::InitialResolution).random_range(lo..hi)
    }

    /// Unconditional `M×M` sample at resolution `s0`.
    pub fn initial_image(&self, s0: f64, seed: u64) -> Result<ImagePlane> {
        let m = self.plan.patch_size;
        let ctx = self.context(s0)?;
        let mut z0 = sample_unconditional(&ctx, Shape::new(self.plan.channels, m, m), seed)
            .map_err(|e| stage_error(0, 0, 0, e))?;
        self.precision.round_plane(&mut z0);
        Ok(z0)
    }

    fn noise_store(&self, shape: Shape, resolution: f64, seed: u64, stage: usize, pool: &rayon::ThreadPool) -> Result<PlaneStore> {
        let zero = vec![0.0; shape.channels];
        let mut store = PlaneStore::new_filled(shape, resolution, &zero, self.precision, &self.storage)?;
        let sigma = self.schedule.sigma_max();
        let band = 64;
        for y0 in (0..shape.height).step_by(band) {
            let h = band.min(shape.height - y0);
            let rows: Vec<Vec<f64>> = pool.install(|| {
                (y0..y0 + h)
                    .into_par_iter()
                    .map(|y| noise_row(seed, stage as u64, y, shape.channels, shape.width, sigma))
                    .collect()
            });
            let mut block = ImagePlane::zeros(Shape::new(shape.channels, h, shape.width), resolution);
            for (dy, row) in rows.iter().enumerate() {
                for c in 0..shape.channels {
                    block
                        .row_mut(c, dy)
                        .copy_from_slice(&row[c * shape.width..(c + 1) * shape.width]);
                }
            }
            store.write_region(&block, 0, y0 as i64, self.precision)?;
        }
        Ok(store)
    }

    /// Runs stage `stage` guided by `z_prev`, writing `z_stage` at
    /// resolution `resolution`.
    pub fn upscale_stage_with(
        &self,
        z_prev: &(dyn RegionSource + Sync),
        stage: usize,
        resolution: f64,
        mask: &TissueMask,
        background: &[f64],
        seed: u64,
    ) -> Result<(PlaneStore, StageReport)> {
        self.validate()?;
        let started = Instant::now();
        let k = self.plan.factor;
        let m = self.plan.patch_size;
        let prev = z_prev.shape();
        if prev.channels != self.plan.channels {
            return Err(Error::ShapeMismatch(format!(
                "guide has {} channels, plan has {}",
                prev.channels, self.plan.channels
            )));
        }
        let shape = Shape::new(prev.channels, prev.height * k, prev.width * k);
        let scale = self.plan.scale(stage)?;
        let pool = self.pool()?;
        let ctx = self.context(resolution)?;

        let mut x = self.noise_store(shape, resolution, seed, stage, &pool)?;
        let mut x_next = PlaneStore::new_filled(shape, resolution, background, self.precision, &self.storage)?;
        let base = PatchGrid::fixed(m, shape.width, shape.height)?;
        let n = self.schedule.steps();
        let mut report = StageReport {
            stage,
            extent: shape.width,
            resolution,
            processed: Vec::with_capacity(n),
            skipped: Vec::with_capacity(n),
            offsets: Vec::with_capacity(n),
            wall_clock_s: 0.0,
            spilled: x.is_spilled(),
        };

        for iteration in 1..=n {
            let step = iteration - 1;
            let grid = match self.plan.grid {
                GridMode::Shift => shift_patch_grid(seed, stage as u64, iteration as u64, &base, k)?,
                GridMode::Fixed => base,
            };
            let guide_grid = grid.coarsen(k)?;
            let (active, idle): (Vec<PatchRect>, Vec<PatchRect>) = grid
                .rects()
                .partition(|r| mask.region_has_tissue(scale, r.x0, r.y0, r.size, r.size));

            for batch in active.chunks(BATCH) {
                let results: Vec<Result<ImagePlane>> = pool.install(|| {
                    batch
                        .par_iter()
                        .map(|r| {
                            let g = guide_grid.rect(r.index);
                            let patch = x.read_region(r.x0, r.y0, r.size, r.size, background)?;
                            let guide = z_prev.read_region(g.x0, g.y0, g.size, g.size, background)?;
                            guided_step(&ctx, &patch, Some(&guide), step)
                        })
                        .collect()
                });
                for (r, out) in batch.iter().zip(results) {
                    let out = out.map_err(|e| stage_error(stage, iteration, r.index, e))?;
                    x_next.write_region(&out, r.x0, r.y0, self.precision)?;
                }
            }
            for r in &idle {
                x_next.fill_region(r.x0, r.y0, r.size, r.size, background, self.precision)?;
            }
            if !mask.is_full() {
                mask.apply_background(&mut x_next, scale, background, self.precision)?;
            }
            std::mem::swap(&mut x, &mut x_next);
            report.processed.push(active.len());
            report.skipped.push(idle.len());
            report.offsets.push(grid.offset());
        }
        report.wall_clock_s = started.elapsed().as_secs_f64();
        Ok((x, report))
    }

    /// Full pyramid `z_0 … z_L`.
    pub fn generate_wsi(&self, seed: u64) -> Result<PyramidRun> {
        let (run, err) = self.generate_partial(seed);
        match err {
            Some(e) => Err(e),
            None => run.ok_or_else(unreachable_run),
        }
    }

    /// Like [`generate_wsi`](Self::generate_wsi) but keeps completed stages
    /// when a later one fails. The run is `None` only when stage 0 failed.
    pub fn generate_partial(&self, seed: u64) -> (Option<PyramidRun>, Option<Error>) {
        if let Err(e) = self.validate() {
            return (None, Some(e));
        }
        let started = Instant::now();
        let s0 = self.initial_resolution(seed);
        let z0 = match self.initial_image(s0, seed) {
            Ok(z) => z,
            Err(e) => return (None, Some(e)),
        };
        let background = self.plan.background.clone().unwrap_or_else(|| corner_median(&z0));
        let mask = match tissue_mask_from(&z0, &background, &self.plan.tissue, self.plan.default_tissue_cell()) {
            Ok(m) => m,
            Err(e) => return (None, Some(e)),
        };
        let mut z0 = PlaneStore::Memory(z0);
        if let Err(e) = mask.apply_background(&mut z0, 1, &background, self.precision) {
            return (None, Some(e));
        }
        let m = self.plan.patch_size;
        let mut run = PyramidRun {
            seed,
            s0,
            factor: self.plan.factor,
            background,
            mask,
            levels: vec![z0],
            reports: vec![StageReport {
                stage: 0,
                extent: m,
                resolution: s0,
                processed: vec![1; self.schedule.steps()],
                skipped: vec![0; self.schedule.steps()],
                offsets: vec![(0, 0); self.schedule.steps()],
                wall_clock_s: started.elapsed().as_secs_f64(),
                spilled: false,
            }],
            complete: false,
        };
        for stage in 1..=self.plan.levels {
            let resolution = self.plan.stage_resolution(s0, stage);
            let prev = run.levels.last().expect("stage 0 present");
            match self.upscale_stage_with(prev, stage, resolution, &run.mask, &run.background, seed) {
                Ok((z, report)) => {
                    run.levels.push(z);
                    run.reports.push(report);
                }
                Err(e) => return (Some(run), Some(e)),
            }
        }
        run.complete = true;
        (Some(run), None)
    }
}

fn unreachable_run() -> Error {
    Error::InvalidParameter("pyramid run missing without an error".into())
}

fn stage_error(stage: usize, iteration: usize, patch: usize, e: Error) -> Error {
    match e {
        e @ Error::Stage { .. } => e,
        e => Error::Stage {
            stage,
            iteration,
            patch,
            source: Box::new(e),
        },
    }
}

/// One stage on an in-memory guide with no tissue masking. The output
/// resolution is the guide's divided by `k`; the background for padding
/// is the plan's colour or the guide's corner median.
pub fn upscale_stage(sampler: &PyramidSampler<'_>, z_prev: &ImagePlane, stage: usize, seed: u64) -> Result<ImagePlane> {
    z_prev.ensure_finite("stage guide")?;
    let k = sampler.plan.factor;
    let background = sampler.plan.background.clone().unwrap_or_else(|| corner_median(z_prev));
    if stage == 0 {
        return Err(Error::InvalidParameter("stage 0 has no guide".into()));
    }
    // One cell spanning the guide marks everything as tissue.
    let mask = TissueMask::full(z_prev.width(), z_prev.height(), z_prev.width().max(z_prev.height()));
    let resolution = z_prev.resolution() / k as f64;
    let (out, _) = sampler.upscale_stage_with(z_prev, stage, resolution, &mask, &background, seed)?;
    out.into_image()
}
