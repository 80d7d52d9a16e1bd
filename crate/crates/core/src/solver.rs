//! Guided probability-flow ODE steps.
//!
//! One step integrates `dx = (x − ū)/σ(t) dt` from `t_i` to `t_{i+1}`, where
//! `ū` is the denoiser estimate, projected onto the guide constraint while
//! the relaxation gate is open. Heun adds a trapezoidal correction except
//! on the final step into `t = 0`.

use std::ops::Range;

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::denoiser::Denoiser;
use crate::error::{Error, Result};
use crate::guidance::{should_guide, DownsampleOperator, GuidanceConfig};
use crate::image::{ImagePlane, Shape};
use crate::rng::{rng_stream, Purpose};
use crate::schedule::NoiseSchedule;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    #[default]
    Heun,
    Euler,
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "heun" => Ok(Method::Heun),
            "euler" => Ok(Method::Euler),
            other => Err(Error::InvalidParameter(format!(
                "unknown method {other:?}, expected heun or euler"
            ))),
        }
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Method::Heun => "heun",
            Method::Euler => "euler",
        })
    }
}

/// Everything a step needs besides the state itself. Immutable for the
/// duration of a run.
#[derive(Clone, Copy)]
pub struct StepContext<'a> {
    pub schedule: &'a NoiseSchedule,
    pub denoiser: &'a dyn Denoiser,
    pub guidance: GuidanceConfig,
    pub operator: DownsampleOperator,
    /// Spatial resolution passed to the denoiser, µm/px.
    pub resolution: f64,
    pub method: Method,
}

impl<'a> StepContext<'a> {
    pub fn with_resolution(self, resolution: f64) -> Self {
        Self { resolution, ..self }
    }

    /// ODE slope `(x − u)/σ`, with `u` projected when the gate for `step` is open.
    fn slope(
        &self,
        x: &ImagePlane,
        t: f64,
        guide: Option<&ImagePlane>,
        step: usize,
    ) -> Result<ImagePlane> {
        let mut u = self.denoiser.denoise(x, t, self.resolution)?;
        x.ensure_same_shape(&u, "denoiser output")?;
        if let Some(y) = guide {
            if should_guide(step, &self.guidance) {
                u = self.operator.guided_estimate(&u, y)?;
            }
        }
        let inv = 1.0 / t;
        x.zip_map(&u, |xv, uv| (xv - uv) * inv)
    }
}

/// Advances `x_i` from `t_i` to `t_{i+1}`.
pub fn guided_step(
    ctx: &StepContext<'_>,
    x: &ImagePlane,
    guide: Option<&ImagePlane>,
    step: usize,
) -> Result<ImagePlane> {
    let n = ctx.schedule.steps();
    if step >= n {
        return Err(Error::InvalidParameter(format!(
            "step index {step} out of range for N={n}"
        )));
    }
    x.ensure_finite("solver state")?;
    if let Some(y) = guide {
        let want = ctx.operator.low_shape(x.shape())?;
        if y.shape() != want {
            return Err(Error::ShapeMismatch(format!(
                "guide is {}, expected {want}",
                y.shape()
            )));
        }
    }

    let t = ctx.schedule.time(step);
    let t_next = ctx.schedule.time(step + 1);
    let h = t_next - t;

    let d = ctx.slope(x, t, guide, step)?;
    let proposal = x.zip_map(&d, |xv, dv| xv + h * dv)?;
    let out = if ctx.method == Method::Heun && t_next != 0.0 {
        let d_next = ctx.slope(&proposal, t_next, guide, step)?;
        let mut out = x.clone();
        for ((o, a), b) in out.data_mut().iter_mut().zip(d.data()).zip(d_next.data()) {
            *o += h * (0.5 * a + 0.5 * b);
        }
        out
    } else {
        proposal
    };
    if !out.is_finite() {
        return Err(Error::Numerical {
            step,
            detail: format!("non-finite state after step from t={t} to t={t_next}"),
        });
    }
    Ok(out)
}

/// Runs steps `range` in order starting from `x`.
pub fn integrate(
    ctx: &StepContext<'_>,
    x: ImagePlane,
    guide: Option<&ImagePlane>,
    range: Range<usize>,
) -> Result<ImagePlane> {
    range.into_iter().try_fold(x, |x, i| guided_step(ctx, &x, guide, i))
}

/// One row (all channels) of `σ·N(0, I)` noise for a plane of the given
/// width, keyed by `(seed, stage, row)`.
pub fn noise_row(seed: u64, stage: u64, row: usize, channels: usize, width: usize, sigma: f64) -> Vec<f64> {
    let mut rng = rng_stream(seed, stage, 0, row as u64, Purpose::InitialNoise);
    (0..channels * width)
        .map(|_| {
            let n: f64 = StandardNormal.sample(&mut rng);
            sigma * n
        })
        .collect()
}

/// `x_0 ~ N(0, σ²I)` for `stage`. Rows come from independent streams, so
/// the result does not depend on how rows are distributed over workers.
pub fn initial_noise(shape: Shape, sigma: f64, seed: u64, stage: u64, resolution: f64) -> ImagePlane {
    let mut img = ImagePlane::zeros(shape, resolution);
    for y in 0..shape.height {
        let row = noise_row(seed, stage, y, shape.channels, shape.width, sigma);
        for c in 0..shape.channels {
            img.row_mut(c, y)
                .copy_from_slice(&row[c * shape.width..(c + 1) * shape.width]);
        }
    }
    img
}

/// Unguided sampling: `x_0 ~ N(0, σ_max² I)`, then all N steps.
pub fn sample_unconditional(ctx: &StepContext<'_>, shape: Shape, seed: u64) -> Result<ImagePlane> {
    let x0 = initial_noise(shape, ctx.schedule.sigma_max(), seed, 0, ctx.resolution);
    integrate(ctx, x0, None, 0..ctx.schedule.steps())
}
