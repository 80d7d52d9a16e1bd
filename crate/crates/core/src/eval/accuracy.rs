//! Global error of the ODE solvers against a reference trajectory.
//!
//! For a single Gaussian `N(μ, s²I)` the probability-flow ODE is linear,
//! `dx/dt = t(x − μ)/(s² + t²)`, with solution
//! `x(t) = μ + (x₀ − μ)·√((s² + t²)/(s² + t₀²))`. Mixtures fall back to a
//! fine-grid Heun run as the reference.

use serde::{Deserialize, Serialize};

use super::stats::{mean, slope, std_error};
use crate::denoiser::GaussianMixtureOracle;
use crate::error::{Error, Result};
use crate::guidance::{DownsampleOperator, GuidanceConfig};
use crate::image::{ImagePlane, Shape};
use crate::schedule::{NoiseSchedule, ScheduleParams};
use crate::solver::{initial_noise, integrate, Method, StepContext};

/// Steps of the fine reference grid used when no closed form exists.
pub const REFERENCE_STEPS: usize = 2048;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AccuracyRow {
    pub steps: usize,
    pub method: Method,
    /// Mean over seeds of the RMS endpoint error.
    pub mean_error: f64,
    pub std_error: f64,
}

#[derive(Clone, Copy, Debug)]
pub struct AccuracyConfig {
    pub schedule: ScheduleParams,
    pub shape: Shape,
    pub seeds: usize,
    pub seed_base: u64,
}

impl Default for AccuracyConfig {
    fn default() -> Self {
        Self {
            schedule: ScheduleParams::default(),
            shape: Shape::new(1, 2, 2),
            seeds: 256,
            seed_base: 0,
        }
    }
}

fn closed_form(oracle: &GaussianMixtureOracle, x0: &ImagePlane, t0: f64, t: f64) -> Result<ImagePlane> {
    let comp = &oracle.components()[0];
    let mu = oracle.mixture_mean(x0.shape(), x0.resolution())?;
    let s2 = comp.std * comp.std;
    let factor = ((s2 + t * t) / (s2 + t0 * t0)).sqrt();
    x0.zip_map(&mu, |x, m| m + (x - m) * factor)
}

fn rms(a: &ImagePlane, b: &ImagePlane) -> Result<f64> {
    let d = a.zip_map(b, |p, q| p - q)?;
    Ok((d.sum_sq() / d.data().len() as f64).sqrt())
}

/// Integrates from `t_0 = σ_max` to `t_{N−1} = σ_min` for each `N`, where
/// both solvers are consistent, and compares with the reference endpoint.
pub fn solver_accuracy_sweep(
    oracle: &GaussianMixtureOracle,
    step_counts: &[usize],
    method: Method,
    cfg: &AccuracyConfig,
) -> Result<Vec<AccuracyRow>> {
    if cfg.seeds == 0 {
        return Err(Error::InvalidParameter("accuracy sweep needs at least one seed".into()));
    }
    let closed = oracle.components().len() == 1;
    let p = cfg.schedule;
    let reference_schedule = NoiseSchedule::new(REFERENCE_STEPS, p.sigma_min, p.sigma_max, p.rho)?;
    let unguided = GuidanceConfig::new(0, crate::guidance::Convention::Alg1);
    let operator = DownsampleOperator::new(2)?;
    let starts: Vec<ImagePlane> = (0..cfg.seeds as u64)
        .map(|s| initial_noise(cfg.shape, p.sigma_max, cfg.seed_base + s, 0, 1.0))
        .collect();
    let references: Vec<ImagePlane> = starts
        .iter()
        .map(|x0| {
            if closed {
                closed_form(oracle, x0, p.sigma_max, p.sigma_min)
            } else {
                let ctx = StepContext {
                    schedule: &reference_schedule,
                    denoiser: oracle,
                    guidance: unguided,
                    operator,
                    resolution: 1.0,
                    method: Method::Heun,
                };
                integrate(&ctx, x0.clone(), None, 0..REFERENCE_STEPS - 1)
            }
        })
        .collect::<Result<_>>()?;

    step_counts
        .iter()
        .map(|&n| {
            let schedule = NoiseSchedule::new(n, p.sigma_min, p.sigma_max, p.rho)?;
            let ctx = StepContext {
                schedule: &schedule,
                denoiser: oracle,
                guidance: unguided,
                operator,
                resolution: 1.0,
                method,
            };
            let errors = starts
                .iter()
                .zip(&references)
                .map(|(x0, r)| rms(&integrate(&ctx, x0.clone(), None, 0..n - 1)?, r))
                .collect::<Result<Vec<f64>>>()?;
            Ok(AccuracyRow {
                steps: n,
                method,
                mean_error: mean(&errors),
                std_error: std_error(&errors),
            })
        })
        .collect()
}

/// Empirical order `p` in `error ∝ N^(−p)`, from a log–log fit.
pub fn convergence_order(rows: &[AccuracyRow]) -> f64 {
    let x: Vec<f64> = rows.iter().map(|r| (r.steps as f64).ln()).collect();
    let y: Vec<f64> = rows.iter().map(|r| r.mean_error.ln()).collect();
    -slope(&x, &y)
}
