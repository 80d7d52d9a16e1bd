//! Consistency with the guide as a function of the relaxation bound.
//!
//! Each seed samples an `M×M` image, downsamples it by `k` to form the
//! guide `y`, and re-synthesizes an `M×M` image from fresh noise under the
//! guide for every `r`. The error is the RMS of `A·x_N − y`.

use serde::{Deserialize, Serialize};

use super::stats::{mean, spearman, std_error};
use crate::denoiser::Denoiser;
use crate::error::{Error, Result};
use crate::guidance::{Convention, DownsampleOperator, GuidanceConfig};
use crate::image::{ImagePlane, Shape};
use crate::schedule::{NoiseSchedule, ScheduleParams};
use crate::solver::{initial_noise, integrate, sample_unconditional, Method, StepContext};

#[derive(Clone, Debug)]
pub struct RelaxationConfig {
    pub schedule: ScheduleParams,
    pub patch_size: usize,
    pub factor: usize,
    pub channels: usize,
    pub r_values: Vec<usize>,
    pub seeds: usize,
    pub seed_base: u64,
    pub method: Method,
    pub resolution: f64,
}

impl Default for RelaxationConfig {
    fn default() -> Self {
        Self {
            schedule: ScheduleParams::default(),
            patch_size: 32,
            factor: 2,
            channels: 3,
            r_values: vec![0, 10, 20, 28, 40],
            seeds: 50,
            seed_base: 0,
            method: Method::Heun,
            resolution: 1.0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RelaxationRow {
    pub r: usize,
    pub mean_error: f64,
    pub std_error: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RelaxationSweep {
    pub rows: Vec<RelaxationRow>,
    /// `(r, error)` for every seed.
    pub samples: Vec<(usize, f64)>,
    /// Error of the fully unguided run from the same noise, per seed.
    pub unguided: Vec<f64>,
    pub spearman_rho: f64,
    pub p_value: f64,
}

impl RelaxationSweep {
    pub fn row(&self, r: usize) -> Option<&RelaxationRow> {
        self.rows.iter().find(|row| row.r == r)
    }
}

fn consistency(op: &DownsampleOperator, x: &ImagePlane, y: &ImagePlane) -> Result<f64> {
    let d = op.downsample(x)?.zip_map(y, |a, b| a - b)?;
    Ok((d.sum_sq() / d.data().len() as f64).sqrt())
}

pub fn relaxation_sweep(denoiser: &dyn Denoiser, cfg: &RelaxationConfig) -> Result<RelaxationSweep> {
    let p = cfg.schedule;
    let schedule = NoiseSchedule::from_params(p)?;
    let n = schedule.steps();
    if cfg.r_values.iter().any(|&r| r > n) {
        return Err(Error::InvalidParameter(format!(
            "relaxation values {:?} exceed N={n}",
            cfg.r_values
        )));
    }
    let operator = DownsampleOperator::new(cfg.factor)?;
    let shape = Shape::new(cfg.channels, cfg.patch_size, cfg.patch_size);
    let base = StepContext {
        schedule: &schedule,
        denoiser,
        guidance: GuidanceConfig::new(0, Convention::Alg1),
        operator,
        resolution: cfg.resolution,
        method: cfg.method,
    };

    let mut samples = Vec::with_capacity(cfg.seeds * cfg.r_values.len());
    let mut unguided = Vec::with_capacity(cfg.seeds);
    for s in 0..cfg.seeds as u64 {
        let seed = cfg.seed_base + s;
        let truth = sample_unconditional(&base, shape, seed)?;
        let y = operator.downsample(&truth)?;
        let x0 = initial_noise(shape, p.sigma_max, seed, 1, cfg.resolution);
        let free = integrate(&base, x0.clone(), None, 0..n)?;
        unguided.push(consistency(&operator, &free, &y)?);
        for &r in &cfg.r_values {
            let ctx = StepContext {
                guidance: GuidanceConfig::new(r, Convention::Alg1),
                ..base
            };
            let x = integrate(&ctx, x0.clone(), Some(&y), 0..n)?;
            samples.push((r, consistency(&operator, &x, &y)?));
        }
    }

    let rows = cfg
        .r_values
        .iter()
        .map(|&r| {
            let e: Vec<f64> = samples.iter().filter(|s| s.0 == r).map(|s| s.1).collect();
            RelaxationRow {
                r,
                mean_error: mean(&e),
                std_error: std_error(&e),
            }
        })
        .collect();
    let rs: Vec<f64> = samples.iter().map(|s| s.0 as f64).collect();
    let es: Vec<f64> = samples.iter().map(|s| s.1).collect();
    let (spearman_rho, p_value) = spearman(&rs, &es)?;
    Ok(RelaxationSweep {
        rows,
        samples,
        unguided,
        spearman_rho,
        p_value,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::denoiser::GaussianMixtureOracle;

    #[test]
    fn full_guidance_is_exact_and_zero_matches_unguided() {
        let o = GaussianMixtureOracle::single(vec![0.0], 0.3).unwrap();
        let cfg = RelaxationConfig {
            schedule: ScheduleParams {
                steps: 12,
                ..ScheduleParams::default()
            },
            patch_size: 8,
            channels: 1,
            r_values: vec![0, 6, 12],
            seeds: 6,
            ..RelaxationConfig::default()
        };
        let sweep = relaxation_sweep(&o, &cfg).unwrap();
        assert!(sweep.row(12).unwrap().mean_error < 1e-12);
        let zero: Vec<f64> = sweep.samples.iter().filter(|s| s.0 == 0).map(|s| s.1).collect();
        assert_eq!(zero, sweep.unguided);
        assert!(sweep.row(6).unwrap().mean_error < sweep.row(0).unwrap().mean_error);
        assert!(sweep.spearman_rho < 0.0);
    }
}
