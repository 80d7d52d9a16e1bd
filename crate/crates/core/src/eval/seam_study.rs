//! Seam energy of full desk pyramids with and without grid shifting.
//!
//! Every seed generates the same pyramid twice, once per grid mode, and
//! measures the final level on the unshifted `M`-grid.

use serde::{Deserialize, Serialize};

use super::presets::{desk_plan, texture_oracle, TextureParams};
use super::seams::seam_energy;
use super::stats::mean;
use crate::error::Result;
use crate::guidance::GuidanceConfig;
use crate::pyramid::{GridMode, PatchGrid, PyramidSampler};
use crate::schedule::{NoiseSchedule, ScheduleParams};

#[derive(Clone, Debug)]
pub struct SeamStudyConfig {
    pub seeds: usize,
    pub seed_base: u64,
    pub levels: usize,
    pub schedule: ScheduleParams,
    pub guidance: GuidanceConfig,
    pub texture: TextureParams,
    /// Fixed `s_0` so the oracle sees the same conditioning in both modes.
    pub s0: f64,
    pub workers: usize,
}

impl Default for SeamStudyConfig {
    fn default() -> Self {
        Self {
            seeds: 20,
            seed_base: 0,
            levels: 3,
            schedule: ScheduleParams::default(),
            guidance: GuidanceConfig::default(),
            texture: TextureParams::default(),
            s0: 100.0,
            workers: 1,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeamRow {
    pub seed: u64,
    pub shift_ratio: f64,
    pub fixed_ratio: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeamStudy {
    pub rows: Vec<SeamRow>,
}

impl SeamStudy {
    /// Seeds where grid shifting gave the lower ratio.
    pub fn shift_wins(&self) -> usize {
        self.rows.iter().filter(|r| r.shift_ratio < r.fixed_ratio).count()
    }

    pub fn shift_mean(&self) -> f64 {
        mean(&self.rows.iter().map(|r| r.shift_ratio).collect::<Vec<_>>())
    }

    pub fn fixed_mean(&self) -> f64 {
        mean(&self.rows.iter().map(|r| r.fixed_ratio).collect::<Vec<_>>())
    }

    pub fn shift_max(&self) -> f64 {
        self.rows.iter().map(|r| r.shift_ratio).fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn shift_at_most(&self, bound: f64) -> usize {
        self.rows.iter().filter(|r| r.shift_ratio <= bound).count()
    }
}

pub fn seam_study(cfg: &SeamStudyConfig) -> Result<SeamStudy> {
    let probe = desk_plan(GridMode::Shift);
    let oracle = texture_oracle(probe.channels, probe.patch_size, &cfg.texture)?;
    let schedule = NoiseSchedule::from_params(cfg.schedule)?;
    let ratio = |mode: GridMode, seed: u64| -> Result<f64> {
        let plan = crate::pyramid::StagePlan {
            levels: cfg.levels,
            s0_range: (cfg.s0, cfg.s0),
            ..desk_plan(mode)
        };
        let m = plan.patch_size;
        let mut sampler = PyramidSampler::new(plan, schedule.clone(), &oracle)?;
        sampler.guidance = cfg.guidance;
        sampler.workers = cfg.workers;
        let run = sampler.generate_wsi(seed)?;
        let z = run.levels.last().expect("final level").to_image()?;
        Ok(seam_energy(&z, &PatchGrid::fixed(m, z.width(), z.height())?)?.ratio)
    };
    let rows = (0..cfg.seeds as u64)
        .map(|s| {
            let seed = cfg.seed_base + s;
            Ok(SeamRow {
                seed,
                shift_ratio: ratio(GridMode::Shift, seed)?,
                fixed_ratio: ratio(GridMode::Fixed, seed)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SeamStudy { rows })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shifting_lowers_seam_energy_on_one_level() {
        let cfg = SeamStudyConfig {
            seeds: 2,
            levels: 1,
            schedule: ScheduleParams {
                steps: 12,
                ..ScheduleParams::default()
            },
            guidance: GuidanceConfig {
                relaxation: 8,
                ..GuidanceConfig::default()
            },
            ..SeamStudyConfig::default()
        };
        let study = seam_study(&cfg).unwrap();
        assert_eq!(study.rows.len(), 2);
        assert!(study.fixed_mean() > study.shift_mean(), "{study:?}");
    }
}
