//! Oracles and plans used by the desk-scale experiments.

use crate::denoiser::{ComponentSpec, GaussianMixtureOracle, Mean, MeanSpec, MixtureComponent, OracleFile, PatternSpec};
use crate::error::Result;
use crate::image::Shape;
use crate::pyramid::{GridMode, StagePlan, TissueParams};

/// Parameters of the texture oracle: an equal-weight mixture of smooth
/// random patterns in patch coordinates, each with isotropic noise.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TextureParams {
    pub components: usize,
    pub std: f64,
    pub amplitude: f64,
    pub max_cycles: f64,
    pub waves: usize,
    pub seed: u64,
}

impl Default for TextureParams {
    fn default() -> Self {
        Self {
            components: 8,
            std: 0.1,
            amplitude: 0.5,
            max_cycles: 2.0,
            waves: 6,
            seed: 100,
        }
    }
}

/// A patch prior whose samples carry structure at the patch scale, so
/// independently denoised patches disagree along their borders.
pub fn texture_oracle(channels: usize, patch_size: usize, p: &TextureParams) -> Result<GaussianMixtureOracle> {
    let shape = Shape::new(channels, patch_size, patch_size);
    let n = p.components.max(1);
    let mut comps = (0..n)
        .map(|i| {
            let pattern = PatternSpec {
                seed: p.seed + i as u64,
                waves: p.waves,
                amplitude: p.amplitude,
                max_cycles: p.max_cycles,
                base: None,
            };
            Ok(MixtureComponent {
                weight: 1.0 / n as f64,
                mean: Mean::Image(pattern.render(shape)?),
                std: p.std,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let total: f64 = comps.iter().map(|c| c.weight).sum();
    comps[0].weight += 1.0 - total;
    GaussianMixtureOracle::new(comps)
}

/// The same oracle as a serializable definition, for run configurations.
pub fn texture_oracle_file(channels: usize, patch_size: usize, p: &TextureParams) -> OracleFile {
    let n = p.components.max(1);
    OracleFile {
        channels,
        height: Some(patch_size),
        width: Some(patch_size),
        component: (0..n as u64)
            .map(|i| ComponentSpec {
                weight: 1.0 / n as f64,
                std: p.std,
                mean: MeanSpec::Pattern(PatternSpec {
                    seed: p.seed + i,
                    waves: p.waves,
                    amplitude: p.amplitude,
                    max_cycles: p.max_cycles,
                    base: None,
                }),
            })
            .collect(),
        band: Vec::new(),
    }
}

/// `M = 32`, `k = 2`, `L = 3`: a 256² final image from 32² patches.
pub fn desk_plan(grid: GridMode) -> StagePlan {
    StagePlan {
        levels: 3,
        factor: 2,
        patch_size: 32,
        channels: 3,
        s0_range: crate::defaults::S0_RANGE,
        background: None,
        grid,
        tissue: TissueParams {
            enabled: false,
            ..TissueParams::default()
        },
    }
}
