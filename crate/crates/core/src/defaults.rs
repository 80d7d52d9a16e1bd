//! Reference hyper-parameters for gigapixel generation.

/// Model (patch) resolution in pixels.
pub const PATCH_SIZE: usize = 512;
/// Per-stage upscale factor.
pub const FACTOR: usize = 2;
/// Number of upscaling stages after the initial image.
pub const LEVELS: usize = 7;
/// Denoising steps per diffusion run.
pub const STEPS: usize = 40;
/// Relaxation bound on guided steps.
pub const RELAXATION: usize = 28;

pub const SIGMA_MIN: f64 = 0.002;
pub const SIGMA_MAX: f64 = 80.0;
pub const RHO: f64 = 7.0;
pub const SIGMA_DATA: f64 = 0.5;

/// Spatial resolution range of the initial image, µm/px.
pub const S0_RANGE: (f64, f64) = (80.0, 150.0);
/// Spatial resolution range covered by training patches, µm/px.
pub const TRAINING_S_RANGE: (f64, f64) = (0.3, 150.0);

/// Log-normal training noise distribution: ln σ ~ N(mean, std²).
pub const LOG_SIGMA_MEAN: f64 = -1.2;
pub const LOG_SIGMA_STD: f64 = 1.2;

pub const LEARNING_RATE: f64 = 1e-4;
pub const BATCH_SIZE: usize = 64;

/// Minimum tissue fraction for a region to count as tissue.
pub const TISSUE_COVERAGE: f64 = 0.10;
