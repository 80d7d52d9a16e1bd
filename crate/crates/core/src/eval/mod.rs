//! Desk-scale measurements of seam suppression, solver accuracy,
//! relaxation and stitching cost.

mod accuracy;
mod distribution;
mod mask_shift;
mod presets;
mod relaxation;
mod seam_study;
mod seams;
pub mod stats;
mod table;

pub use accuracy::{convergence_order, solver_accuracy_sweep, AccuracyConfig, AccuracyRow, REFERENCE_STEPS};
pub use distribution::{distribution_test, DistributionReport, DistributionThresholds, MIN_SAMPLES};
pub use mask_shift::{
    mask_shift_positions, mask_shift_upscale, respects_raster_dependencies, MaskShiftResult, PatchEvent,
};
pub use presets::{desk_plan, texture_oracle, texture_oracle_file, TextureParams};
pub use relaxation::{relaxation_sweep, RelaxationConfig, RelaxationRow, RelaxationSweep};
pub use seam_study::{seam_study, SeamRow, SeamStudy, SeamStudyConfig};
pub use seams::{seam_energy, SeamReport};
pub use table::Table;
