//! Gigapixel image synthesis by coarse-to-fine guided diffusion on patches.
//!
//! An unconditional `M×M` sample is refined through `L` super-resolution
//! stages. Each stage denoises the upscaled image patch by patch, projects
//! every clean estimate onto the low-resolution guide, and re-randomizes the
//! patch grid after every step so that patch borders never persist.

pub mod defaults;
pub mod denoiser;
pub mod error;
pub mod eval;
pub mod guidance;
pub mod image;
pub mod io;
pub mod precondition;
pub mod pyramid;
pub mod rng;
pub mod schedule;
pub mod solver;

pub use error::{Error, Result};
pub use image::{ImagePlane, Shape};
pub use schedule::NoiseSchedule;
