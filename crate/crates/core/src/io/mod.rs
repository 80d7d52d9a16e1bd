//! Configuration, on-disk pyramids and PNG conversion.

pub mod png;
pub mod config;
pub mod manifest;
pub mod pyramid;

pub use config::RunConfig;
pub use manifest::{PyramidManifest, RunStatus};
pub use pyramid::{read_level, verify, write_pyramid, VerifyReport, WriteOptions};
