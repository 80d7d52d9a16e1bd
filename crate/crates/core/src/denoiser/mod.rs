//! The denoiser contract `D(x; σ, s)` and its reference implementations.
//!
//! A denoiser maps a noisy plane, its noise level and its spatial
//! resolution to an estimate of the clean plane. The score of the noisy
//! density follows as `(D(x; σ) − x) / σ²`, which is all the samplers need.

mod encoding;
mod gmm;
mod oracle_file;

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

pub use encoding::sinusoidal_encode;
pub use gmm::{GaussianMixtureOracle, Mean, MixtureComponent, ResolutionBand, ResolutionSwitched};
pub use oracle_file::{ComponentSpec, DenoiserSource, MeanSpec, OracleFile, PatternSpec};

use crate::error::{Error, Result};
use crate::image::ImagePlane;

pub trait Denoiser: Send + Sync {
    /// Estimate of the clean plane given noisy `x` at noise level `sigma`
    /// and spatial resolution `resolution` (µm/px). Output shape equals
    /// input shape.
    fn denoise(&self, x: &ImagePlane, sigma: f64, resolution: f64) -> Result<ImagePlane>;
}

impl<D: Denoiser + ?Sized> Denoiser for &D {
    fn denoise(&self, x: &ImagePlane, sigma: f64, resolution: f64) -> Result<ImagePlane> {
        (**self).denoise(x, sigma, resolution)
    }
}

impl<D: Denoiser + ?Sized> Denoiser for Box<D> {
    fn denoise(&self, x: &ImagePlane, sigma: f64, resolution: f64) -> Result<ImagePlane> {
        (**self).denoise(x, sigma, resolution)
    }
}

impl<D: Denoiser + ?Sized> Denoiser for Arc<D> {
    fn denoise(&self, x: &ImagePlane, sigma: f64, resolution: f64) -> Result<ImagePlane> {
        (**self).denoise(x, sigma, resolution)
    }
}

/// Adapts a closure to the [`Denoiser`] contract.
pub struct FnDenoiser<F>(pub F);

impl<F> Denoiser for FnDenoiser<F>
where
    F: Fn(&ImagePlane, f64, f64) -> Result<ImagePlane> + Send + Sync,
{
    fn denoise(&self, x: &ImagePlane, sigma: f64, resolution: f64) -> Result<ImagePlane> {
        let out = (self.0)(x, sigma, resolution)?;
        x.ensure_same_shape(&out, "denoiser output")?;
        Ok(out)
    }
}

/// `D(x) = x`: every point is a fixed point of the ODE.
#[derive(Clone, Copy, Debug, Default)]
pub struct IdentityDenoiser;

impl Denoiser for IdentityDenoiser {
    fn denoise(&self, x: &ImagePlane, _sigma: f64, _resolution: f64) -> Result<ImagePlane> {
        Ok(x.clone())
    }
}

/// Counts evaluations of the wrapped denoiser.
pub struct CountingDenoiser<D> {
    inner: D,
    calls: AtomicUsize,
}

impl<D> CountingDenoiser<D> {
    pub fn new(inner: D) -> Self {
        Self {
            inner,
            calls: AtomicUsize::new(0),
        }
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::Relaxed)
    }

    pub fn reset(&self) {
        self.calls.store(0, Ordering::Relaxed);
    }

    pub fn into_inner(self) -> D {
        self.inner
    }
}

impl<D: Denoiser> Denoiser for CountingDenoiser<D> {
    fn denoise(&self, x: &ImagePlane, sigma: f64, resolution: f64) -> Result<ImagePlane> {
        self.calls.fetch_add(1, Ordering::Relaxed);
        self.inner.denoise(x, sigma, resolution)
    }
}

/// Rounds inputs and outputs of the wrapped denoiser through `f32`,
/// emulating a single-precision network whose result is promoted.
pub struct SinglePrecision<D>(pub D);

impl<D: Denoiser> Denoiser for SinglePrecision<D> {
    fn denoise(&self, x: &ImagePlane, sigma: f64, resolution: f64) -> Result<ImagePlane> {
        let x32 = x.map(|v| v as f32 as f64);
        let out = self.0.denoise(&x32, sigma as f32 as f64, resolution)?;
        Ok(out.map(|v| v as f32 as f64))
    }
}

pub(crate) fn check_sigma(sigma: f64) -> Result<()> {
    if sigma.is_nan() || sigma < 0.0 {
        return Err(Error::Domain(format!("noise level must be >= 0, got {sigma}")));
    }
    Ok(())
}
