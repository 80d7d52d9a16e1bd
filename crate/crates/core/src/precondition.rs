//! σ-dependent input/output/skip scalings and the loss weighting.
//!
//! ```text
//! D(x; σ, s) = c_skip(σ)·x + c_out(σ)·F(c_in(σ)·x; σ, s)
//! ```

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::denoiser::Denoiser;
use crate::error::{Error, Result};
use crate::image::ImagePlane;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PreconditionConfig {
    pub sigma_data: f64,
}

impl Default for PreconditionConfig {
    fn default() -> Self {
        Self {
            sigma_data: crate::defaults::SIGMA_DATA,
        }
    }
}

impl PreconditionConfig {
    pub fn new(sigma_data: f64) -> Result<Self> {
        if !(sigma_data > 0.0 && sigma_data.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "sigma_data must be positive, got {sigma_data}"
            )));
        }
        Ok(Self { sigma_data })
    }
}

pub fn c_skip(sigma: f64, cfg: &PreconditionConfig) -> f64 {
    let sd2 = cfg.sigma_data * cfg.sigma_data;
    sd2 / (sigma * sigma + sd2)
}

pub fn c_out(sigma: f64, cfg: &PreconditionConfig) -> f64 {
    let sd = cfg.sigma_data;
    sigma * sd / (sd * sd + sigma * sigma).sqrt()
}

pub fn c_in(sigma: f64, cfg: &PreconditionConfig) -> f64 {
    1.0 / (sigma * sigma + cfg.sigma_data * cfg.sigma_data).sqrt()
}

/// `λ(σ) = σ⁻² + σ_data⁻²`; undefined at σ = 0.
pub fn loss_weight(sigma: f64, cfg: &PreconditionConfig) -> Result<f64> {
    if sigma.is_nan() || sigma <= 0.0 {
        return Err(Error::Domain(format!("loss weight needs sigma > 0, got {sigma}")));
    }
    Ok(1.0 / (sigma * sigma) + 1.0 / (cfg.sigma_data * cfg.sigma_data))
}

/// Wraps a raw network `F(c_in·x; σ, s)` into a denoiser.
pub fn precondition_denoise<F>(
    raw_net: F,
    x: &ImagePlane,
    sigma: f64,
    resolution: f64,
    cfg: &PreconditionConfig,
) -> Result<ImagePlane>
where
    F: Fn(&ImagePlane, f64, f64) -> Result<ImagePlane>,
{
    x.ensure_finite("preconditioned input")?;
    if sigma.is_nan() || sigma < 0.0 {
        return Err(Error::Domain(format!("noise level must be >= 0, got {sigma}")));
    }
    let skip = c_skip(sigma, cfg);
    let out = c_out(sigma, cfg);
    let scaled = x.scaled(c_in(sigma, cfg));
    let f = raw_net(&scaled, sigma, resolution)?;
    if f.shape() != x.shape() {
        return Err(Error::ShapeMismatch(format!(
            "raw network returned {}, input was {}",
            f.shape(),
            x.shape()
        )));
    }
    x.zip_map(&f, |xv, fv| skip * xv + out * fv)
}

/// A raw network together with its preconditioning.
pub struct Preconditioned<F> {
    raw_net: F,
    cfg: PreconditionConfig,
}

impl<F> Preconditioned<F> {
    pub fn new(raw_net: F, cfg: PreconditionConfig) -> Self {
        Self { raw_net, cfg }
    }
}

impl<F> Denoiser for Preconditioned<F>
where
    F: Fn(&ImagePlane, f64, f64) -> Result<ImagePlane> + Send + Sync,
{
    fn denoise(&self, x: &ImagePlane, sigma: f64, resolution: f64) -> Result<ImagePlane> {
        precondition_denoise(&self.raw_net, x, sigma, resolution, &self.cfg)
    }
}

/// `λ(σ)·‖D(clean + noise; σ, s) − clean‖²`, summed over all samples.
pub fn denoising_loss<D: Denoiser + ?Sized>(
    denoiser: &D,
    clean: &ImagePlane,
    sigma: f64,
    resolution: f64,
    noise: &ImagePlane,
    cfg: &PreconditionConfig,
) -> Result<f64> {
    let weight = loss_weight(sigma, cfg)?;
    let noisy = clean.zip_map(noise, |a, b| a + b)?;
    let denoised = denoiser.denoise(&noisy, sigma, resolution)?;
    let residual = denoised.zip_map(clean, |a, b| a - b)?;
    Ok(weight * residual.sum_sq())
}

/// Training noise levels: `ln σ ~ N(mean, std²)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogNormalSigma {
    pub mean: f64,
    pub std: f64,
}

impl Default for LogNormalSigma {
    fn default() -> Self {
        Self {
            mean: crate::defaults::LOG_SIGMA_MEAN,
            std: crate::defaults::LOG_SIGMA_STD,
        }
    }
}

impl LogNormalSigma {
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<f64> {
        let normal = Normal::new(self.mean, self.std)
            .map_err(|e| Error::InvalidParameter(format!("log-normal sigma: {e}")))?;
        Ok(normal.sample(rng).exp())
    }
}
