//! Block-mean downsampling, its pseudoinverse, and the guided projection.
//!
//! `A` averages disjoint k×k blocks, so `A·Aᵀ = I/k²` and
//! `A† = Aᵀ(AAᵀ)⁻¹ = k²·Aᵀ` replicates each low-resolution sample into its
//! block. The projection `ū = (I − A†A)u + A†y` therefore replaces each
//! block mean of `u` by the matching guide sample. Everything here is
//! matrix-free.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::{ImagePlane, Shape};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DownsampleOperator {
    factor: usize,
}

impl DownsampleOperator {
    pub fn new(factor: usize) -> Result<Self> {
        if factor < 2 {
            return Err(Error::InvalidParameter(format!(
                "downsample factor must be >= 2, got {factor}"
            )));
        }
        Ok(Self { factor })
    }

    pub fn factor(&self) -> usize {
        self.factor
    }

    pub fn low_shape(&self, high: Shape) -> Result<Shape> {
        let k = self.factor;
        if !high.height.is_multiple_of(k) || !high.width.is_multiple_of(k) {
            return Err(Error::ShapeMismatch(format!(
                "{}x{} is not divisible by factor {k}",
                high.height, high.width
            )));
        }
        Ok(Shape::new(high.channels, high.height / k, high.width / k))
    }

    /// `A·u`: mean over each k×k block. Output resolution tag is `k` times
    /// the input's.
    pub fn downsample(&self, u: &ImagePlane) -> Result<ImagePlane> {
        let low = self.low_shape(u.shape())?;
        let k = self.factor;
        let inv = 1.0 / (k * k) as f64;
        let mut out = ImagePlane::zeros(low, u.resolution() * k as f64);
        for c in 0..low.channels {
            for by in 0..low.height {
                let row = out.row_mut(c, by);
                for dy in 0..k {
                    let src = u.row(c, by * k + dy);
                    for (bx, acc) in row.iter_mut().enumerate() {
                        *acc += src[bx * k..(bx + 1) * k].iter().sum::<f64>();
                    }
                }
                for v in row.iter_mut() {
                    *v *= inv;
                }
            }
        }
        Ok(out)
    }

    /// `A†·y`: replicates each sample into a k×k block.
    pub fn pseudo_upsample(&self, y: &ImagePlane) -> ImagePlane {
        let k = self.factor;
        let s = y.shape();
        let high = Shape::new(s.channels, s.height * k, s.width * k);
        let mut out = ImagePlane::zeros(high, y.resolution() / k as f64);
        for c in 0..s.channels {
            for hy in 0..high.height {
                let src = y.row(c, hy / k);
                let dst = out.row_mut(c, hy);
                for (hx, v) in dst.iter_mut().enumerate() {
                    *v = src[hx / k];
                }
            }
        }
        out
    }

    /// `ū = (I − A†A)u + A†y`, the Euclidean projection of `u` onto
    /// `{v : Av = y}`. Keeps `u`'s resolution tag.
    pub fn guided_estimate(&self, u: &ImagePlane, y: &ImagePlane) -> Result<ImagePlane> {
        let low = self.low_shape(u.shape())?;
        if y.shape() != low {
            return Err(Error::ShapeMismatch(format!(
                "guide is {}, expected {low} for estimate {}",
                y.shape(),
                u.shape()
            )));
        }
        let means = self.downsample(u)?;
        let k = self.factor;
        let mut out = u.clone();
        for c in 0..low.channels {
            for hy in 0..u.height() {
                let m = means.row(c, hy / k);
                let g = y.row(c, hy / k);
                for (hx, v) in out.row_mut(c, hy).iter_mut().enumerate() {
                    *v = *v - m[hx / k] + g[hx / k];
                }
            }
        }
        Ok(out)
    }
}

/// Which reading of the relaxation bound `r` decides when to guide.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Convention {
    /// Guide while `i < r`.
    #[default]
    Alg1,
    /// Guide while `i >= r`.
    Inverted,
}

impl std::str::FromStr for Convention {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "alg1" => Ok(Convention::Alg1),
            "inverted" => Ok(Convention::Inverted),
            other => Err(Error::InvalidParameter(format!(
                "unknown convention {other:?}, expected alg1 or inverted"
            ))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct GuidanceConfig {
    pub relaxation: usize,
    #[serde(default)]
    pub convention: Convention,
}

impl Default for GuidanceConfig {
    fn default() -> Self {
        Self {
            relaxation: crate::defaults::RELAXATION,
            convention: Convention::Alg1,
        }
    }
}

impl GuidanceConfig {
    pub fn new(relaxation: usize, convention: Convention) -> Self {
        Self {
            relaxation,
            convention,
        }
    }

    pub fn validate(&self, steps: usize) -> Result<()> {
        if self.relaxation > steps {
            return Err(Error::InvalidParameter(format!(
                "relaxation bound r={} exceeds step count N={steps}",
                self.relaxation
            )));
        }
        Ok(())
    }
}

pub fn should_guide(step: usize, cfg: &GuidanceConfig) -> bool {
    match cfg.convention {
        Convention::Alg1 => step < cfg.relaxation,
        Convention::Inverted => step >= cfg.relaxation,
    }
}
