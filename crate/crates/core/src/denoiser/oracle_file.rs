//! Text definitions of mixture oracles.
//!
//! ```toml
//! channels = 3
//! height = 32          # required when a mean is not a per-channel constant
//! width = 32
//!
//! [[component]]
//! weight = 0.5
//! std = 0.2
//! mean = { constant = [0.1, -0.2, 0.3] }
//!
//! [[component]]
//! weight = 0.5
//! std = 0.2
//! mean = { pattern = { seed = 7, waves = 6, amplitude = 0.4, max_cycles = 2.0 } }
//! ```
//!
//! Means may also be `{ samples = [...] }` (flat channel-major list) or
//! `{ image = "relative/path.png" }`. A file made of `[[band]]` tables, each
//! with `max_resolution` and its own `[[band.component]]` list, defines a
//! resolution-switched oracle.

use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::gmm::{GaussianMixtureOracle, Mean, MixtureComponent, ResolutionBand, ResolutionSwitched};
use super::Denoiser;
use crate::error::{Error, Result};
use crate::image::{ImagePlane, Shape};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MeanSpec {
    Constant(Vec<f64>),
    Samples(Vec<f64>),
    Image(PathBuf),
    Pattern(PatternSpec),
}

/// A smooth random field: a per-channel base level plus a sum of planar
/// cosine waves with random orientation, frequency and phase.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PatternSpec {
    pub seed: u64,
    pub waves: usize,
    pub amplitude: f64,
    /// Highest spatial frequency in cycles per image side.
    pub max_cycles: f64,
    #[serde(default)]
    pub base: Option<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComponentSpec {
    pub weight: f64,
    pub std: f64,
    pub mean: MeanSpec,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BandSpec {
    pub max_resolution: f64,
    pub component: Vec<ComponentSpec>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct OracleFile {
    pub channels: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub height: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub width: Option<usize>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub component: Vec<ComponentSpec>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub band: Vec<BandSpec>,
}

impl OracleFile {
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Format(format!("oracle definition: {e}")))
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Format(format!("oracle definition: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    /// Builds the oracle. Relative image paths resolve against `base_dir`.
    pub fn build(&self, base_dir: &Path) -> Result<Box<dyn Denoiser>> {
        match (self.component.is_empty(), self.band.is_empty()) {
            (false, true) => Ok(Box::new(self.build_mixture(&self.component, base_dir)?)),
            (true, false) => {
                let bands = self
                    .band
                    .iter()
                    .map(|b| {
                        Ok(ResolutionBand {
                            max_resolution: b.max_resolution,
                            oracle: self.build_mixture(&b.component, base_dir)?,
                        })
                    })
                    .collect::<Result<Vec<_>>>()?;
                Ok(Box::new(ResolutionSwitched::new(bands)?))
            }
            _ => Err(Error::Format(
                "oracle definition needs either [[component]] or [[band]] tables, not both".into(),
            )),
        }
    }

    pub fn build_mixture(
        &self,
        components: &[ComponentSpec],
        base_dir: &Path,
    ) -> Result<GaussianMixtureOracle> {
        let comps = components
            .iter()
            .map(|c| {
                Ok(MixtureComponent {
                    weight: c.weight,
                    std: c.std,
                    mean: self.build_mean(&c.mean, base_dir)?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        GaussianMixtureOracle::new(comps)
    }

    fn fixed_shape(&self) -> Result<Shape> {
        match (self.height, self.width) {
            (Some(h), Some(w)) => Ok(Shape::new(self.channels, h, w)),
            _ => Err(Error::Format(
                "height and width are required for sample, image and pattern means".into(),
            )),
        }
    }

    fn build_mean(&self, spec: &MeanSpec, base_dir: &Path) -> Result<Mean> {
        match spec {
            MeanSpec::Constant(v) => {
                if v.len() != self.channels {
                    return Err(Error::ShapeMismatch(format!(
                        "constant mean has {} values for {} channels",
                        v.len(),
                        self.channels
                    )));
                }
                Ok(Mean::PerChannel(v.clone()))
            }
            MeanSpec::Samples(v) => Ok(Mean::Image(ImagePlane::from_vec(
                self.fixed_shape()?,
                v.clone(),
                1.0,
            )?)),
            MeanSpec::Image(rel) => {
                let shape = self.fixed_shape()?;
                let path = base_dir.join(rel);
                let img = crate::io::png::read_png(&path, shape.channels, 1.0)?;
                if img.shape() != shape {
                    return Err(Error::ShapeMismatch(format!(
                        "{} is {}, expected {shape}",
                        path.display(),
                        img.shape()
                    )));
                }
                Ok(Mean::Image(img))
            }
            MeanSpec::Pattern(p) => Ok(Mean::Image(p.render(self.fixed_shape()?)?)),
        }
    }
}

impl PatternSpec {
    pub fn render(&self, shape: Shape) -> Result<ImagePlane> {
        if let Some(base) = &self.base {
            crate::image::check_color(shape, base)?;
        }
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let mut img = ImagePlane::zeros(shape, 1.0);
        let norm = self.amplitude / (self.waves.max(1) as f64).sqrt();
        for c in 0..shape.channels {
            let base = self.base.as_ref().map_or(0.0, |b| b[c]);
            let waves: Vec<(f64, f64, f64)> = (0..self.waves)
                .map(|_| {
                    let angle = rng.random::<f64>() * std::f64::consts::TAU;
                    let cycles = rng.random::<f64>() * self.max_cycles;
                    let phase = rng.random::<f64>() * std::f64::consts::TAU;
                    (
                        cycles * angle.cos() / shape.width as f64,
                        cycles * angle.sin() / shape.height as f64,
                        phase,
                    )
                })
                .collect();
            for y in 0..shape.height {
                for x in 0..shape.width {
                    let v: f64 = waves
                        .iter()
                        .map(|&(fx, fy, ph)| {
                            (std::f64::consts::TAU * (fx * x as f64 + fy * y as f64) + ph).cos()
                        })
                        .sum();
                    img.set(c, y, x, base + norm * v);
                }
            }
        }
        Ok(img)
    }
}

/// Where a run gets its denoiser from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DenoiserSource {
    /// Path to an oracle definition file.
    File(PathBuf),
    /// Definition embedded in the run configuration.
    Inline(OracleFile),
}

impl DenoiserSource {
    pub fn build(&self, base_dir: &Path) -> Result<Box<dyn Denoiser>> {
        match self {
            DenoiserSource::File(path) => {
                let path = base_dir.join(path);
                let file = OracleFile::load(&path)?;
                file.build(path.parent().unwrap_or(Path::new(".")))
            }
            DenoiserSource::Inline(file) => file.build(base_dir),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_constant_and_pattern_means() {
        let text = r#"
channels = 1
height = 4
width = 4

[[component]]
weight = 0.5
std = 0.2
mean = { constant = [0.1] }

[[component]]
weight = 0.5
std = 0.2
mean = { pattern = { seed = 7, waves = 3, amplitude = 0.4, max_cycles = 2.0 } }
"#;
        let file = OracleFile::parse(text).unwrap();
        let mix = file.build_mixture(&file.component, Path::new(".")).unwrap();
        assert_eq!(mix.components().len(), 2);
        assert_eq!(mix.fixed_shape(), Some(Shape::new(1, 4, 4)));
        let again = OracleFile::parse(&file.to_toml().unwrap()).unwrap();
        assert_eq!(again, file);
    }

    #[test]
    fn bands_build_switched_oracle() {
        let text = r#"
channels = 1

[[band]]
max_resolution = 5.0
[[band.component]]
weight = 1.0
std = 0.1
mean = { constant = [-0.5] }

[[band]]
max_resolution = 1e9
[[band.component]]
weight = 1.0
std = 0.1
mean = { constant = [0.5] }
"#;
        let d = OracleFile::parse(text).unwrap().build(Path::new(".")).unwrap();
        let x = ImagePlane::zeros(Shape::new(1, 2, 2), 1.0);
        let fine = d.denoise(&x, 10.0, 1.0).unwrap().mean();
        let coarse = d.denoise(&x, 10.0, 50.0).unwrap().mean();
        assert!(fine < 0.0 && coarse > 0.0);
    }

    #[test]
    fn samples_need_spatial_shape() {
        let text = r#"
channels = 1
[[component]]
weight = 1.0
std = 0.1
mean = { samples = [0.0, 1.0] }
"#;
        let file = OracleFile::parse(text).unwrap();
        assert!(file.build(Path::new(".")).is_err());
    }

    #[test]
    fn pattern_is_deterministic() {
        let p = PatternSpec {
            seed: 3,
            waves: 4,
            amplitude: 0.5,
            max_cycles: 3.0,
            base: Some(vec![0.1, 0.2]),
        };
        let a = p.render(Shape::new(2, 8, 8)).unwrap();
        assert_eq!(a, p.render(Shape::new(2, 8, 8)).unwrap());
        assert!(a.max_abs() <= 0.2 + 0.5 * 2.0 + 1e-12);
    }
}
