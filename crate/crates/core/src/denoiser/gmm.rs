//! Isotropic Gaussian mixtures with an exact posterior-mean denoiser.
//!
//! For `p(x₀) = Σ w_k N(μ_k, s_k² I)` and `x = x₀ + σ n`, the noisy density
//! is `Σ w_k N(μ_k, (s_k² + σ²) I)` and
//!
//! ```text
//! E[x₀ | x] = Σ_k γ_k(x) (s_k² x + σ² μ_k) / (s_k² + σ²)
//! ```
//!
//! with responsibilities `γ_k ∝ w_k N(x; μ_k, (s_k² + σ²) I)`, evaluated in
//! the log domain.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use super::{check_sigma, Denoiser};
use crate::error::{Error, Result};
use crate::image::{ImagePlane, Shape};

#[derive(Clone, Debug, PartialEq)]
pub enum Mean {
    /// One value per channel, broadcast over every pixel. Accepts any
    /// spatial extent.
    PerChannel(Vec<f64>),
    /// A full mean image of fixed shape.
    Image(ImagePlane),
}

impl Mean {
    fn channels(&self) -> usize {
        match self {
            Mean::PerChannel(v) => v.len(),
            Mean::Image(img) => img.channels(),
        }
    }

    #[inline]
    fn value(&self, plane_len: usize, i: usize) -> f64 {
        match self {
            Mean::PerChannel(v) => v[i / plane_len],
            Mean::Image(img) => img.data()[i],
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MixtureComponent {
    pub weight: f64,
    pub mean: Mean,
    pub std: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GaussianMixtureOracle {
    components: Vec<MixtureComponent>,
    /// Fixed shape when any component carries a mean image.
    shape: Option<Shape>,
    channels: usize,
}

impl GaussianMixtureOracle {
    pub fn new(components: Vec<MixtureComponent>) -> Result<Self> {
        if components.is_empty() {
            return Err(Error::InvalidParameter("mixture needs at least one component".into()));
        }
        let total: f64 = components.iter().map(|c| c.weight).sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidParameter(format!(
                "mixture weights sum to {total}, expected 1"
            )));
        }
        let channels = components[0].mean.channels();
        let mut shape = None;
        for (k, c) in components.iter().enumerate() {
            if !(c.weight > 0.0 && c.weight <= 1.0) {
                return Err(Error::InvalidParameter(format!(
                    "component {k}: weight {} outside (0, 1]",
                    c.weight
                )));
            }
            if !(c.std > 0.0 && c.std.is_finite()) {
                return Err(Error::InvalidParameter(format!(
                    "component {k}: std must be positive, got {}",
                    c.std
                )));
            }
            if c.mean.channels() != channels {
                return Err(Error::ShapeMismatch(format!(
                    "component {k} has {} channels, component 0 has {channels}",
                    c.mean.channels()
                )));
            }
            if let Mean::Image(img) = &c.mean {
                img.ensure_finite("mixture mean")?;
                match shape {
                    None => shape = Some(img.shape()),
                    Some(s) if s != img.shape() => {
                        return Err(Error::ShapeMismatch(format!(
                            "component {k} mean is {}, expected {s}",
                            img.shape()
                        )))
                    }
                    _ => {}
                }
            }
        }
        Ok(Self {
            components,
            shape,
            channels,
        })
    }

    /// Single Gaussian with a per-channel constant mean.
    pub fn single(mean: Vec<f64>, std: f64) -> Result<Self> {
        Self::new(vec![MixtureComponent {
            weight: 1.0,
            mean: Mean::PerChannel(mean),
            std,
        }])
    }

    pub fn components(&self) -> &[MixtureComponent] {
        &self.components
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn fixed_shape(&self) -> Option<Shape> {
        self.shape
    }

    fn check_input(&self, x: &ImagePlane) -> Result<()> {
        match self.shape {
            Some(s) if s != x.shape() => Err(Error::ShapeMismatch(format!(
                "mixture expects {s}, got {}",
                x.shape()
            ))),
            None if x.channels() != self.channels => Err(Error::ShapeMismatch(format!(
                "mixture expects {} channels, got {}",
                self.channels,
                x.channels()
            ))),
            _ => x.ensure_finite("denoiser input"),
        }
    }

    /// Unnormalised log responsibilities `ln w_k + ln N(x; μ_k, (s_k²+σ²) I)`.
    fn log_terms(&self, x: &ImagePlane, sigma: f64) -> Vec<f64> {
        let n = x.data().len();
        let plane = x.shape().plane_len();
        let half_dim = 0.5 * n as f64;
        let ln_2pi = (2.0 * std::f64::consts::PI).ln();
        self.components
            .iter()
            .map(|c| {
                let var = c.std * c.std + sigma * sigma;
                let dist: f64 = x
                    .data()
                    .iter()
                    .enumerate()
                    .map(|(i, &v)| {
                        let d = v - c.mean.value(plane, i);
                        d * d
                    })
                    .sum();
                c.weight.ln() - half_dim * (ln_2pi + var.ln()) - 0.5 * dist / var
            })
            .collect()
    }

    fn responsibilities(&self, x: &ImagePlane, sigma: f64) -> (Vec<f64>, f64) {
        let logs = self.log_terms(x, sigma);
        let max = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut gamma: Vec<f64> = logs.iter().map(|l| (l - max).exp()).collect();
        let total: f64 = gamma.iter().sum();
        for g in &mut gamma {
            *g /= total;
        }
        (gamma, max + total.ln())
    }

    /// Posterior responsibilities of each component given noisy `x`.
    pub fn posterior_weights(&self, x: &ImagePlane, sigma: f64) -> Result<Vec<f64>> {
        check_sigma(sigma)?;
        self.check_input(x)?;
        Ok(self.responsibilities(x, sigma).0)
    }

    /// `ln p(x; σ)` of the noise-convolved mixture.
    pub fn log_density(&self, x: &ImagePlane, sigma: f64) -> Result<f64> {
        check_sigma(sigma)?;
        self.check_input(x)?;
        Ok(self.responsibilities(x, sigma).1)
    }

    pub fn posterior_mean(&self, x: &ImagePlane, sigma: f64) -> Result<ImagePlane> {
        check_sigma(sigma)?;
        self.check_input(x)?;
        if sigma == 0.0 {
            return Ok(x.clone());
        }
        let (gamma, _) = self.responsibilities(x, sigma);
        let s2 = sigma * sigma;
        // out_i = a·x_i + Σ_k b_k μ_k,i
        let mut a = 0.0;
        let b: Vec<f64> = self
            .components
            .iter()
            .zip(&gamma)
            .map(|(c, &g)| {
                let var = c.std * c.std + s2;
                a += g * c.std * c.std / var;
                g * s2 / var
            })
            .collect();
        let plane = x.shape().plane_len();
        let mut out = x.clone();
        for (i, v) in out.data_mut().iter_mut().enumerate() {
            let mut acc = a * *v;
            for (c, &bk) in self.components.iter().zip(&b) {
                acc += bk * c.mean.value(plane, i);
            }
            *v = acc;
        }
        Ok(out)
    }

    /// `Σ w_k μ_k` evaluated on `shape`.
    pub fn mixture_mean(&self, shape: Shape, resolution: f64) -> Result<ImagePlane> {
        let mut out = ImagePlane::zeros(shape, resolution);
        self.check_input(&out)?;
        let plane = shape.plane_len();
        for (i, v) in out.data_mut().iter_mut().enumerate() {
            *v = self
                .components
                .iter()
                .map(|c| c.weight * c.mean.value(plane, i))
                .sum();
        }
        Ok(out)
    }

    /// Mean of component `k` evaluated on `shape`.
    pub fn component_mean(&self, k: usize, shape: Shape, resolution: f64) -> Result<ImagePlane> {
        let c = self.components.get(k).ok_or_else(|| {
            Error::InvalidParameter(format!("component {k} out of {}", self.components.len()))
        })?;
        let mut out = ImagePlane::zeros(shape, resolution);
        self.check_input(&out)?;
        let plane = shape.plane_len();
        for (i, v) in out.data_mut().iter_mut().enumerate() {
            *v = c.mean.value(plane, i);
        }
        Ok(out)
    }

    /// Draws an exact sample; returns it with the index of its component.
    pub fn sample<R: Rng + ?Sized>(
        &self,
        shape: Shape,
        resolution: f64,
        rng: &mut R,
    ) -> Result<(ImagePlane, usize)> {
        let mut out = ImagePlane::zeros(shape, resolution);
        self.check_input(&out)?;
        let u: f64 = rng.random();
        let mut acc = 0.0;
        let mut k = self.components.len() - 1;
        for (j, c) in self.components.iter().enumerate() {
            acc += c.weight;
            if u < acc {
                k = j;
                break;
            }
        }
        let c = &self.components[k];
        let plane = shape.plane_len();
        for (i, v) in out.data_mut().iter_mut().enumerate() {
            let n: f64 = StandardNormal.sample(rng);
            *v = c.mean.value(plane, i) + c.std * n;
        }
        Ok((out, k))
    }
}

impl Denoiser for GaussianMixtureOracle {
    fn denoise(&self, x: &ImagePlane, sigma: f64, _resolution: f64) -> Result<ImagePlane> {
        self.posterior_mean(x, sigma)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ResolutionBand {
    /// Inclusive upper bound of the band in µm/px.
    pub max_resolution: f64,
    pub oracle: GaussianMixtureOracle,
}

/// Picks a different mixture depending on the spatial resolution `s`, so
/// resolution conditioning is observable end to end.
#[derive(Clone, Debug, PartialEq)]
pub struct ResolutionSwitched {
    bands: Vec<ResolutionBand>,
}

impl ResolutionSwitched {
    pub fn new(mut bands: Vec<ResolutionBand>) -> Result<Self> {
        if bands.is_empty() {
            return Err(Error::InvalidParameter("need at least one resolution band".into()));
        }
        if bands.iter().any(|b| b.max_resolution.is_nan()) {
            return Err(Error::InvalidParameter("band bound is NaN".into()));
        }
        bands.sort_by(|a, b| a.max_resolution.total_cmp(&b.max_resolution));
        Ok(Self { bands })
    }

    pub fn bands(&self) -> &[ResolutionBand] {
        &self.bands
    }

    /// Band for resolution `s`: the first whose bound is `>= s`, else the last.
    pub fn select(&self, resolution: f64) -> &GaussianMixtureOracle {
        &self
            .bands
            .iter()
            .find(|b| resolution <= b.max_resolution)
            .unwrap_or_else(|| self.bands.last().expect("non-empty"))
            .oracle
    }
}

impl Denoiser for ResolutionSwitched {
    fn denoise(&self, x: &ImagePlane, sigma: f64, resolution: f64) -> Result<ImagePlane> {
        self.select(resolution).posterior_mean(x, sigma)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn scalar(v: f64) -> ImagePlane {
        ImagePlane::filled(Shape::new(1, 1, 1), v, 1.0)
    }

    fn two_modes(w: f64, s: f64) -> GaussianMixtureOracle {
        GaussianMixtureOracle::new(vec![
            MixtureComponent {
                weight: w,
                mean: Mean::PerChannel(vec![-1.0]),
                std: s,
            },
            MixtureComponent {
                weight: 1.0 - w,
                mean: Mean::PerChannel(vec![1.0]),
                std: s,
            },
        ])
        .unwrap()
    }

    /// Brute-force E[x₀ | x] by Simpson quadrature over the prior; independent
    /// of the closed form.
    fn quadrature_posterior_mean(
        comps: &[(f64, f64, f64)],
        x: f64,
        sigma: f64,
    ) -> f64 {
        let lo = comps
            .iter()
            .map(|c| c.1 - 12.0 * c.2)
            .fold(x - 12.0 * sigma, f64::min);
        let hi = comps
            .iter()
            .map(|c| c.1 + 12.0 * c.2)
            .fold(x + 12.0 * sigma, f64::max);
        let n = 200_000usize;
        let h = (hi - lo) / n as f64;
        let log_term = |t: f64| -> f64 {
            let prior: f64 = comps
                .iter()
                .map(|&(w, m, s)| w * (-(t - m) * (t - m) / (2.0 * s * s)).exp() / s)
                .sum();
            prior.ln() - (x - t) * (x - t) / (2.0 * sigma * sigma)
        };
        let peak = (0..=n)
            .map(|i| log_term(lo + i as f64 * h))
            .fold(f64::NEG_INFINITY, f64::max);
        let (mut num, mut den) = (0.0, 0.0);
        for i in 0..=n {
            let t = lo + i as f64 * h;
            let coef = if i == 0 || i == n {
                1.0
            } else if i % 2 == 1 {
                4.0
            } else {
                2.0
            };
            let v = (log_term(t) - peak).exp();
            num += coef * t * v;
            den += coef * v;
        }
        num / den
    }

    #[test]
    fn single_component_is_linear_shrinkage() {
        let o = GaussianMixtureOracle::single(vec![0.3], 0.5).unwrap();
        let x = scalar(1.7);
        let sigma = 2.0;
        let got = o.denoise(&x, sigma, 1.0).unwrap().data()[0];
        let want = (0.25 * 1.7 + 4.0 * 0.3) / (0.25 + 4.0);
        assert!((got - want).abs() < 1e-15);
    }

    #[test]
    fn zero_sigma_is_identity() {
        let o = two_modes(0.3, 0.2);
        let x = scalar(0.123);
        assert_eq!(o.denoise(&x, 0.0, 1.0).unwrap(), x);
    }

    #[test]
    fn symmetric_posterior_at_origin() {
        let o = two_modes(0.5, 0.1);
        let got = o.denoise(&scalar(0.0), 1.0, 1.0).unwrap().data()[0];
        assert!(got.abs() < 1e-15);
    }

    #[test]
    fn matches_quadrature_at_half() {
        let o = two_modes(0.5, 0.1);
        let got = o.denoise(&scalar(0.5), 1.0, 1.0).unwrap().data()[0];
        let want = quadrature_posterior_mean(&[(0.5, -1.0, 0.1), (0.5, 1.0, 0.1)], 0.5, 1.0);
        assert!((got - want).abs() < 1e-9, "{got} vs {want}");
    }

    #[test]
    fn large_sigma_tends_to_mixture_mean() {
        let o = two_modes(0.3, 0.2);
        let got = o.denoise(&scalar(0.8), 1e6, 1.0).unwrap().data()[0];
        let mean = -0.3 + 0.7 * 1.0;
        assert!((got - mean).abs() < 1e-3);
    }

    #[test]
    fn rejects_bad_input() {
        let o = GaussianMixtureOracle::new(vec![MixtureComponent {
            weight: 1.0,
            mean: Mean::Image(ImagePlane::zeros(Shape::new(1, 2, 2), 1.0)),
            std: 0.1,
        }])
        .unwrap();
        assert!(matches!(
            o.denoise(&scalar(0.0), 1.0, 1.0),
            Err(Error::ShapeMismatch(_))
        ));
        let nan = ImagePlane::filled(Shape::new(1, 2, 2), f64::NAN, 1.0);
        assert!(matches!(o.denoise(&nan, 1.0, 1.0), Err(Error::NonFinite(_))));
        assert!(o.denoise(&ImagePlane::zeros(Shape::new(1, 2, 2), 1.0), -1.0, 1.0).is_err());
    }

    #[test]
    fn weights_must_sum_to_one() {
        let r = GaussianMixtureOracle::new(vec![MixtureComponent {
            weight: 0.9,
            mean: Mean::PerChannel(vec![0.0]),
            std: 1.0,
        }]);
        assert!(r.is_err());
    }

    #[test]
    fn extreme_sigma_stays_finite() {
        let o = two_modes(0.5, 0.01);
        let x = ImagePlane::filled(Shape::new(1, 32, 32), 40.0, 1.0);
        for sigma in [1e-4, 0.002, 1.0, 80.0, 1e4] {
            assert!(o.denoise(&x, sigma, 1.0).unwrap().is_finite());
        }
    }

    #[test]
    fn resolution_switch_selects_band() {
        let lo = GaussianMixtureOracle::single(vec![-0.5], 0.1).unwrap();
        let hi = GaussianMixtureOracle::single(vec![0.5], 0.1).unwrap();
        let sw = ResolutionSwitched::new(vec![
            ResolutionBand {
                max_resolution: 10.0,
                oracle: lo.clone(),
            },
            ResolutionBand {
                max_resolution: f64::INFINITY,
                oracle: hi.clone(),
            },
        ])
        .unwrap();
        let x = scalar(0.0);
        assert_eq!(sw.denoise(&x, 1.0, 1.0).unwrap(), lo.denoise(&x, 1.0, 1.0).unwrap());
        assert_eq!(sw.denoise(&x, 1.0, 50.0).unwrap(), hi.denoise(&x, 1.0, 1.0).unwrap());
    }

    #[test]
    fn sampler_hits_component_weights() {
        let o = two_modes(0.25, 0.1);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n = 20_000;
        let ones = (0..n)
            .filter(|_| o.sample(Shape::new(1, 1, 1), 1.0, &mut rng).unwrap().1 == 1)
            .count();
        let frac = ones as f64 / n as f64;
        assert!((frac - 0.75).abs() < 0.02, "{frac}");
    }

    fn arb_mixture() -> impl Strategy<Value = Vec<(f64, f64, f64)>> {
        prop::collection::vec((0.05f64..1.0, -2.0f64..2.0, 0.05f64..1.0), 1..=4).prop_map(
            |raw| {
                let total: f64 = raw.iter().map(|c| c.0).sum();
                raw.into_iter().map(|(w, m, s)| (w / total, m, s)).collect()
            },
        )
    }

    fn build(comps: &[(f64, f64, f64)]) -> GaussianMixtureOracle {
        let mut comps: Vec<MixtureComponent> = comps
            .iter()
            .map(|&(w, m, s)| MixtureComponent {
                weight: w,
                mean: Mean::PerChannel(vec![m]),
                std: s,
            })
            .collect();
        // Absorb rounding so the weights sum to one within 1e-12.
        let total: f64 = comps.iter().map(|c| c.weight).sum();
        comps[0].weight += 1.0 - total;
        GaussianMixtureOracle::new(comps).unwrap()
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn closed_form_matches_quadrature(
            comps in arb_mixture(),
            x in -3.0f64..3.0,
            sigma in 0.05f64..3.0,
        ) {
            let o = build(&comps);
            let got = o.denoise(&scalar(x), sigma, 1.0).unwrap().data()[0];
            let want = quadrature_posterior_mean(&comps, x, sigma);
            prop_assert!((got - want).abs() <= 1e-6, "{} vs {}", got, want);
        }

        #[test]
        fn score_matches_finite_difference(
            comps in arb_mixture(),
            x in -3.0f64..3.0,
            sigma in 0.1f64..5.0,
        ) {
            let o = build(&comps);
            let d = o.denoise(&scalar(x), sigma, 1.0).unwrap().data()[0];
            let score = (d - x) / (sigma * sigma);
            let h = 1e-5;
            let fd = (o.log_density(&scalar(x + h), sigma).unwrap()
                - o.log_density(&scalar(x - h), sigma).unwrap())
                / (2.0 * h);
            let scale = score.abs().max(1e-3);
            prop_assert!((score - fd).abs() / scale <= 1e-4, "{} vs {}", score, fd);
        }
    }
}
