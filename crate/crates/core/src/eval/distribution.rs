//! Checks a set of samples against a mixture oracle's exact distribution.
//!
//! Reports first and second moments against the closed forms, the largest
//! Kolmogorov–Smirnov distance over random 1-D projections, and the
//! fraction of samples assigned to each component.

use rand::Rng;
use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use crate::denoiser::GaussianMixtureOracle;
use crate::error::{Error, Result};
use crate::image::ImagePlane;
use crate::rng::{rng_stream, Purpose};

pub const MIN_SAMPLES: usize = 1000;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DistributionThresholds {
    /// Largest allowed |sample mean − true mean| in standard errors.
    pub mean_z: f64,
    /// Largest allowed covariance deviation in standard errors.
    pub covariance_z: f64,
    /// KS threshold is `ks_scale / √n`.
    pub ks_scale: f64,
    /// Largest allowed |observed − true| component weight.
    pub weight_tol: f64,
    pub projections: usize,
}

impl Default for DistributionThresholds {
    fn default() -> Self {
        Self {
            mean_z: 4.0,
            covariance_z: 5.0,
            ks_scale: 1.95,
            weight_tol: 0.05,
            projections: 16,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DistributionReport {
    pub samples: usize,
    pub dims: usize,
    pub mean_error: f64,
    pub mean_z: f64,
    pub covariance_error: f64,
    pub covariance_z: f64,
    pub sliced_ks: f64,
    pub ks_threshold: f64,
    pub weights_expected: Vec<f64>,
    pub weights_observed: Vec<f64>,
    pub weight_error: f64,
    pub mean_ok: bool,
    pub covariance_ok: bool,
    pub sliced_ok: bool,
    pub weights_ok: bool,
}

impl DistributionReport {
    pub fn passed(&self) -> bool {
        self.mean_ok && self.covariance_ok && self.sliced_ok && self.weights_ok
    }
}

fn phi(z: f64) -> f64 {
    0.5 * erfc(-z / std::f64::consts::SQRT_2)
}

pub fn distribution_test(
    oracle: &GaussianMixtureOracle,
    samples: &[ImagePlane],
    thresholds: &DistributionThresholds,
) -> Result<DistributionReport> {
    let n = samples.len();
    if n < MIN_SAMPLES {
        return Err(Error::InvalidParameter(format!(
            "distribution test needs at least {MIN_SAMPLES} samples, got {n}"
        )));
    }
    let shape = samples[0].shape();
    if let Some(bad) = samples.iter().find(|s| s.shape() != shape) {
        return Err(Error::ShapeMismatch(format!(
            "sample shapes differ: {shape} and {}",
            bad.shape()
        )));
    }
    let d = shape.len();
    let comps = oracle.components();
    let means: Vec<Vec<f64>> = (0..comps.len())
        .map(|k| Ok(oracle.component_mean(k, shape, 1.0)?.into_vec()))
        .collect::<Result<_>>()?;
    let true_mean: Vec<f64> = (0..d)
        .map(|i| comps.iter().zip(&means).map(|(c, m)| c.weight * m[i]).sum())
        .collect();
    let true_cov = |i: usize, j: usize| -> f64 {
        let second: f64 = comps
            .iter()
            .zip(&means)
            .map(|(c, m)| c.weight * (m[i] * m[j] + if i == j { c.std * c.std } else { 0.0 }))
            .sum();
        second - true_mean[i] * true_mean[j]
    };

    let nf = n as f64;
    let emp_mean: Vec<f64> = (0..d)
        .map(|i| samples.iter().map(|s| s.data()[i]).sum::<f64>() / nf)
        .collect();
    let mut mean_error = 0.0f64;
    let mut mean_z = 0.0f64;
    for i in 0..d {
        let err = (emp_mean[i] - true_mean[i]).abs();
        mean_error = mean_error.max(err);
        mean_z = mean_z.max(err / (true_cov(i, i) / nf).sqrt());
    }

    let mut covariance_error = 0.0f64;
    let mut covariance_z = 0.0f64;
    for i in 0..d {
        for j in i..d {
            let prods: Vec<f64> = samples
                .iter()
                .map(|s| (s.data()[i] - emp_mean[i]) * (s.data()[j] - emp_mean[j]))
                .collect();
            let c = prods.iter().sum::<f64>() / (nf - 1.0);
            let var = prods.iter().map(|p| (p - c).powi(2)).sum::<f64>() / (nf - 1.0);
            let err = (c - true_cov(i, j)).abs();
            covariance_error = covariance_error.max(err);
            covariance_z = covariance_z.max(err / (var / nf).sqrt().max(1e-300));
        }
    }

    let mut rng = rng_stream(0, 0, 0, 0, Purpose::Eval(0x5115ed));
    let mut sliced_ks = 0.0f64;
    for _ in 0..thresholds.projections {
        let mut dir: Vec<f64> = (0..d).map(|_| rng.random::<f64>() - 0.5).collect();
        let norm = dir.iter().map(|v| v * v).sum::<f64>().sqrt();
        dir.iter_mut().for_each(|v| *v /= norm);
        let dot = |v: &[f64]| v.iter().zip(&dir).map(|(a, b)| a * b).sum::<f64>();
        let centers: Vec<f64> = means.iter().map(|m| dot(m)).collect();
        let cdf = |v: f64| -> f64 {
            comps
                .iter()
                .zip(&centers)
                .map(|(c, &mu)| c.weight * phi((v - mu) / c.std))
                .sum()
        };
        let mut proj: Vec<f64> = samples.iter().map(|s| dot(s.data())).collect();
        proj.sort_by(f64::total_cmp);
        for (i, &v) in proj.iter().enumerate() {
            let f = cdf(v);
            let dist = (f - i as f64 / nf).abs().max(((i + 1) as f64 / nf - f).abs());
            sliced_ks = sliced_ks.max(dist);
        }
    }
    let ks_threshold = thresholds.ks_scale / nf.sqrt();

    let mut counts = vec![0usize; comps.len()];
    for s in samples {
        let w = oracle.posterior_weights(s, 0.0)?;
        let k = w
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .map(|(k, _)| k)
            .unwrap_or(0);
        counts[k] += 1;
    }
    let weights_observed: Vec<f64> = counts.iter().map(|&c| c as f64 / nf).collect();
    let weights_expected: Vec<f64> = comps.iter().map(|c| c.weight).collect();
    let weight_error = weights_observed
        .iter()
        .zip(&weights_expected)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);

    Ok(DistributionReport {
        samples: n,
        dims: d,
        mean_error,
        mean_z,
        covariance_error,
        covariance_z,
        sliced_ks,
        ks_threshold,
        mean_ok: mean_z <= thresholds.mean_z,
        covariance_ok: covariance_z <= thresholds.covariance_z,
        sliced_ok: sliced_ks <= ks_threshold,
        weights_ok: weight_error <= thresholds.weight_tol,
        weights_expected,
        weights_observed,
        weight_error,
    })
}
