//! Time discretisation of the probability-flow ODE.
//!
//! With `σ(t) = t`, the noise level of step `i` is `times[i]`. The first
//! `N` entries follow the ρ-warped interpolation between `σ_max` and
//! `σ_min`; a terminal zero is appended so the last step lands on clean
//! data.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScheduleParams {
    pub steps: usize,
    pub sigma_min: f64,
    pub sigma_max: f64,
    pub rho: f64,
}

impl Default for ScheduleParams {
    fn default() -> Self {
        Self {
            steps: crate::defaults::STEPS,
            sigma_min: crate::defaults::SIGMA_MIN,
            sigma_max: crate::defaults::SIGMA_MAX,
            rho: crate::defaults::RHO,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct NoiseSchedule {
    params: ScheduleParams,
    times: Vec<f64>,
}

impl NoiseSchedule {
    pub fn new(steps: usize, sigma_min: f64, sigma_max: f64, rho: f64) -> Result<Self> {
        Self::from_params(ScheduleParams {
            steps,
            sigma_min,
            sigma_max,
            rho,
        })
    }

    pub fn from_params(params: ScheduleParams) -> Result<Self> {
        let ScheduleParams {
            steps,
            sigma_min,
            sigma_max,
            rho,
        } = params;
        if steps < 2 {
            return Err(Error::InvalidParameter(format!(
                "schedule needs at least 2 steps, got {steps}"
            )));
        }
        if !(sigma_min > 0.0 && sigma_min < sigma_max && sigma_max.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "need 0 < sigma_min < sigma_max, got sigma_min={sigma_min}, sigma_max={sigma_max}"
            )));
        }
        if !(rho > 0.0 && rho.is_finite()) {
            return Err(Error::InvalidParameter(format!("rho must be positive, got {rho}")));
        }

        let inv_rho = 1.0 / rho;
        let hi = sigma_max.powf(inv_rho);
        let lo = sigma_min.powf(inv_rho);
        let last = (steps - 1) as f64;
        let mut times: Vec<f64> = (0..steps)
            .map(|i| (hi + (i as f64 / last) * (lo - hi)).powf(rho))
            .collect();
        // Pin the endpoints; powf round trips can be off by an ulp.
        times[0] = sigma_max;
        times[steps - 1] = sigma_min;
        times.push(0.0);
        Ok(Self { params, times })
    }

    pub fn params(&self) -> ScheduleParams {
        self.params
    }

    pub fn steps(&self) -> usize {
        self.params.steps
    }

    pub fn sigma_min(&self) -> f64 {
        self.params.sigma_min
    }

    pub fn sigma_max(&self) -> f64 {
        self.params.sigma_max
    }

    pub fn rho(&self) -> f64 {
        self.params.rho
    }

    /// `t_0 .. t_N`, strictly decreasing, ending in exactly zero.
    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn time(&self, i: usize) -> f64 {
        self.times[i]
    }

    /// Noise level at step `i`; identical to the time under `σ(t) = t`.
    pub fn sigma(&self, i: usize) -> f64 {
        self.times[i]
    }
}
