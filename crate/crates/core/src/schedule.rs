//! Linear variance schedules and the coefficients derived from them.
//!
//! Timesteps are 1-indexed: `t` ranges over `1..=T`. The cumulative product
//! before the first step is taken to be 1.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScheduleConfig {
    pub kind: String,
    #[serde(rename = "T")]
    pub steps: usize,
    pub beta_start: f64,
    pub beta_end: f64,
}

impl Default for ScheduleConfig {
    /// Desk-scale default: 200 steps with endpoints rescaled from the
    /// conventional 1000-step values (1e-4, 0.02) so that the final
    /// cumulative product is still close to zero.
    fn default() -> Self {
        Self {
            kind: "linear".into(),
            steps: 200,
            beta_start: 5e-4,
            beta_end: 0.1,
        }
    }
}

impl ScheduleConfig {
    /// 2000 linear steps from 1e-4 to 0.02.
    pub fn full_scale() -> Self {
        Self {
            kind: "linear".into(),
            steps: 2000,
            beta_start: 1e-4,
            beta_end: 0.02,
        }
    }

    pub fn build(&self) -> Result<NoiseSchedule> {
        if self.kind != "linear" {
            return Err(Error::Configuration(format!(
                "unsupported schedule kind {:?}",
                self.kind
            )));
        }
        NoiseSchedule::linear(self.steps, self.beta_start, self.beta_end)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NoiseSchedule {
    betas: Vec<f64>,
    alphas: Vec<f64>,
    alpha_bars: Vec<f64>,
}

/// Coefficients of the closed-form forward marginal and the reverse posterior
/// at one timestep.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepCoeffs {
    pub sqrt_alpha_bar: f64,
    pub sqrt_one_minus_alpha_bar: f64,
    pub posterior_variance: f64,
}

impl NoiseSchedule {
    /// Betas linearly interpolated from `beta_start` to `beta_end`, inclusive.
    pub fn linear(steps: usize, beta_start: f64, beta_end: f64) -> Result<Self> {
        if steps == 0 {
            return Err(Error::param("T must be at least 1"));
        }
        if !(beta_start > 0.0) {
            return Err(Error::param(format!("beta_start = {beta_start} must be > 0")));
        }
        if !(beta_end < 1.0) {
            return Err(Error::param(format!("beta_end = {beta_end} must be < 1")));
        }
        if beta_start > beta_end {
            return Err(Error::param(format!(
                "beta_start = {beta_start} must not exceed beta_end = {beta_end}"
            )));
        }
        let betas: Vec<f64> = if steps == 1 {
            vec![beta_start]
        } else {
            let span = beta_end - beta_start;
            (0..steps)
                .map(|i| beta_start + span * i as f64 / (steps - 1) as f64)
                .collect()
        };
        Self::from_betas(betas)
    }

    pub fn from_betas(betas: Vec<f64>) -> Result<Self> {
        if betas.is_empty() {
            return Err(Error::param("schedule needs at least one beta"));
        }
        if let Some(b) = betas.iter().find(|b| !(**b > 0.0 && **b < 1.0)) {
            return Err(Error::param(format!("beta {b} outside (0, 1)")));
        }
        let alphas: Vec<f64> = betas.iter().map(|b| 1.0 - b).collect();
        let mut alpha_bars = Vec::with_capacity(alphas.len());
        let mut acc = 1.0;
        for a in &alphas {
            acc *= a;
            alpha_bars.push(acc);
        }
        if !(acc > 1e-12) {
            return Err(Error::param(format!(
                "final alpha_bar {acc:e} underflows; shorten the schedule or lower beta_end"
            )));
        }
        Ok(Self {
            betas,
            alphas,
            alpha_bars,
        })
    }

    /// Number of timesteps `T`.
    pub fn len(&self) -> usize {
        self.betas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.betas.is_empty()
    }

    pub fn betas(&self) -> &[f64] {
        &self.betas
    }

    pub fn alphas(&self) -> &[f64] {
        &self.alphas
    }

    pub fn alpha_bars(&self) -> &[f64] {
        &self.alpha_bars
    }

    pub fn check_t(&self, t: usize) -> Result<()> {
        if t == 0 || t > self.len() {
            return Err(Error::Index {
                index: t,
                max: self.len(),
            });
        }
        Ok(())
    }

    pub fn beta(&self, t: usize) -> Result<f64> {
        self.check_t(t)?;
        Ok(self.betas[t - 1])
    }

    pub fn alpha(&self, t: usize) -> Result<f64> {
        self.check_t(t)?;
        Ok(self.alphas[t - 1])
    }

    /// Cumulative product up to `t`; `t = 0` yields 1.
    pub fn alpha_bar(&self, t: usize) -> Result<f64> {
        if t == 0 {
            return Ok(1.0);
        }
        self.check_t(t)?;
        Ok(self.alpha_bars[t - 1])
    }

    pub fn coeffs_at(&self, t: usize) -> Result<StepCoeffs> {
        self.check_t(t)?;
        let ab = self.alpha_bars[t - 1];
        let beta = self.betas[t - 1];
        // The closed form degenerates to 0 at t = 1; report beta_1 there. The
        // ancestral sampler adds no noise at t = 1 either way.
        let posterior_variance = if t == 1 {
            beta
        } else {
            (1.0 - self.alpha_bars[t - 2]) / (1.0 - ab) * beta
        };
        Ok(StepCoeffs {
            sqrt_alpha_bar: ab.sqrt(),
            sqrt_one_minus_alpha_bar: (1.0 - ab).sqrt(),
            posterior_variance,
        })
    }

    /// `count` timesteps evenly spaced over `1..=T`, strictly decreasing,
    /// always starting at `T` and ending at 1.
    pub fn evenly_spaced_steps(&self, count: usize) -> Vec<usize> {
        let t_max = self.len();
        let count = count.clamp(1, t_max);
        if count == 1 {
            return vec![t_max];
        }
        let mut steps: Vec<usize> = (0..count)
            .map(|i| {
                let frac = i as f64 / (count - 1) as f64;
                (t_max as f64 - frac * (t_max - 1) as f64).round() as usize
            })
            .collect();
        steps.dedup();
        steps
    }
}
