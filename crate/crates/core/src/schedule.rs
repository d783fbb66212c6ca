//! Noise schedules and the per-timestep coefficients derived from them.
//!
//! Arrays are indexed by timestep `t = 0..=T`; index 0 carries `alpha_bar = 1`
//! and zero noise so that `t - 1` lookups at `t = 1` need no special case.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

/// Offset `s` of the cosine schedule.
pub const COSINE_OFFSET: f64 = 0.008;
/// Upper clip applied to cosine-schedule betas.
pub const COSINE_MAX_BETA: f64 = 0.999;

pub const DEFAULT_BETA_START: f64 = 1e-4;
pub const DEFAULT_BETA_END: f64 = 0.02;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SchedulePreset {
    Linear,
    Cosine,
}

impl SchedulePreset {
    pub fn name(self) -> &'static str {
        match self {
            SchedulePreset::Linear => "linear",
            SchedulePreset::Cosine => "cosine",
        }
    }

    /// Builds the preset with default endpoints.
    pub fn build(self, steps: usize) -> Result<NoiseSchedule> {
        match self {
            SchedulePreset::Linear => {
                NoiseSchedule::linear(steps, DEFAULT_BETA_START, DEFAULT_BETA_END)
            }
            SchedulePreset::Cosine => NoiseSchedule::cosine(steps),
        }
    }
}

impl fmt::Display for SchedulePreset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SchedulePreset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "linear" => Ok(SchedulePreset::Linear),
            "cosine" => Ok(SchedulePreset::Cosine),
            other => Err(Error::Parameter(format!(
                "unknown schedule `{other}` (expected linear or cosine)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NoiseSchedule {
    beta: Vec<f64>,
    alpha: Vec<f64>,
    alpha_bar: Vec<f64>,
    beta_tilde: Vec<f64>,
    sigma: Vec<f64>,
    /// Timestep of the originating schedule for each index. Identity unless
    /// the schedule was produced by [`NoiseSchedule::subsample`].
    timesteps: Vec<usize>,
}

impl NoiseSchedule {
    /// Betas linearly interpolated from `beta_start` at `t = 1` to
    /// `beta_end` at `t = T`.
    pub fn linear(steps: usize, beta_start: f64, beta_end: f64) -> Result<Self> {
        if steps < 2 {
            return Err(Error::Parameter(format!(
                "linear schedule needs T >= 2, got {steps}"
            )));
        }
        if !(beta_start > 0.0 && beta_start <= beta_end && beta_end < 1.0) {
            return Err(Error::Parameter(format!(
                "linear schedule needs 0 < beta_start <= beta_end < 1, got ({beta_start}, {beta_end})"
            )));
        }
        let span = (steps - 1) as f64;
        let betas = (0..steps)
            .map(|i| beta_start + (beta_end - beta_start) * i as f64 / span)
            .collect();
        Self::from_betas(betas)
    }

    /// Cosine schedule: `alpha_bar(t) = f(t) / f(0)` with
    /// `f(t) = cos^2(((t/T + s) / (1 + s)) * pi/2)`, betas clipped at 0.999.
    pub fn cosine(steps: usize) -> Result<Self> {
        if steps < 2 {
            return Err(Error::Parameter(format!(
                "cosine schedule needs T >= 2, got {steps}"
            )));
        }
        let f = |t: usize| {
            let u = (t as f64 / steps as f64 + COSINE_OFFSET) / (1.0 + COSINE_OFFSET);
            (u * std::f64::consts::FRAC_PI_2).cos().powi(2)
        };
        let betas = (1..=steps)
            .map(|t| (1.0 - f(t) / f(t - 1)).min(COSINE_MAX_BETA))
            .collect();
        Self::from_betas(betas)
    }

    /// `betas[i]` is beta at timestep `i + 1`.
    pub fn from_betas(betas: Vec<f64>) -> Result<Self> {
        if let Some((i, b)) = betas
            .iter()
            .enumerate()
            .find(|(_, b)| !(**b > 0.0 && **b < 1.0))
        {
            return Err(Error::Parameter(format!(
                "beta at t = {} is {b}, must lie in (0, 1)",
                i + 1
            )));
        }
        let mut beta = Vec::with_capacity(betas.len() + 1);
        beta.push(0.0);
        beta.extend(betas);
        let mut alpha_bar = Vec::with_capacity(beta.len());
        alpha_bar.push(1.0);
        for t in 1..beta.len() {
            alpha_bar.push(alpha_bar[t - 1] * (1.0 - beta[t]));
        }
        let timesteps = (0..beta.len()).collect();
        Self::assemble(beta, alpha_bar, timesteps)
    }

    fn from_alpha_bar(alpha_bar: Vec<f64>, timesteps: Vec<usize>) -> Result<Self> {
        let mut beta = vec![0.0; alpha_bar.len()];
        for t in 1..alpha_bar.len() {
            beta[t] = 1.0 - alpha_bar[t] / alpha_bar[t - 1];
        }
        Self::assemble(beta, alpha_bar, timesteps)
    }

    fn assemble(beta: Vec<f64>, alpha_bar: Vec<f64>, timesteps: Vec<usize>) -> Result<Self> {
        let n = alpha_bar.len();
        if n < 2 || alpha_bar[0] != 1.0 {
            return Err(Error::Parameter(
                "alpha_bar must start at 1 and have at least one step".into(),
            ));
        }
        for t in 1..n {
            if !(alpha_bar[t] > 0.0 && alpha_bar[t] < alpha_bar[t - 1]) {
                return Err(Error::Parameter(format!(
                    "alpha_bar must be positive and strictly decreasing (t = {t})"
                )));
            }
        }
        let alpha: Vec<f64> = beta.iter().map(|b| 1.0 - b).collect();
        let mut beta_tilde = vec![0.0; n];
        for t in 1..n {
            beta_tilde[t] = (1.0 - alpha_bar[t - 1]) / (1.0 - alpha_bar[t]) * beta[t];
        }
        let sigma = beta_tilde.iter().map(|b| b.sqrt()).collect();
        Ok(NoiseSchedule {
            beta,
            alpha,
            alpha_bar,
            beta_tilde,
            sigma,
            timesteps,
        })
    }

    /// Evenly respaced view with `T'` steps. Step `k` of the view sits on
    /// timestep `round(k * T / T')` of this schedule, so the last step is `T`
    /// and `alpha_bar` agrees exactly at every selected timestep.
    pub fn subsample(&self, steps: usize) -> Result<NoiseSchedule> {
        let total = self.steps();
        if steps == 0 || steps > total {
            return Err(Error::Parameter(format!(
                "respacing needs 1 <= T' <= {total}, got {steps}"
            )));
        }
        if steps == total {
            return Ok(self.clone());
        }
        let mut alpha_bar = vec![1.0];
        let mut timesteps = vec![self.timesteps[0]];
        for k in 1..=steps {
            let t = (2 * k * total + steps) / (2 * steps);
            alpha_bar.push(self.alpha_bar[t]);
            timesteps.push(self.timesteps[t]);
        }
        Self::from_alpha_bar(alpha_bar, timesteps)
    }

    /// Number of steps `T`.
    pub fn steps(&self) -> usize {
        self.alpha_bar.len() - 1
    }

    pub fn check_step(&self, t: usize) -> Result<()> {
        if t == 0 || t > self.steps() {
            Err(Error::Parameter(format!(
                "timestep {t} outside 1..={}",
                self.steps()
            )))
        } else {
            Ok(())
        }
    }

    pub fn beta(&self, t: usize) -> f64 {
        self.beta[t]
    }

    pub fn alpha(&self, t: usize) -> f64 {
        self.alpha[t]
    }

    pub fn alpha_bar(&self, t: usize) -> f64 {
        self.alpha_bar[t]
    }

    pub fn beta_tilde(&self, t: usize) -> f64 {
        self.beta_tilde[t]
    }

    /// Reverse-process standard deviation, `sqrt(beta_tilde)`.
    pub fn sigma(&self, t: usize) -> f64 {
        self.sigma[t]
    }

    /// Timestep of the originating schedule that step `t` corresponds to;
    /// this is what a noise predictor is conditioned on.
    pub fn model_timestep(&self, t: usize) -> usize {
        self.timesteps[t]
    }

    pub fn model_timesteps(&self) -> &[usize] {
        &self.timesteps
    }

    pub fn alpha_bars(&self) -> &[f64] {
        &self.alpha_bar
    }
}
