//! Exposure-bias diagnostics.
//!
//! A forward trajectory is built from clean data with the closed-form
//! marginal; a reverse trajectory starts from the forward sample at `s + 1`
//! and runs deterministic DDIM steps with the predictor under test. Both are
//! then compared subband by subband, on the noisy samples and on their
//! one-shot `x0` reconstructions.
//!
//! [`verify_bias_moments`] checks the closed-form mean and variance of one reverse
//! step under the synthetic reconstruction model by Monte-Carlo.

use std::fmt::{self, Write as _};

use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::model::{diffuse, reconstruct_x0, ShrinkageParams, NoisePredictor};
use crate::rng::{self, Domain};
use crate::sampler::{ddim_update, predict_checked};
use crate::schedule::NoiseSchedule;
use crate::tensor::TensorBatch;
use crate::wavelet::{dwt2, subband_energy_per_element, Subband};

/// How the forward trajectory draws its noise.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ForwardNoise {
    /// Fresh noise per (element, step); only marginals are meaningful.
    #[default]
    Independent,
    /// One noise draw per element reused at every step, so the forward
    /// trajectory is the path a perfect DDIM sampler would retrace.
    Shared,
}

/// Default simulation start, `floor(0.6 * T')`.
pub fn default_start(steps: usize) -> usize {
    steps * 3 / 5
}

/// Forward and reverse samples aligned on `timesteps = [s, s-1, ..., 0]`.
#[derive(Debug, Clone)]
pub struct BiasTrajectories {
    pub timesteps: Vec<usize>,
    /// Shared starting point `x_{s+1}`.
    pub start: TensorBatch,
    pub forward: Vec<TensorBatch>,
    pub reverse: Vec<TensorBatch>,
}

fn check_start(sched: &NoiseSchedule, s: usize) -> Result<()> {
    if s + 1 > sched.steps() {
        return Err(Error::Parameter(format!(
            "simulation start s = {s} needs s + 1 <= {}",
            sched.steps()
        )));
    }
    Ok(())
}

fn forward_sample(
    sched: &NoiseSchedule,
    x0: &TensorBatch,
    t: usize,
    seed: u64,
    noise: ForwardNoise,
) -> Result<TensorBatch> {
    if t == 0 {
        return Ok(x0.clone());
    }
    let tag = match noise {
        ForwardNoise::Independent => t as u64,
        ForwardNoise::Shared => 0,
    };
    let eps = TensorBatch::standard_normal(x0.shape(), seed, Domain::Forward, tag);
    diffuse(sched, x0, &eps, t)
}

pub fn simulate_bias<P: NoisePredictor + ?Sized>(
    pred: &P,
    sched: &NoiseSchedule,
    x0: &TensorBatch,
    s: usize,
    seed: u64,
) -> Result<BiasTrajectories> {
    simulate_bias_with_noise(pred, sched, x0, s, seed, ForwardNoise::Independent)
}

pub fn simulate_bias_with_noise<P: NoisePredictor + ?Sized>(
    pred: &P,
    sched: &NoiseSchedule,
    x0: &TensorBatch,
    s: usize,
    seed: u64,
    noise: ForwardNoise,
) -> Result<BiasTrajectories> {
    check_start(sched, s)?;
    x0.ensure_finite("clean data")?;
    let start = forward_sample(sched, x0, s + 1, seed, noise)?;
    let mut timesteps = Vec::with_capacity(s + 1);
    let mut forward = Vec::with_capacity(s + 1);
    let mut reverse = Vec::with_capacity(s + 1);
    let mut x = start.clone();
    for t in (0..=s).rev() {
        let eps = predict_checked(pred, sched, &x, t + 1)?;
        x = ddim_update(sched, &x, &eps, t + 1, t)?;
        timesteps.push(t);
        forward.push(forward_sample(sched, x0, t, seed, noise)?);
        reverse.push(x.clone());
    }
    Ok(BiasTrajectories {
        timesteps,
        start,
        forward,
        reverse,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Source {
    Forward,
    Reverse,
    ForwardRecon,
    ReverseRecon,
}

impl Source {
    pub const ALL: [Source; 4] = [
        Source::Forward,
        Source::Reverse,
        Source::ForwardRecon,
        Source::ReverseRecon,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Source::Forward => "forward",
            Source::Reverse => "reverse",
            Source::ForwardRecon => "forward_recon",
            Source::ReverseRecon => "reverse_recon",
        }
    }
}

impl fmt::Display for Source {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnergyRow {
    pub t: usize,
    pub source: Source,
    pub subband: Subband,
    pub energy: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct EnergyCurve {
    pub rows: Vec<EnergyRow>,
}

impl EnergyCurve {
    pub fn get(&self, t: usize, source: Source, subband: Subband) -> Option<f64> {
        self.rows
            .iter()
            .find(|r| r.t == t && r.source == source && r.subband == subband)
            .map(|r| r.energy)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("t,source,subband,energy\n");
        for r in &self.rows {
            let _ = writeln!(out, "{},{},{},{:e}", r.t, r.source, r.subband, r.energy);
        }
        out
    }
}

/// Paired differences `a - b` of per-element energies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Comparison {
    ReverseMinusForward,
    ReverseReconMinusForwardRecon,
    ForwardReconMinusData,
}

impl Comparison {
    pub const ALL: [Comparison; 3] = [
        Comparison::ReverseMinusForward,
        Comparison::ReverseReconMinusForwardRecon,
        Comparison::ForwardReconMinusData,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Comparison::ReverseMinusForward => "reverse-forward",
            Comparison::ReverseReconMinusForwardRecon => "reverse_recon-forward_recon",
            Comparison::ForwardReconMinusData => "forward_recon-data",
        }
    }
}

impl fmt::Display for Comparison {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Mean paired difference and its Monte-Carlo standard error across batch
/// elements.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnergyGap {
    pub t: usize,
    pub comparison: Comparison,
    pub subband: Subband,
    pub diff: f64,
    pub stderr: f64,
}

impl EnergyGap {
    /// `diff / stderr`; infinite-signed for an exactly known nonzero gap.
    pub fn z(&self) -> f64 {
        if self.stderr > 0.0 {
            self.diff / self.stderr
        } else if self.diff == 0.0 {
            0.0
        } else {
            self.diff.signum() * f64::INFINITY
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnergyReport {
    pub curve: EnergyCurve,
    pub gaps: Vec<EnergyGap>,
}

impl EnergyReport {
    pub fn gap(&self, t: usize, comparison: Comparison, subband: Subband) -> Option<&EnergyGap> {
        self.gaps
            .iter()
            .find(|g| g.t == t && g.comparison == comparison && g.subband == subband)
    }

    pub fn gaps_csv(&self) -> String {
        let mut out = String::from("t,comparison,subband,diff,stderr\n");
        for g in &self.gaps {
            let _ = writeln!(
                out,
                "{},{},{},{:e},{:e}",
                g.t, g.comparison, g.subband, g.diff, g.stderr
            );
        }
        out
    }
}

fn paired(a: &[f64], b: &[f64]) -> (f64, f64) {
    let n = a.len() as f64;
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let mean = d.iter().sum::<f64>() / n;
    if a.len() < 2 {
        return (mean, 0.0);
    }
    let var = d.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

struct Collector {
    data: [Vec<f64>; 4],
    report: EnergyReport,
}

impl Collector {
    fn new(x0: &TensorBatch) -> Result<Self> {
        Ok(Collector {
            data: subband_energy_per_element(&dwt2(x0)?),
            report: EnergyReport {
                curve: EnergyCurve::default(),
                gaps: Vec::new(),
            },
        })
    }

    /// Samples in [`Source::ALL`] order.
    fn push(&mut self, t: usize, samples: [&TensorBatch; 4]) -> Result<()> {
        let mut per = Vec::with_capacity(4);
        for x in samples {
            per.push(subband_energy_per_element(&dwt2(x)?));
        }
        for (source, energies) in Source::ALL.iter().zip(&per) {
            for (band, e) in Subband::ALL.iter().zip(energies) {
                self.report.curve.rows.push(EnergyRow {
                    t,
                    source: *source,
                    subband: *band,
                    energy: e.iter().sum::<f64>() / e.len() as f64,
                });
            }
        }
        for comparison in Comparison::ALL {
            let (a, b) = match comparison {
                Comparison::ReverseMinusForward => (&per[1], &per[0]),
                Comparison::ReverseReconMinusForwardRecon => (&per[3], &per[2]),
                Comparison::ForwardReconMinusData => (&per[2], &self.data),
            };
            for (i, band) in Subband::ALL.iter().enumerate() {
                let (diff, stderr) = paired(&a[i], &b[i]);
                self.report.gaps.push(EnergyGap {
                    t,
                    comparison,
                    subband: *band,
                    diff,
                    stderr,
                });
            }
        }
        Ok(())
    }
}

fn recon<P: NoisePredictor + ?Sized>(
    pred: &P,
    sched: &NoiseSchedule,
    x: &TensorBatch,
    t: usize,
) -> Result<TensorBatch> {
    if t == 0 {
        return Ok(x.clone());
    }
    let eps = predict_checked(pred, sched, x, t)?;
    reconstruct_x0(sched, x, &eps, t)
}

/// Subband energies of all four sources at every common timestep.
pub fn energy_curves<P: NoisePredictor + ?Sized>(
    traj: &BiasTrajectories,
    pred: &P,
    sched: &NoiseSchedule,
) -> Result<EnergyCurve> {
    Ok(energy_report(traj, pred, sched)?.curve)
}

/// [`energy_curves`] plus paired gaps; the data reference is the forward
/// sample at `t = 0`.
pub fn energy_report<P: NoisePredictor + ?Sized>(
    traj: &BiasTrajectories,
    pred: &P,
    sched: &NoiseSchedule,
) -> Result<EnergyReport> {
    let n = traj.timesteps.len();
    if n == 0 || traj.forward.len() != n || traj.reverse.len() != n {
        return Err(Error::Protocol(format!(
            "{} timesteps, {} forward and {} reverse samples",
            n,
            traj.forward.len(),
            traj.reverse.len()
        )));
    }
    if traj.timesteps.last() != Some(&0) || traj.timesteps.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::Protocol(
            "timesteps must strictly decrease and end at 0".into(),
        ));
    }
    if let Some(&t) = traj.timesteps.iter().find(|&&t| t > sched.steps()) {
        return Err(Error::Protocol(format!(
            "timestep {t} beyond schedule length {}",
            sched.steps()
        )));
    }
    for (f, r) in traj.forward.iter().zip(&traj.reverse) {
        f.ensure_same_shape(r, "trajectory alignment")
            .map_err(|e| Error::Protocol(e.to_string()))?;
    }
    let mut collector = Collector::new(&traj.forward[n - 1])?;
    for (i, &t) in traj.timesteps.iter().enumerate() {
        let (f, r) = (&traj.forward[i], &traj.reverse[i]);
        let f_recon = recon(pred, sched, f, t)?;
        let r_recon = recon(pred, sched, r, t)?;
        collector.push(t, [f, r, &f_recon, &r_recon])?;
    }
    Ok(collector.report)
}

/// Streaming [`simulate_bias_with_noise`] + [`energy_report`]: never holds
/// more than one timestep of either trajectory.
pub fn energy_study<P: NoisePredictor + ?Sized>(
    pred: &P,
    sched: &NoiseSchedule,
    x0: &TensorBatch,
    s: usize,
    seed: u64,
    noise: ForwardNoise,
) -> Result<EnergyReport> {
    check_start(sched, s)?;
    x0.ensure_finite("clean data")?;
    let mut collector = Collector::new(x0)?;
    let start = forward_sample(sched, x0, s + 1, seed, noise)?;
    let eps = predict_checked(pred, sched, &start, s + 1)?;
    let mut x = ddim_update(sched, &start, &eps, s + 1, s)?;
    for t in (0..=s).rev() {
        let f = forward_sample(sched, x0, t, seed, noise)?;
        let f_recon = recon(pred, sched, &f, t)?;
        if t == 0 {
            collector.push(t, [&f, &x, &f_recon, &x])?;
            break;
        }
        let eps = predict_checked(pred, sched, &x, t)?;
        let r_recon = reconstruct_x0(sched, &x, &eps, t)?;
        collector.push(t, [&f, &x, &f_recon, &r_recon])?;
        x = ddim_update(sched, &x, &eps, t, t - 1)?;
    }
    Ok(collector.report)
}

/// `gamma_{t-1} = [(1 - alpha_t) gamma_t + alpha_t (1 - ab_{t-1})] / (1 - ab_t)`.
pub fn gamma_recursion(gamma_t: f64, sched: &NoiseSchedule, t: usize) -> Result<f64> {
    sched.check_step(t)?;
    if !(gamma_t > 0.0 && gamma_t <= 1.0) {
        return Err(Error::Parameter(format!("gamma_t = {gamma_t} outside (0, 1]")));
    }
    let (a, ab, ab_prev) = (sched.alpha(t), sched.alpha_bar(t), sched.alpha_bar(t - 1));
    Ok(((1.0 - a) * gamma_t + a * (1.0 - ab_prev)) / (1.0 - ab))
}

/// `1 - ab_{t-1} + (sqrt(ab_{t-1}) beta_t phi_t / (1 - ab_t))^2`.
pub fn predicted_variance(phi_t: f64, sched: &NoiseSchedule, t: usize) -> Result<f64> {
    sched.check_step(t)?;
    if !(phi_t >= 0.0 && phi_t.is_finite()) {
        return Err(Error::Parameter(format!("phi_t = {phi_t} must be finite and >= 0")));
    }
    let (ab, ab_prev) = (sched.alpha_bar(t), sched.alpha_bar(t - 1));
    let k = ab_prev.sqrt() * sched.beta(t) * phi_t / (1.0 - ab);
    Ok(1.0 - ab_prev + k * k)
}

/// Empirical vs closed-form moments of `x_hat_{t-1}` given `x0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MomentReport {
    pub t: usize,
    pub gamma: f64,
    pub phi: f64,
    pub samples: usize,
    pub empirical_mean_coeff: f64,
    pub empirical_variance: f64,
    /// `gamma_{t-1} sqrt(ab_{t-1})`.
    pub predicted_mean_coeff: f64,
    pub predicted_variance: f64,
    /// Standard error of the mean coefficient.
    pub mc_std_error: f64,
    /// Standard error of the variance.
    pub var_std_error: f64,
}

impl MomentReport {
    pub const CSV_HEADER: &'static str =
        "t,emp_mean,emp_var,pred_mean,pred_var,stderr,var_stderr,gamma,phi";

    pub fn mean_z(&self) -> f64 {
        (self.empirical_mean_coeff - self.predicted_mean_coeff) / self.mc_std_error
    }

    pub fn var_z(&self) -> f64 {
        (self.empirical_variance - self.predicted_variance) / self.var_std_error
    }

    /// Both moments within `k` standard errors.
    pub fn passes(&self, k: f64) -> bool {
        self.mean_z().abs() <= k && self.var_z().abs() <= k
    }

    pub fn csv_row(&self) -> String {
        format!(
            "{},{:e},{:e},{:e},{:e},{:e},{:e},{},{}",
            self.t,
            self.empirical_mean_coeff,
            self.empirical_variance,
            self.predicted_mean_coeff,
            self.predicted_variance,
            self.mc_std_error,
            self.var_std_error,
            self.gamma,
            self.phi
        )
    }
}

pub const MIN_VERIFY_SAMPLES: usize = 10_000;
const CHUNK: usize = 4096;

/// Draws `n` realisations of one reverse step
///
/// `x_hat = c0 * x0_theta + ct * x_t + sqrt(beta_tilde_t) * eps1`
///
/// with `x0_theta` from the synthetic reconstruction model and `x_t` a fresh
/// forward draw. Realisation `i` uses coordinate `i mod D` of `x0`. The mean
/// coefficient is the least-squares slope through the origin of `x_hat` on
/// `x0`; the variance is that of the residuals.
pub fn verify_bias_moments(
    params: &ShrinkageParams,
    sched: &NoiseSchedule,
    t: usize,
    x0: &TensorBatch,
    n: usize,
    seed: u64,
) -> Result<MomentReport> {
    if n < MIN_VERIFY_SAMPLES {
        return Err(Error::Parameter(format!(
            "moment verification needs at least {MIN_VERIFY_SAMPLES} draws, got {n}"
        )));
    }
    sched.check_step(t)?;
    if params.steps() < t {
        return Err(Error::Parameter(format!(
            "reconstruction parameters cover 0..={}, need t = {t}",
            params.steps()
        )));
    }
    x0.ensure_finite("clean data")?;
    let coords: Vec<f64> = x0.array().iter().copied().collect();
    if coords.iter().all(|&v| v == 0.0) {
        return Err(Error::Parameter("x0 must have a nonzero coordinate".into()));
    }

    let (gamma, phi) = (params.gamma(t), params.phi(t));
    let (a, ab, ab_prev) = (sched.alpha(t), sched.alpha_bar(t), sched.alpha_bar(t - 1));
    let c0 = ab_prev.sqrt() * sched.beta(t) / (1.0 - ab);
    let ct = a.sqrt() * (1.0 - ab_prev) / (1.0 - ab);
    let noise = sched.beta_tilde(t).sqrt();

    let chunks = n.div_ceil(CHUNK);
    let draws: Vec<Vec<(f64, f64)>> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = rng::stream(seed, Domain::Posterior, t as u64, c as u64);
            let lo = c * CHUNK;
            let hi = (lo + CHUNK).min(n);
            (lo..hi)
                .map(|i| {
                    let x = coords[i % coords.len()];
                    let e_rec: f64 = StandardNormal.sample(&mut rng);
                    let e_fwd: f64 = StandardNormal.sample(&mut rng);
                    let e_1: f64 = StandardNormal.sample(&mut rng);
                    let x0_theta = gamma * x + phi * e_rec;
                    let x_t = ab.sqrt() * x + (1.0 - ab).sqrt() * e_fwd;
                    (x, c0 * x0_theta + ct * x_t + noise * e_1)
                })
                .collect()
        })
        .collect();
    let draws: Vec<(f64, f64)> = draws.into_iter().flatten().collect();

    let sxx: f64 = draws.iter().map(|(x, _)| x * x).sum();
    let sxy: f64 = draws.iter().map(|(x, y)| x * y).sum();
    let slope = sxy / sxx;
    let nf = n as f64;
    let resid: Vec<f64> = draws.iter().map(|(x, y)| y - slope * x).collect();
    let var = resid.iter().map(|r| r * r).sum::<f64>() / (nf - 1.0);
    let m4 = resid.iter().map(|r| r.powi(4)).sum::<f64>() / nf;
    let var_se = ((m4 - var * var).max(0.0) / nf).sqrt();
    let slope_se = (var / sxx).sqrt();

    Ok(MomentReport {
        t,
        gamma,
        phi,
        samples: n,
        empirical_mean_coeff: slope,
        empirical_variance: var,
        predicted_mean_coeff: gamma_recursion(gamma, sched, t)? * ab_prev.sqrt(),
        predicted_variance: predicted_variance(phi, sched, t)?,
        mc_std_error: slope_se,
        var_std_error: var_se,
    })
}

/// `count` random `(gamma, phi, t)` triples with `gamma` in `(0, 1]`, `phi`
/// in `[0, phi_max]` and `t` in `2..=T` (at `t = 1` the step is noiseless and
/// the variance degenerates when `phi = 0`).
pub fn random_triples(count: usize, steps: usize, phi_max: f64, seed: u64) -> Vec<(f64, f64, usize)> {
    use rand::Rng;
    let mut rng = rng::stream(seed, Domain::Grid, 0, 0);
    (0..count)
        .map(|_| {
            let gamma = 1.0 - rng.random::<f64>();
            let phi = phi_max * rng.random::<f64>();
            let t = rng.random_range(2..=steps.max(2));
            (gamma, phi, t)
        })
        .collect()
}
