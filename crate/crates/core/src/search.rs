//! Two-stage grid search over a scalar weight, and the sequential
//! `w_l`-then-`w_h` protocol built on it.
//!
//! Grid points are snapped to a 1e-12 lattice so that e.g. `0.04 + 9 * 0.001`
//! is the double closest to `0.049`. Within a stage the lowest `w` wins ties;
//! the fine stage only replaces the coarse winner when strictly better, so a
//! constant objective returns `lo`.

use std::fmt::Write as _;

use ndarray::Axis;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::model::{GaussianDataModel, NoisePredictor};
use crate::sampler::{sample, SamplerConfig, WeightPolicy};
use crate::schedule::NoiseSchedule;
use crate::tensor::TensorBatch;

const SNAP: f64 = 1e12;

fn snap(w: f64) -> f64 {
    (w * SNAP).round() / SNAP
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridPoint {
    pub w: f64,
    pub objective: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SearchResult {
    pub coarse: Vec<GridPoint>,
    pub fine: Vec<GridPoint>,
    pub best_w: f64,
    pub best_objective: f64,
}

impl SearchResult {
    pub fn coarse_best(&self) -> GridPoint {
        argmin(&self.coarse)
    }

    pub fn points(&self) -> impl Iterator<Item = &GridPoint> {
        self.coarse.iter().chain(&self.fine)
    }
}

/// Lowest objective, ties to the lowest `w`.
fn argmin(points: &[GridPoint]) -> GridPoint {
    let mut best = points[0];
    for p in &points[1..] {
        if p.objective < best.objective || (p.objective == best.objective && p.w < best.w) {
            best = *p;
        }
    }
    best
}

/// `lo, lo + step, ...` up to `hi` (inclusive within 1e-9 of a step).
pub fn grid(lo: f64, hi: f64, step: f64) -> Vec<f64> {
    let count = ((hi - lo) / step + 1e-9).floor() as usize;
    (0..=count).map(|k| snap(lo + k as f64 * step)).collect()
}

fn evaluate<F>(objective: &F, ws: &[f64]) -> Result<Vec<GridPoint>>
where
    F: Fn(f64) -> Result<f64> + Sync,
{
    ws.par_iter()
        .map(|&w| {
            let value = objective(w)?;
            if !value.is_finite() {
                return Err(Error::Evaluation {
                    w,
                    message: format!("objective returned {value}"),
                });
            }
            Ok(GridPoint { w, objective: value })
        })
        .collect()
}

/// Coarse grid over `[lo, hi]`, then a fine grid over one coarse cell either
/// side of the coarse minimiser.
pub fn two_stage_search<F>(objective: F, lo: f64, hi: f64, coarse: f64, fine: f64) -> Result<SearchResult>
where
    F: Fn(f64) -> Result<f64> + Sync,
{
    if !(lo.is_finite() && hi.is_finite() && lo < hi) {
        return Err(Error::Parameter(format!("search range needs lo < hi, got [{lo}, {hi}]")));
    }
    if !(fine > 0.0 && fine < coarse && coarse.is_finite()) {
        return Err(Error::Parameter(format!(
            "search steps need 0 < fine < coarse, got coarse {coarse}, fine {fine}"
        )));
    }
    let coarse_ws = grid(lo, hi, coarse);
    if coarse_ws.is_empty() {
        return Err(Error::Parameter("empty coarse grid".into()));
    }
    let coarse_pts = evaluate(&objective, &coarse_ws)?;
    let centre = argmin(&coarse_pts);
    let fine_ws = grid(centre.w - coarse, centre.w + coarse, fine);
    let fine_pts = evaluate(&objective, &fine_ws)?;
    let fine_best = argmin(&fine_pts);
    let best = if fine_best.objective < centre.objective {
        fine_best
    } else {
        centre
    };
    Ok(SearchResult {
        coarse: coarse_pts,
        fine: fine_pts,
        best_w: best.w,
        best_objective: best.objective,
    })
}

/// Piecewise-linear interpolation through recorded `(w, objective)` pairs,
/// flat beyond the end points. Recorded points are returned exactly.
#[derive(Debug, Clone, PartialEq)]
pub struct LookupObjective {
    points: Vec<(f64, f64)>,
}

impl LookupObjective {
    pub fn new(mut points: Vec<(f64, f64)>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::Parameter("lookup objective needs at least one point".into()));
        }
        if points.iter().any(|(w, v)| !w.is_finite() || !v.is_finite()) {
            return Err(Error::NumericDomain("lookup points must be finite".into()));
        }
        points.sort_by(|a, b| a.0.total_cmp(&b.0));
        if points.windows(2).any(|p| p[0].0 == p[1].0) {
            return Err(Error::Parameter("duplicate lookup abscissa".into()));
        }
        Ok(LookupObjective { points })
    }

    pub fn eval(&self, w: f64) -> f64 {
        let p = &self.points;
        if w <= p[0].0 {
            return p[0].1;
        }
        if w >= p[p.len() - 1].0 {
            return p[p.len() - 1].1;
        }
        let i = p.partition_point(|&(x, _)| x <= w);
        let (x0, y0) = p[i - 1];
        let (x1, y1) = p[i];
        if w == x0 {
            return y0;
        }
        y0 + (y1 - y0) * (w - x0) / (x1 - x0)
    }
}

/// Ranges and steps of the sequential protocol.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SearchPlan {
    pub wl_range: (f64, f64),
    pub wh_range: (f64, f64),
    pub coarse: f64,
    pub fine: f64,
    /// `w_h` held during the `w_l` stage.
    pub neutral_w_h: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SequentialResult {
    pub w_l: f64,
    pub w_h: f64,
    pub objective: f64,
    pub wl_search: SearchResult,
    pub wh_search: SearchResult,
}

impl SequentialResult {
    /// `stage,w,objective` with stages `wl-coarse`, `wl-fine`, `wh-coarse`,
    /// `wh-fine`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("stage,w,objective\n");
        for (stage, points) in [
            ("wl-coarse", &self.wl_search.coarse),
            ("wl-fine", &self.wl_search.fine),
            ("wh-coarse", &self.wh_search.coarse),
            ("wh-fine", &self.wh_search.fine),
        ] {
            for p in points {
                let _ = writeln!(out, "{stage},{},{:e}", p.w, p.objective);
            }
        }
        out
    }
}

/// Searches `w_l` with `w_h` at its neutral value, then `w_h` with `w_l`
/// fixed at the optimum.
pub fn sequential_wl_wh_search<F>(objective: F, plan: &SearchPlan) -> Result<SequentialResult>
where
    F: Fn(f64, f64) -> Result<f64> + Sync,
{
    let wl_search = two_stage_search(
        |w| objective(w, plan.neutral_w_h),
        plan.wl_range.0,
        plan.wl_range.1,
        plan.coarse,
        plan.fine,
    )?;
    let w_l = wl_search.best_w;
    let wh_search = two_stage_search(
        |w| objective(w_l, w),
        plan.wh_range.0,
        plan.wh_range.1,
        plan.coarse,
        plan.fine,
    )?;
    Ok(SequentialResult {
        w_l,
        w_h: wh_search.best_w,
        objective: wh_search.best_objective,
        wl_search,
        wh_search,
    })
}

/// Closed-form 2-Wasserstein distance between the per-coordinate Gaussian
/// fit of `samples` (population variance) and the diagonal target:
/// `sqrt(sum_i (m_i - mu_i)^2 + (sd_i - s_i)^2)`.
pub fn gaussian_w2_objective(samples: &TensorBatch, target: &GaussianDataModel) -> Result<f64> {
    target.check_compatible(samples)?;
    if samples.shape().batch < 2 {
        return Err(Error::Parameter(format!(
            "a Gaussian fit needs at least 2 samples, got {}",
            samples.shape().batch
        )));
    }
    samples.ensure_finite("samples")?;
    let data = samples.array();
    let mean = data.mean_axis(Axis(0)).expect("batch is non-empty");
    let sd = data.var_axis(Axis(0), 0.0).mapv(f64::sqrt);
    let mut total = 0.0;
    ndarray::Zip::from(&mean)
        .and(&sd)
        .and(target.mean())
        .and(target.std_dev())
        .for_each(|&m, &s, &mu, &sigma| total += (m - mu).powi(2) + (s - sigma).powi(2));
    Ok(total.sqrt())
}

/// Desk-scale stand-in for a quality metric: sample with a policy and score
/// the terminal batch against the analytic data Gaussian. Every evaluation
/// reuses the same sampler seed.
pub struct W2Experiment<'a, P: ?Sized> {
    pub predictor: &'a P,
    pub schedule: &'a NoiseSchedule,
    /// Sampler settings; its policy is ignored.
    pub sampler: SamplerConfig,
    /// Variants and `t_mid` of the searched policy.
    pub policy: WeightPolicy,
    pub target: &'a GaussianDataModel,
    pub batch: usize,
}

impl<P: NoisePredictor + ?Sized> W2Experiment<'_, P> {
    pub fn objective(&self, w_l: f64, w_h: f64) -> Result<f64> {
        let policy = WeightPolicy { w_l, w_h, ..self.policy };
        policy.validate().map_err(|e| Error::Evaluation {
            w: w_l,
            message: e.to_string(),
        })?;
        self.score(Some(policy))
    }

    /// Objective without any regulation.
    pub fn neutral_objective(&self) -> Result<f64> {
        self.score(None)
    }

    fn score(&self, policy: Option<WeightPolicy>) -> Result<f64> {
        let cfg = SamplerConfig { policy, ..self.sampler };
        let x = sample(self.predictor, self.schedule, &cfg, self.target.batch_shape(self.batch))?;
        gaussian_w2_objective(&x, self.target)
    }

    pub fn search(&self, plan: &SearchPlan) -> Result<SequentialResult> {
        sequential_wl_wh_search(|wl, wh| self.objective(wl, wh), plan)
    }
}
