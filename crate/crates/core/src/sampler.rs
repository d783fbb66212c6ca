//! Reverse samplers and the frequency-regulation hook.
//!
//! Timesteps here are steps of the (possibly respaced) schedule the sampler
//! runs on, `t = T'..1`; predictors are queried at
//! [`NoiseSchedule::model_timestep`].

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::model::{reconstruct_x0, NoisePredictor};
use crate::rng::Domain;
use crate::schedule::NoiseSchedule;
use crate::tensor::{Shape, TensorBatch};
use crate::wavelet::{dwt2, idwt2, Subband};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LowVariant {
    /// `w_l` at every step.
    Constant,
    /// `w_l` while `t >= t_mid`, 1 afterwards.
    Turnoff,
    /// `1 + w_l * sigma_t`.
    Variance,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HighVariant {
    /// `w_h` once `t <= t_mid`, 1 before.
    Turnon,
    /// `1 + w_h * (1 - sigma_t)`.
    Variance,
    Off,
}

impl LowVariant {
    pub fn name(self) -> &'static str {
        match self {
            LowVariant::Constant => "constant",
            LowVariant::Turnoff => "turnoff",
            LowVariant::Variance => "variance",
        }
    }
}

impl HighVariant {
    pub fn name(self) -> &'static str {
        match self {
            HighVariant::Turnon => "turnon",
            HighVariant::Variance => "variance",
            HighVariant::Off => "off",
        }
    }
}

impl fmt::Display for LowVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl fmt::Display for HighVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for LowVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "constant" => Ok(LowVariant::Constant),
            "turnoff" => Ok(LowVariant::Turnoff),
            "variance" => Ok(LowVariant::Variance),
            _ => Err(Error::Parameter(format!(
                "unknown low-frequency variant {s:?} (constant, turnoff, variance)"
            ))),
        }
    }
}

impl FromStr for HighVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "turnon" => Ok(HighVariant::Turnon),
            "variance" => Ok(HighVariant::Variance),
            "off" => Ok(HighVariant::Off),
            _ => Err(Error::Parameter(format!(
                "unknown high-frequency variant {s:?} (turnon, variance, off)"
            ))),
        }
    }
}

/// Per-step subband multipliers.
///
/// Direct multipliers (constant, turnoff, turnon) must be `>= 0`. Variance
/// coefficients may go down to `-1`, which still keeps the resolved
/// multiplier non-negative because `sigma_t` and `1 - sigma_t` lie in
/// `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeightPolicy {
    pub low_variant: LowVariant,
    pub high_variant: HighVariant,
    pub w_l: f64,
    pub w_h: f64,
    pub t_mid_frac: f64,
}

pub const DEFAULT_T_MID_FRAC: f64 = 0.2;

impl WeightPolicy {
    pub fn new(
        low_variant: LowVariant,
        high_variant: HighVariant,
        w_l: f64,
        w_h: f64,
        t_mid_frac: f64,
    ) -> Result<Self> {
        let policy = WeightPolicy {
            low_variant,
            high_variant,
            w_l,
            w_h,
            t_mid_frac,
        };
        policy.validate()?;
        Ok(policy)
    }

    /// Multipliers identically 1.
    pub fn neutral() -> Self {
        WeightPolicy {
            low_variant: LowVariant::Constant,
            high_variant: HighVariant::Turnon,
            w_l: 1.0,
            w_h: 1.0,
            t_mid_frac: DEFAULT_T_MID_FRAC,
        }
    }

    /// The value of `w_l` that makes the low-frequency multiplier 1.
    pub fn neutral_w_l(variant: LowVariant) -> f64 {
        match variant {
            LowVariant::Constant | LowVariant::Turnoff => 1.0,
            LowVariant::Variance => 0.0,
        }
    }

    pub fn neutral_w_h(variant: HighVariant) -> f64 {
        match variant {
            HighVariant::Turnon | HighVariant::Off => 1.0,
            HighVariant::Variance => 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let low_floor = match self.low_variant {
            LowVariant::Variance => -1.0,
            _ => 0.0,
        };
        let high_floor = match self.high_variant {
            HighVariant::Variance => -1.0,
            _ => 0.0,
        };
        if !(self.w_l.is_finite() && self.w_l >= low_floor) {
            return Err(Error::Parameter(format!(
                "w_l = {} must be finite and >= {low_floor} for the {} variant",
                self.w_l, self.low_variant
            )));
        }
        if !(self.w_h.is_finite() && self.w_h >= high_floor) {
            return Err(Error::Parameter(format!(
                "w_h = {} must be finite and >= {high_floor} for the {} variant",
                self.w_h, self.high_variant
            )));
        }
        if !(0.0..=1.0).contains(&self.t_mid_frac) {
            return Err(Error::Parameter(format!(
                "t_mid fraction {} outside [0, 1]",
                self.t_mid_frac
            )));
        }
        Ok(())
    }

    /// `round(t_mid_frac * T')`.
    pub fn t_mid(&self, steps: usize) -> usize {
        (self.t_mid_frac * steps as f64).round() as usize
    }
}

pub fn low_weight(policy: &WeightPolicy, sched: &NoiseSchedule, t: usize) -> f64 {
    match policy.low_variant {
        LowVariant::Constant => policy.w_l,
        LowVariant::Turnoff => {
            if t >= policy.t_mid(sched.steps()) {
                policy.w_l
            } else {
                1.0
            }
        }
        LowVariant::Variance => 1.0 + policy.w_l * sched.sigma(t),
    }
}

pub fn high_weight(policy: &WeightPolicy, sched: &NoiseSchedule, t: usize) -> f64 {
    match policy.high_variant {
        HighVariant::Turnon => {
            if t <= policy.t_mid(sched.steps()) {
                policy.w_h
            } else {
                1.0
            }
        }
        HighVariant::Variance => 1.0 + policy.w_h * (1.0 - sched.sigma(t)).max(0.0),
        HighVariant::Off => 1.0,
    }
}

/// `idwt2({wl * ll, wh * lh, wh * hl, wh * hh})`.
pub fn wpp_regulate(x: &TensorBatch, wl: f64, wh: f64) -> Result<TensorBatch> {
    let mut bands = dwt2(x)?;
    bands.scale(Subband::LL, wl);
    for band in Subband::HIGH {
        bands.scale(band, wh);
    }
    idwt2(&bands)
}

pub(crate) fn predict_checked<P: NoisePredictor + ?Sized>(
    pred: &P,
    sched: &NoiseSchedule,
    x: &TensorBatch,
    t: usize,
) -> Result<TensorBatch> {
    let eps = pred.predict(x, sched.model_timestep(t))?;
    eps.ensure_same_shape(x, "noise prediction")?;
    eps.ensure_finite("noise prediction")?;
    Ok(eps)
}

/// Ancestral update
/// `(x_t - beta_t / sqrt(1 - ab_t) * eps) / sqrt(alpha_t) + sigma_t * z`.
pub fn ddpm_step<P: NoisePredictor + ?Sized>(
    pred: &P,
    sched: &NoiseSchedule,
    x_t: &TensorBatch,
    t: usize,
    z: &TensorBatch,
) -> Result<TensorBatch> {
    sched.check_step(t)?;
    z.ensure_same_shape(x_t, "ddpm noise")?;
    let eps = predict_checked(pred, sched, x_t, t)?;
    ddpm_update(sched, x_t, &eps, t, z)
}

/// [`ddpm_step`] with the prediction supplied.
pub fn ddpm_update(
    sched: &NoiseSchedule,
    x_t: &TensorBatch,
    eps: &TensorBatch,
    t: usize,
    z: &TensorBatch,
) -> Result<TensorBatch> {
    sched.check_step(t)?;
    let inv = 1.0 / sched.alpha(t).sqrt();
    let k = sched.beta(t) / (1.0 - sched.alpha_bar(t)).sqrt();
    let mean = x_t.combine(inv, eps, -inv * k)?;
    if sched.sigma(t) == 0.0 {
        return Ok(mean);
    }
    mean.combine(1.0, z, sched.sigma(t))
}

/// Deterministic update from `s` to `s_prev`:
/// `sqrt(ab_prev) * x0_hat + sqrt(1 - ab_prev) * eps`.
pub fn ddim_step<P: NoisePredictor + ?Sized>(
    pred: &P,
    sched: &NoiseSchedule,
    x_s: &TensorBatch,
    s: usize,
    s_prev: usize,
) -> Result<TensorBatch> {
    sched.check_step(s)?;
    if s_prev >= s {
        return Err(Error::Parameter(format!(
            "ddim step must go backwards, got {s} -> {s_prev}"
        )));
    }
    let eps = predict_checked(pred, sched, x_s, s)?;
    ddim_update(sched, x_s, &eps, s, s_prev)
}

pub fn ddim_update(
    sched: &NoiseSchedule,
    x_s: &TensorBatch,
    eps: &TensorBatch,
    s: usize,
    s_prev: usize,
) -> Result<TensorBatch> {
    let x0 = reconstruct_x0(sched, x_s, eps, s)?;
    let ab = sched.alpha_bar(s_prev);
    x0.combine(ab.sqrt(), eps, (1.0 - ab).sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SamplerKind {
    Ddpm,
    Ddim,
}

impl SamplerKind {
    pub fn name(self) -> &'static str {
        match self {
            SamplerKind::Ddpm => "ddpm",
            SamplerKind::Ddim => "ddim",
        }
    }
}

impl fmt::Display for SamplerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SamplerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ddpm" => Ok(SamplerKind::Ddpm),
            "ddim" => Ok(SamplerKind::Ddim),
            _ => Err(Error::Parameter(format!("unknown sampler {s:?} (ddpm, ddim)"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SamplerConfig {
    pub kind: SamplerKind,
    /// `T'`, the number of reverse steps.
    pub steps: usize,
    pub seed: u64,
    pub policy: Option<WeightPolicy>,
}

impl SamplerConfig {
    pub fn new(kind: SamplerKind, steps: usize, seed: u64) -> Self {
        SamplerConfig {
            kind,
            steps,
            seed,
            policy: None,
        }
    }

    pub fn with_policy(self, policy: WeightPolicy) -> Self {
        SamplerConfig {
            policy: Some(policy),
            ..self
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.steps == 0 {
            return Err(Error::Parameter("sampler needs at least one step".into()));
        }
        if let Some(policy) = &self.policy {
            policy.validate()?;
        }
        Ok(())
    }
}

/// Full reverse loop: respace `sched` to `cfg.steps`, draw `x_T ~ N(0, I)`
/// and run down to `x_0`, regulating every produced sample when a policy is
/// set.
pub fn sample<P: NoisePredictor + ?Sized>(
    pred: &P,
    sched: &NoiseSchedule,
    cfg: &SamplerConfig,
    shape: Shape,
) -> Result<TensorBatch> {
    cfg.validate()?;
    shape.check_positive()?;
    let respaced = sched.subsample(cfg.steps)?;
    let x_t = TensorBatch::standard_normal(shape, cfg.seed, Domain::Prior, 0);
    sample_from(pred, &respaced, cfg, x_t)
}

/// Reverse loop on an already respaced schedule, starting from `x_t` at
/// `t = sched.steps()`.
pub fn sample_from<P: NoisePredictor + ?Sized>(
    pred: &P,
    sched: &NoiseSchedule,
    cfg: &SamplerConfig,
    mut x: TensorBatch,
) -> Result<TensorBatch> {
    cfg.validate()?;
    x.ensure_finite("initial sample")?;
    let shape = x.shape();
    for t in (1..=sched.steps()).rev() {
        x = match cfg.kind {
            SamplerKind::Ddpm => {
                let eps = predict_checked(pred, sched, &x, t)?;
                if sched.sigma(t) == 0.0 {
                    ddpm_update(sched, &x, &eps, t, &TensorBatch::zeros(shape))?
                } else {
                    let z = TensorBatch::standard_normal(shape, cfg.seed, Domain::Ancestral, t as u64);
                    ddpm_update(sched, &x, &eps, t, &z)?
                }
            }
            SamplerKind::Ddim => ddim_step(pred, sched, &x, t, t - 1)?,
        };
        if let Some(policy) = &cfg.policy {
            let (wl, wh) = (low_weight(policy, sched, t), high_weight(policy, sched, t));
            if wl != 1.0 || wh != 1.0 {
                x = wpp_regulate(&x, wl, wh)?;
            }
        }
        x.ensure_finite("reverse sample")?;
    }
    Ok(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{diffuse, ExactNoisePredictor, GaussianDataModel, OptimalPredictor, ZeroPredictor};
    use crate::wavelet::subband_energy;

    fn linear() -> NoiseSchedule {
        NoiseSchedule::linear(1000, 1e-4, 0.02).unwrap()
    }

    #[test]
    fn low_weight_variants() {
        let sched = linear().subsample(100).unwrap();
        let turnoff = WeightPolicy::new(LowVariant::Turnoff, HighVariant::Off, 1.2, 1.0, 0.2).unwrap();
        assert_eq!(low_weight(&turnoff, &sched, 50), 1.2);
        assert_eq!(low_weight(&turnoff, &sched, 10), 1.0);
        assert_eq!(low_weight(&turnoff, &sched, 20), 1.2);
        assert_eq!(low_weight(&turnoff, &sched, 19), 1.0);

        let constant = WeightPolicy::new(LowVariant::Constant, HighVariant::Off, 1.013, 1.0, 0.2).unwrap();
        for t in 1..=100 {
            assert_eq!(low_weight(&constant, &sched, t), 1.013);
        }

        let variance = WeightPolicy::new(LowVariant::Variance, HighVariant::Off, 0.05, 1.0, 0.2).unwrap();
        assert_eq!(sched.sigma(1), 0.0);
        assert_eq!(low_weight(&variance, &sched, 1), 1.0);
        assert_eq!(low_weight(&variance, &sched, 70), 1.0 + 0.05 * sched.sigma(70));
    }

    #[test]
    fn high_weight_variants() {
        let sched = linear().subsample(100).unwrap();
        let turnon = WeightPolicy::new(LowVariant::Constant, HighVariant::Turnon, 1.0, 1.064, 0.2).unwrap();
        assert_eq!(high_weight(&turnon, &sched, 10), 1.064);
        assert_eq!(high_weight(&turnon, &sched, 90), 1.0);
        assert_eq!(high_weight(&turnon, &sched, 20), 1.064);
        assert_eq!(high_weight(&turnon, &sched, 21), 1.0);

        let off = WeightPolicy::new(LowVariant::Constant, HighVariant::Off, 1.0, 7.0, 0.2).unwrap();
        assert!((1..=100).all(|t| high_weight(&off, &sched, t) == 1.0));

        let variance = WeightPolicy::new(LowVariant::Constant, HighVariant::Variance, 1.0, 0.3, 0.2).unwrap();
        assert_eq!(high_weight(&variance, &sched, 1), 1.3);
        let expect = 1.0 + 0.3 * (1.0 - sched.sigma(60));
        assert_eq!(high_weight(&variance, &sched, 60), expect);
    }

    #[test]
    fn policy_validation() {
        assert!(WeightPolicy::new(LowVariant::Constant, HighVariant::Turnon, -0.1, 1.0, 0.2).is_err());
        assert!(WeightPolicy::new(LowVariant::Variance, HighVariant::Turnon, -0.5, 1.0, 0.2).is_ok());
        assert!(WeightPolicy::new(LowVariant::Variance, HighVariant::Turnon, -1.5, 1.0, 0.2).is_err());
        assert!(WeightPolicy::new(LowVariant::Constant, HighVariant::Turnon, 1.0, f64::NAN, 0.2).is_err());
        assert!(WeightPolicy::new(LowVariant::Constant, HighVariant::Turnon, 1.0, 1.0, 1.2).is_err());
        assert_eq!(WeightPolicy::neutral().t_mid(100), 20);
        assert_eq!("variance".parse::<LowVariant>().unwrap(), LowVariant::Variance);
        assert!("bogus".parse::<HighVariant>().is_err());
    }

    #[test]
    fn regulate_identity_and_scaling() {
        let x = TensorBatch::standard_normal(Shape::new(2, 3, 32, 32), 4, Domain::Data, 0);
        assert!(wpp_regulate(&x, 1.0, 1.0).unwrap().max_abs_diff(&x).unwrap() <= 1e-12);

        let c = TensorBatch::filled(Shape::new(1, 1, 4, 4), 0.37);
        assert_eq!(wpp_regulate(&c, 2.0, 5.0).unwrap(), c.scaled(2.0));

        let before = subband_energy(&dwt2(&x).unwrap());
        let after = subband_energy(&dwt2(&wpp_regulate(&x, 1.1, 1.0).unwrap()).unwrap());
        assert!((after.ll / before.ll - 1.21).abs() <= 1e-10 * 1.21);
        for band in Subband::HIGH {
            assert!((after.get(band) / before.get(band) - 1.0).abs() <= 1e-10);
        }
        let odd = TensorBatch::zeros(Shape::new(1, 1, 3, 4));
        assert!(matches!(wpp_regulate(&odd, 1.0, 1.0), Err(Error::Dimension(_))));
    }

    #[test]
    fn ddpm_step_zero_predictor() {
        let sched = linear();
        let x = TensorBatch::standard_normal(Shape::new(2, 1, 4, 4), 1, Domain::Prior, 0);
        let zero = TensorBatch::zeros(x.shape());
        let out = ddpm_step(&ZeroPredictor, &sched, &x, 300, &zero).unwrap();
        assert!(out.max_abs_diff(&x.scaled(1.0 / sched.alpha(300).sqrt())).unwrap() < 1e-14);
        assert!(ddpm_step(&ZeroPredictor, &sched, &x, 0, &zero).is_err());
        assert!(ddpm_step(&ZeroPredictor, &sched, &x, 1001, &zero).is_err());
    }

    #[test]
    fn ddpm_mean_matches_posterior_form() {
        // noise-prediction form of the mean vs the x0/x_t posterior form
        let sched = linear();
        let x = TensorBatch::standard_normal(Shape::new(3, 2, 4, 4), 5, Domain::Prior, 0);
        let eps = TensorBatch::standard_normal(x.shape(), 5, Domain::Forward, 0);
        let zero = TensorBatch::zeros(x.shape());
        for t in [1, 2, 17, 500, 1000] {
            let lhs = ddpm_update(&sched, &x, &eps, t, &zero).unwrap();
            let x0 = reconstruct_x0(&sched, &x, &eps, t).unwrap();
            let (ab, ab_prev, beta) = (sched.alpha_bar(t), sched.alpha_bar(t - 1), sched.beta(t));
            let rhs = x0
                .combine(
                    ab_prev.sqrt() * beta / (1.0 - ab),
                    &x,
                    sched.alpha(t).sqrt() * (1.0 - ab_prev) / (1.0 - ab),
                )
                .unwrap();
            let scale = x.array().iter().fold(1.0f64, |m, v| m.max(v.abs())) / ab.sqrt();
            assert!(lhs.max_abs_diff(&rhs).unwrap() <= 1e-12 * scale, "t = {t}");
        }
    }

    #[test]
    fn ddim_step_contracts() {
        let sched = linear();
        let x = TensorBatch::standard_normal(Shape::new(2, 1, 4, 4), 1, Domain::Prior, 0);
        let out = ddim_step(&ZeroPredictor, &sched, &x, 400, 350).unwrap();
        let k = (sched.alpha_bar(350) / sched.alpha_bar(400)).sqrt();
        assert!(out.max_abs_diff(&x.scaled(k)).unwrap() < 1e-14);
        assert!(ddim_step(&ZeroPredictor, &sched, &x, 400, 400).is_err());

        let x0 = TensorBatch::standard_normal(x.shape(), 2, Domain::Data, 0);
        let eps = TensorBatch::standard_normal(x.shape(), 2, Domain::Forward, 0);
        let exact = ExactNoisePredictor::new(x0.clone(), sched.clone());
        for (s, p) in [(900, 800), (400, 399), (10, 0)] {
            let x_s = diffuse(&sched, &x0, &eps, s).unwrap();
            let out = ddim_step(&exact, &sched, &x_s, s, p).unwrap();
            let expect = diffuse(&sched, &x0, &eps, p).unwrap();
            assert!(out.max_abs_diff(&expect).unwrap() <= 1e-12, "{s} -> {p}");
        }
    }

    #[test]
    fn neutral_policy_is_bit_identical() {
        let sched = linear();
        let model = GaussianDataModel::isotropic(1, 8, 8, 0.2, 0.7).unwrap();
        let pred = OptimalPredictor::new(model, sched.clone());
        let shape = Shape::new(4, 1, 8, 8);
        for kind in [SamplerKind::Ddpm, SamplerKind::Ddim] {
            let base = SamplerConfig::new(kind, 25, 3);
            let plain = sample(&pred, &sched, &base, shape).unwrap();
            for policy in [
                WeightPolicy::neutral(),
                WeightPolicy::new(LowVariant::Variance, HighVariant::Variance, 0.0, 0.0, 0.4).unwrap(),
                WeightPolicy::new(LowVariant::Turnoff, HighVariant::Off, 1.0, 3.0, 0.5).unwrap(),
            ] {
                assert_eq!(sample(&pred, &sched, &base.with_policy(policy), shape).unwrap(), plain);
            }
            assert_eq!(sample(&pred, &sched, &base, shape).unwrap(), plain);
            let active = base.with_policy(
                WeightPolicy::new(LowVariant::Constant, HighVariant::Turnon, 1.01, 1.05, 0.2).unwrap(),
            );
            assert_ne!(sample(&pred, &sched, &active, shape).unwrap(), plain);
        }
    }

    #[test]
    fn single_step_ddpm_is_noiseless() {
        let sched = linear();
        let pred = OptimalPredictor::new(GaussianDataModel::isotropic(1, 2, 2, 0.0, 1.0).unwrap(), sched.clone());
        let shape = Shape::new(3, 1, 2, 2);
        let a = sample(&pred, &sched, &SamplerConfig::new(SamplerKind::Ddpm, 1, 1), shape).unwrap();
        let respaced = sched.subsample(1).unwrap();
        assert_eq!(respaced.sigma(1), 0.0);
        let x_t = TensorBatch::standard_normal(shape, 1, Domain::Prior, 0);
        let eps = pred.predict(&x_t, 1000).unwrap();
        let expect = ddpm_update(&respaced, &x_t, &eps, 1, &TensorBatch::zeros(shape)).unwrap();
        assert_eq!(a, expect);
    }

    #[test]
    fn rejects_bad_configs() {
        let sched = linear();
        let shape = Shape::new(1, 1, 2, 2);
        assert!(sample(&ZeroPredictor, &sched, &SamplerConfig::new(SamplerKind::Ddim, 0, 1), shape).is_err());
        assert!(sample(&ZeroPredictor, &sched, &SamplerConfig::new(SamplerKind::Ddim, 1001, 1), shape).is_err());
    }
}
