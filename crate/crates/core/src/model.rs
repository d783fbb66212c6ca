//! Noise predictors.
//!
//! [`OptimalPredictor`] is the exact minimiser of the noise-prediction loss
//! for a diagonal-Gaussian data distribution, [`PerturbedPredictor`] adds a
//! seeded error field on top of any predictor, and [`shrunk_x0`] is the
//! synthetic reconstruction model `gamma_t * x0 + phi_t * eps`.

use ndarray::{Array3, Zip};

use crate::error::{Error, Result};
use crate::rng::Domain;
use crate::schedule::NoiseSchedule;
use crate::tensor::{Shape, TensorBatch};
use crate::wavelet::{self, EnergyRecord, Subband};

/// `eps_theta(x_t, t)`. `t` is a timestep of the schedule the predictor was
/// trained (or built) on; samplers running on a respaced schedule pass
/// [`NoiseSchedule::model_timestep`].
pub trait NoisePredictor: Send + Sync {
    fn predict(&self, x: &TensorBatch, t: usize) -> Result<TensorBatch>;
}

impl<P: NoisePredictor + ?Sized> NoisePredictor for &P {
    fn predict(&self, x: &TensorBatch, t: usize) -> Result<TensorBatch> {
        (**self).predict(x, t)
    }
}

impl<P: NoisePredictor + ?Sized> NoisePredictor for Box<P> {
    fn predict(&self, x: &TensorBatch, t: usize) -> Result<TensorBatch> {
        (**self).predict(x, t)
    }
}

/// Adapter for closures.
pub struct FnPredictor<F>(pub F);

impl<F> NoisePredictor for FnPredictor<F>
where
    F: Fn(&TensorBatch, usize) -> Result<TensorBatch> + Send + Sync,
{
    fn predict(&self, x: &TensorBatch, t: usize) -> Result<TensorBatch> {
        (self.0)(x, t)
    }
}

/// Always predicts zero noise.
#[derive(Debug, Clone, Copy, Default)]
pub struct ZeroPredictor;

impl NoisePredictor for ZeroPredictor {
    fn predict(&self, x: &TensorBatch, _t: usize) -> Result<TensorBatch> {
        Ok(TensorBatch::zeros(x.shape()))
    }
}

/// Independent per-pixel Gaussian data, `x0 ~ N(mu, diag(s^2))`.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianDataModel {
    mu: Array3<f64>,
    s: Array3<f64>,
}

impl GaussianDataModel {
    pub fn new(mu: Array3<f64>, s: Array3<f64>) -> Result<Self> {
        if mu.dim() != s.dim() {
            return Err(Error::Dimension(format!(
                "mean grid {:?} and std grid {:?} differ",
                mu.dim(),
                s.dim()
            )));
        }
        if mu.is_empty() {
            return Err(Error::Dimension("empty data model".into()));
        }
        if !mu.iter().all(|v| v.is_finite()) {
            return Err(Error::NumericDomain("data mean is not finite".into()));
        }
        if !s.iter().all(|v| v.is_finite() && *v > 0.0) {
            return Err(Error::Parameter(
                "data standard deviations must be finite and > 0".into(),
            ));
        }
        Ok(GaussianDataModel { mu, s })
    }

    /// Same mean and standard deviation at every pixel.
    pub fn isotropic(channels: usize, height: usize, width: usize, mu: f64, s: f64) -> Result<Self> {
        let dim = (channels, height, width);
        Self::new(Array3::from_elem(dim, mu), Array3::from_elem(dim, s))
    }

    pub fn mean(&self) -> &Array3<f64> {
        &self.mu
    }

    pub fn std_dev(&self) -> &Array3<f64> {
        &self.s
    }

    /// `(channels, height, width)`.
    pub fn image_dims(&self) -> (usize, usize, usize) {
        self.mu.dim()
    }

    pub fn batch_shape(&self, batch: usize) -> Shape {
        let (c, h, w) = self.image_dims();
        Shape::new(batch, c, h, w)
    }

    pub fn sample(&self, batch: usize, seed: u64) -> TensorBatch {
        let mut x = TensorBatch::standard_normal(self.batch_shape(batch), seed, Domain::Data, 0);
        for mut element in x.array_mut().outer_iter_mut() {
            Zip::from(&mut element)
                .and(&self.mu)
                .and(&self.s)
                .for_each(|v, &m, &s| *v = m + s * *v);
        }
        x
    }

    pub fn check_compatible(&self, x: &TensorBatch) -> Result<()> {
        let shape = x.shape();
        if (shape.channels, shape.height, shape.width) != self.image_dims() {
            return Err(Error::Dimension(format!(
                "batch {shape} does not match data model image {:?}",
                self.image_dims()
            )));
        }
        Ok(())
    }

    /// `E[x0 | x_t]` for `x_t = sqrt(ab) x0 + sqrt(1 - ab) eps`.
    pub fn posterior_mean(&self, x_t: &TensorBatch, alpha_bar: f64) -> Result<TensorBatch> {
        self.check_compatible(x_t)?;
        let sa = alpha_bar.sqrt();
        let mut out = x_t.clone();
        out.array_mut().outer_iter_mut().for_each(|mut element| {
            Zip::from(&mut element)
                .and(&self.mu)
                .and(&self.s)
                .for_each(|v, &m, &s| {
                    let s2 = s * s;
                    *v = (sa * s2 * *v + (1.0 - alpha_bar) * m) / (alpha_bar * s2 + 1.0 - alpha_bar);
                });
        });
        Ok(out)
    }

    /// Expected subband energy of a draw: squared DWT of the mean plus the
    /// average pixel variance (every subband coefficient of a block has the
    /// block's mean variance).
    pub fn expected_subband_energy(&self) -> Result<EnergyRecord> {
        let (c, h, w) = self.image_dims();
        let mean = TensorBatch::new(self.mu.clone().into_shape_with_order((1, c, h, w)).map_err(
            |e| Error::Dimension(e.to_string()),
        )?)?;
        let mut energy = wavelet::subband_energy(&wavelet::dwt2(&mean)?);
        let var = self.s.iter().map(|s| s * s).sum::<f64>() / self.s.len() as f64;
        for band in Subband::ALL {
            energy.set(band, energy.get(band) + var);
        }
        Ok(energy)
    }
}

/// Exact minimiser of `E||eps_hat(x_t, t) - eps||^2` under the Gaussian data
/// model: `(x_t - sqrt(ab) E[x0|x_t]) / sqrt(1 - ab)`.
pub fn optimal_eps(
    model: &GaussianDataModel,
    sched: &NoiseSchedule,
    x_t: &TensorBatch,
    t: usize,
) -> Result<TensorBatch> {
    sched.check_step(t)?;
    model.check_compatible(x_t)?;
    let ab = sched.alpha_bar(t);
    let (sa, sn) = (ab.sqrt(), (1.0 - ab).sqrt());
    let mut out = x_t.clone();
    out.array_mut().outer_iter_mut().for_each(|mut element| {
        Zip::from(&mut element)
            .and(&model.mu)
            .and(&model.s)
            .for_each(|v, &m, &s| {
                let s2 = s * s;
                let post = (sa * s2 * *v + (1.0 - ab) * m) / (ab * s2 + 1.0 - ab);
                *v = (*v - sa * post) / sn;
            });
    });
    Ok(out)
}

/// `x0` recovered from `x_t` and a noise estimate:
/// `(x_t - sqrt(1 - ab) eps) / sqrt(ab)`. At `t = 0` this is `x_t`.
pub fn reconstruct_x0(
    sched: &NoiseSchedule,
    x_t: &TensorBatch,
    eps: &TensorBatch,
    t: usize,
) -> Result<TensorBatch> {
    if t > sched.steps() {
        return Err(Error::Parameter(format!(
            "timestep {t} outside 0..={}",
            sched.steps()
        )));
    }
    let ab = sched.alpha_bar(t);
    x_t.combine(1.0 / ab.sqrt(), eps, -(1.0 - ab).sqrt() / ab.sqrt())
}

/// Forward marginal `sqrt(ab) x0 + sqrt(1 - ab) eps`.
pub fn diffuse(
    sched: &NoiseSchedule,
    x0: &TensorBatch,
    eps: &TensorBatch,
    t: usize,
) -> Result<TensorBatch> {
    if t > sched.steps() {
        return Err(Error::Parameter(format!(
            "timestep {t} outside 0..={}",
            sched.steps()
        )));
    }
    let ab = sched.alpha_bar(t);
    x0.combine(ab.sqrt(), eps, (1.0 - ab).sqrt())
}

#[derive(Debug, Clone)]
pub struct OptimalPredictor {
    data: GaussianDataModel,
    schedule: NoiseSchedule,
}

impl OptimalPredictor {
    pub fn new(data: GaussianDataModel, schedule: NoiseSchedule) -> Self {
        OptimalPredictor { data, schedule }
    }

    pub fn data(&self) -> &GaussianDataModel {
        &self.data
    }

    pub fn schedule(&self) -> &NoiseSchedule {
        &self.schedule
    }
}

impl NoisePredictor for OptimalPredictor {
    fn predict(&self, x: &TensorBatch, t: usize) -> Result<TensorBatch> {
        optimal_eps(&self.data, &self.schedule, x, t)
    }
}

/// Knows the clean batch and returns the noise that maps it to the input,
/// `(x - sqrt(ab) x0) / sqrt(1 - ab)`. Under this predictor DDIM retraces a
/// shared-noise forward trajectory exactly.
#[derive(Debug, Clone)]
pub struct ExactNoisePredictor {
    x0: TensorBatch,
    schedule: NoiseSchedule,
}

impl ExactNoisePredictor {
    pub fn new(x0: TensorBatch, schedule: NoiseSchedule) -> Self {
        ExactNoisePredictor { x0, schedule }
    }
}

impl NoisePredictor for ExactNoisePredictor {
    fn predict(&self, x: &TensorBatch, t: usize) -> Result<TensorBatch> {
        self.schedule.check_step(t)?;
        let ab = self.schedule.alpha_bar(t);
        let sn = (1.0 - ab).sqrt();
        x.combine(1.0 / sn, &self.x0, -ab.sqrt() / sn)
    }
}

/// `base(x_t, t) + eta * zeta(seed, t)`, with `zeta` a standard-normal field
/// whose entries depend only on `(seed, t, element, channel, row, column)`.
#[derive(Debug, Clone)]
pub struct PerturbedPredictor<P> {
    base: P,
    eta: f64,
    seed: u64,
}

impl<P: NoisePredictor> PerturbedPredictor<P> {
    pub fn new(base: P, eta: f64, seed: u64) -> Result<Self> {
        if !(eta >= 0.0 && eta.is_finite()) {
            return Err(Error::Parameter(format!(
                "perturbation scale must be finite and >= 0, got {eta}"
            )));
        }
        Ok(PerturbedPredictor { base, eta, seed })
    }

    pub fn base(&self) -> &P {
        &self.base
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }
}

pub fn perturbed_eps<P: NoisePredictor>(base: P, eta: f64, seed: u64) -> Result<PerturbedPredictor<P>> {
    PerturbedPredictor::new(base, eta, seed)
}

impl<P: NoisePredictor> NoisePredictor for PerturbedPredictor<P> {
    fn predict(&self, x: &TensorBatch, t: usize) -> Result<TensorBatch> {
        let base = self.base.predict(x, t)?;
        if self.eta == 0.0 {
            return Ok(base);
        }
        let zeta = TensorBatch::standard_normal(x.shape(), self.seed, Domain::Perturbation, t as u64);
        base.combine(1.0, &zeta, self.eta)
    }
}

/// Per-timestep `(gamma_t, phi_t)` of the synthetic reconstruction model,
/// with `0 < gamma_t <= 1` and `0 <= phi_t < bound`.
#[derive(Debug, Clone, PartialEq)]
pub struct ShrinkageParams {
    gamma: Vec<f64>,
    phi: Vec<f64>,
    bound: f64,
}

impl ShrinkageParams {
    /// `gamma[t]`, `phi[t]` for `t = 0..=T`.
    pub fn new(gamma: Vec<f64>, phi: Vec<f64>, bound: f64) -> Result<Self> {
        if gamma.len() != phi.len() || gamma.is_empty() {
            return Err(Error::Dimension(format!(
                "gamma has {} entries, phi has {}",
                gamma.len(),
                phi.len()
            )));
        }
        if !(bound > 0.0 && bound.is_finite()) {
            return Err(Error::Parameter(format!("bound M must be finite and > 0, got {bound}")));
        }
        for (t, (&g, &p)) in gamma.iter().zip(&phi).enumerate() {
            if !(g > 0.0 && g <= 1.0) {
                return Err(Error::Parameter(format!("gamma at t = {t} is {g}, need (0, 1]")));
            }
            if !(p >= 0.0 && p < bound) {
                return Err(Error::Parameter(format!(
                    "phi at t = {t} is {p}, need [0, {bound})"
                )));
            }
        }
        Ok(ShrinkageParams { gamma, phi, bound })
    }

    pub fn constant(steps: usize, gamma: f64, phi: f64, bound: f64) -> Result<Self> {
        Self::new(vec![gamma; steps + 1], vec![phi; steps + 1], bound)
    }

    pub fn steps(&self) -> usize {
        self.gamma.len() - 1
    }

    pub fn gamma(&self, t: usize) -> f64 {
        self.gamma[t]
    }

    pub fn phi(&self, t: usize) -> f64 {
        self.phi[t]
    }

    pub fn bound(&self) -> f64 {
        self.bound
    }
}

/// `gamma_t * x0 + phi_t * eps`, `eps` drawn from `(seed, t)` streams.
pub fn shrunk_x0(
    params: &ShrinkageParams,
    x0: &TensorBatch,
    t: usize,
    seed: u64,
) -> Result<TensorBatch> {
    if t > params.steps() {
        return Err(Error::Parameter(format!(
            "timestep {t} outside 0..={}",
            params.steps()
        )));
    }
    let (gamma, phi) = (params.gamma(t), params.phi(t));
    if phi == 0.0 {
        return Ok(x0.scaled(gamma));
    }
    let eps = TensorBatch::standard_normal(x0.shape(), seed, Domain::Reconstruction, t as u64);
    x0.combine(gamma, &eps, phi)
}
