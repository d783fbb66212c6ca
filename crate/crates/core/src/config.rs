//! Flat `key = value` run configuration.
//!
//! Values resolve in three layers: built-in defaults, then the named preset
//! (if any), then explicit keys in the order given (config file first,
//! command-line flags after). [`RunConfig::to_file_string`] lists every key,
//! so a written config re-runs the same experiment.

use std::fmt::Write as _;
use std::path::PathBuf;
use std::str::FromStr;

use crate::diagnostics::ForwardNoise;
use crate::error::{Error, Result};
use crate::model::GaussianDataModel;
use crate::presets;
use crate::sampler::{HighVariant, LowVariant, SamplerConfig, SamplerKind, WeightPolicy};
use crate::schedule::{NoiseSchedule, SchedulePreset};
use crate::search::SearchPlan;
use crate::tensor::Shape;
use crate::tensor_file;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SearchObjective {
    /// Gaussian 2-Wasserstein distance of sampled batches.
    W2,
    /// `(w_l - a)^2 + (w_h - b)^2` with known minimum, for checking the
    /// search plumbing.
    Quadratic,
}

impl SearchObjective {
    pub fn name(self) -> &'static str {
        match self {
            SearchObjective::W2 => "w2",
            SearchObjective::Quadratic => "quadratic",
        }
    }
}

impl FromStr for SearchObjective {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "w2" => Ok(SearchObjective::W2),
            "quadratic" => Ok(SearchObjective::Quadratic),
            _ => Err(Error::Parameter(format!("unknown objective {s:?} (w2, quadratic)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub schedule: SchedulePreset,
    pub timesteps: usize,
    pub beta_start: f64,
    pub beta_end: f64,
    pub kind: SamplerKind,
    pub steps: usize,
    pub seed: u64,
    pub batch: usize,
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub data_mu: f64,
    pub data_s: f64,
    pub data_mu_file: Option<PathBuf>,
    pub data_s_file: Option<PathBuf>,
    pub eta: f64,
    pub policy: bool,
    pub low_variant: LowVariant,
    pub high_variant: HighVariant,
    pub w_l: f64,
    pub w_h: f64,
    pub t_mid_frac: f64,
    pub preset: Option<String>,
    pub out: PathBuf,
    pub diagnose_start: Option<usize>,
    pub diagnose_noise: ForwardNoise,
    pub verify_samples: usize,
    pub verify_triples: usize,
    pub verify_phi_max: f64,
    pub verify_size: usize,
    pub verify_corrupt_variance: bool,
    pub search_objective: SearchObjective,
    pub search_wl_lo: f64,
    pub search_wl_hi: f64,
    pub search_wh_lo: f64,
    pub search_wh_hi: f64,
    pub search_coarse: f64,
    pub search_fine: f64,
    pub search_target_wl: f64,
    pub search_target_wh: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            schedule: SchedulePreset::Linear,
            timesteps: 1000,
            beta_start: crate::schedule::DEFAULT_BETA_START,
            beta_end: crate::schedule::DEFAULT_BETA_END,
            kind: SamplerKind::Ddpm,
            steps: 100,
            seed: 0,
            batch: 64,
            channels: 1,
            height: 32,
            width: 32,
            data_mu: 0.0,
            data_s: 1.0,
            data_mu_file: None,
            data_s_file: None,
            eta: 0.0,
            policy: false,
            low_variant: LowVariant::Variance,
            high_variant: HighVariant::Turnon,
            w_l: 0.0,
            w_h: 1.0,
            t_mid_frac: crate::sampler::DEFAULT_T_MID_FRAC,
            preset: None,
            out: PathBuf::from("wpp-out"),
            diagnose_start: None,
            diagnose_noise: ForwardNoise::Independent,
            verify_samples: 100_000,
            verify_triples: 20,
            verify_phi_max: 0.5,
            verify_size: 8,
            verify_corrupt_variance: false,
            search_objective: SearchObjective::W2,
            search_wl_lo: 0.0,
            search_wl_hi: 0.07,
            search_wh_lo: 0.95,
            search_wh_hi: 1.15,
            search_coarse: 0.01,
            search_fine: 0.001,
            search_target_wl: 0.049,
            search_target_wh: 1.064,
        }
    }
}

/// Every key, in file order.
pub const KEYS: &[&str] = &[
    "schedule",
    "timesteps",
    "beta_start",
    "beta_end",
    "kind",
    "steps",
    "seed",
    "batch",
    "channels",
    "height",
    "width",
    "data.mu",
    "data.s",
    "data.mu_file",
    "data.s_file",
    "eta",
    "policy",
    "policy.low_variant",
    "policy.high_variant",
    "policy.w_l",
    "policy.w_h",
    "policy.t_mid_frac",
    "preset",
    "out",
    "diagnose.start",
    "diagnose.noise",
    "verify.samples",
    "verify.triples",
    "verify.phi_max",
    "verify.size",
    "verify.corrupt_variance",
    "search.objective",
    "search.wl_lo",
    "search.wl_hi",
    "search.wh_lo",
    "search.wh_hi",
    "search.coarse",
    "search.fine",
    "search.target_wl",
    "search.target_wh",
];

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    value
        .parse()
        .map_err(|e: T::Err| Error::config(key, format!("cannot parse {value:?}: {e}")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        _ => Err(Error::config(key, format!("expected true or false, got {value:?}"))),
    }
}

fn optional(value: &str) -> Option<&str> {
    if value.is_empty() || value == "none" {
        None
    } else {
        Some(value)
    }
}

fn noise_name(noise: ForwardNoise) -> &'static str {
    match noise {
        ForwardNoise::Independent => "independent",
        ForwardNoise::Shared => "shared",
    }
}

impl RunConfig {
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let value = value.trim();
        match key {
            "schedule" => self.schedule = parse(key, value)?,
            "timesteps" => self.timesteps = parse(key, value)?,
            "beta_start" => self.beta_start = parse(key, value)?,
            "beta_end" => self.beta_end = parse(key, value)?,
            "kind" => self.kind = parse(key, value)?,
            "steps" => self.steps = parse(key, value)?,
            "seed" => self.seed = parse(key, value)?,
            "batch" => self.batch = parse(key, value)?,
            "channels" => self.channels = parse(key, value)?,
            "height" => self.height = parse(key, value)?,
            "width" => self.width = parse(key, value)?,
            "data.mu" => self.data_mu = parse(key, value)?,
            "data.s" => self.data_s = parse(key, value)?,
            "data.mu_file" => self.data_mu_file = optional(value).map(PathBuf::from),
            "data.s_file" => self.data_s_file = optional(value).map(PathBuf::from),
            "eta" => self.eta = parse(key, value)?,
            "policy" => {
                self.policy = match value {
                    "off" => false,
                    "wpp" => true,
                    _ => return Err(Error::config(key, format!("expected off or wpp, got {value:?}"))),
                }
            }
            "policy.low_variant" => self.low_variant = parse(key, value)?,
            "policy.high_variant" => self.high_variant = parse(key, value)?,
            "policy.w_l" => self.w_l = parse(key, value)?,
            "policy.w_h" => self.w_h = parse(key, value)?,
            "policy.t_mid_frac" => self.t_mid_frac = parse(key, value)?,
            "preset" => {
                self.preset = match optional(value) {
                    None => None,
                    Some(name) => {
                        presets::find(name).map_err(|e| Error::config(key, e.to_string()))?;
                        Some(name.to_string())
                    }
                }
            }
            "out" => self.out = PathBuf::from(value),
            "diagnose.start" => {
                self.diagnose_start = optional(value).map(|v| parse(key, v)).transpose()?
            }
            "diagnose.noise" => {
                self.diagnose_noise = match value {
                    "independent" => ForwardNoise::Independent,
                    "shared" => ForwardNoise::Shared,
                    _ => {
                        return Err(Error::config(
                            key,
                            format!("expected independent or shared, got {value:?}"),
                        ))
                    }
                }
            }
            "verify.samples" => self.verify_samples = parse(key, value)?,
            "verify.triples" => self.verify_triples = parse(key, value)?,
            "verify.phi_max" => self.verify_phi_max = parse(key, value)?,
            "verify.size" => self.verify_size = parse(key, value)?,
            "verify.corrupt_variance" => self.verify_corrupt_variance = parse_bool(key, value)?,
            "search.objective" => self.search_objective = parse(key, value)?,
            "search.wl_lo" => self.search_wl_lo = parse(key, value)?,
            "search.wl_hi" => self.search_wl_hi = parse(key, value)?,
            "search.wh_lo" => self.search_wh_lo = parse(key, value)?,
            "search.wh_hi" => self.search_wh_hi = parse(key, value)?,
            "search.coarse" => self.search_coarse = parse(key, value)?,
            "search.fine" => self.search_fine = parse(key, value)?,
            "search.target_wl" => self.search_target_wl = parse(key, value)?,
            "search.target_wh" => self.search_target_wh = parse(key, value)?,
            _ => return Err(Error::config(key, "unknown key")),
        }
        Ok(())
    }

    pub fn get(&self, key: &str) -> Result<String> {
        let path = |p: &Option<PathBuf>| p.as_ref().map(|p| p.display().to_string()).unwrap_or_default();
        Ok(match key {
            "schedule" => self.schedule.name().to_string(),
            "timesteps" => self.timesteps.to_string(),
            "beta_start" => self.beta_start.to_string(),
            "beta_end" => self.beta_end.to_string(),
            "kind" => self.kind.name().to_string(),
            "steps" => self.steps.to_string(),
            "seed" => self.seed.to_string(),
            "batch" => self.batch.to_string(),
            "channels" => self.channels.to_string(),
            "height" => self.height.to_string(),
            "width" => self.width.to_string(),
            "data.mu" => self.data_mu.to_string(),
            "data.s" => self.data_s.to_string(),
            "data.mu_file" => path(&self.data_mu_file),
            "data.s_file" => path(&self.data_s_file),
            "eta" => self.eta.to_string(),
            "policy" => if self.policy { "wpp" } else { "off" }.to_string(),
            "policy.low_variant" => self.low_variant.name().to_string(),
            "policy.high_variant" => self.high_variant.name().to_string(),
            "policy.w_l" => self.w_l.to_string(),
            "policy.w_h" => self.w_h.to_string(),
            "policy.t_mid_frac" => self.t_mid_frac.to_string(),
            "preset" => self.preset.clone().unwrap_or_default(),
            "out" => self.out.display().to_string(),
            "diagnose.start" => self.diagnose_start.map(|s| s.to_string()).unwrap_or_default(),
            "diagnose.noise" => noise_name(self.diagnose_noise).to_string(),
            "verify.samples" => self.verify_samples.to_string(),
            "verify.triples" => self.verify_triples.to_string(),
            "verify.phi_max" => self.verify_phi_max.to_string(),
            "verify.size" => self.verify_size.to_string(),
            "verify.corrupt_variance" => self.verify_corrupt_variance.to_string(),
            "search.objective" => self.search_objective.name().to_string(),
            "search.wl_lo" => self.search_wl_lo.to_string(),
            "search.wl_hi" => self.search_wl_hi.to_string(),
            "search.wh_lo" => self.search_wh_lo.to_string(),
            "search.wh_hi" => self.search_wh_hi.to_string(),
            "search.coarse" => self.search_coarse.to_string(),
            "search.fine" => self.search_fine.to_string(),
            "search.target_wl" => self.search_target_wl.to_string(),
            "search.target_wh" => self.search_target_wh.to_string(),
            _ => return Err(Error::config(key, "unknown key")),
        })
    }

    /// Copies sampler and policy settings from a named preset.
    pub fn apply_preset(&mut self, name: &str) -> Result<()> {
        let p = presets::find(name).map_err(|e| Error::config("preset", e.to_string()))?;
        let policy = p.policy();
        self.preset = Some(name.to_string());
        self.schedule = p.schedule;
        self.kind = p.kind;
        self.steps = p.steps;
        self.policy = true;
        self.low_variant = policy.low_variant;
        self.high_variant = policy.high_variant;
        self.w_l = policy.w_l;
        self.w_h = policy.w_h;
        self.t_mid_frac = policy.t_mid_frac;
        Ok(())
    }

    /// Defaults, then the last `preset` among `pairs`, then every pair in
    /// order.
    pub fn resolve(pairs: &[(String, String)]) -> Result<Self> {
        let mut cfg = RunConfig::default();
        if let Some((_, name)) = pairs.iter().rev().find(|(k, _)| k == "preset") {
            if let Some(name) = optional(name.trim()) {
                cfg.apply_preset(name)?;
            }
        }
        for (k, v) in pairs {
            cfg.set(k, v)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// `key = value` lines; `#` starts a comment.
    pub fn parse_pairs(text: &str) -> Result<Vec<(String, String)>> {
        let mut pairs = Vec::new();
        for (n, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| {
                Error::config(format!("line {}", n + 1), format!("expected key = value, got {line:?}"))
            })?;
            pairs.push((k.trim().to_string(), v.trim().to_string()));
        }
        Ok(pairs)
    }

    pub fn from_file_string(text: &str) -> Result<Self> {
        Self::resolve(&Self::parse_pairs(text)?)
    }

    pub fn to_file_string(&self) -> String {
        let mut out = String::new();
        for key in KEYS {
            let _ = writeln!(out, "{key} = {}", self.get(key).expect("listed key"));
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |key: &str, msg: String| Err(Error::config(key, msg));
        if self.timesteps < 2 {
            return fail("timesteps", format!("need at least 2, got {}", self.timesteps));
        }
        if self.steps == 0 || self.steps > self.timesteps {
            return fail("steps", format!("need 1 <= steps <= {}, got {}", self.timesteps, self.steps));
        }
        for (key, v) in [("batch", self.batch), ("channels", self.channels), ("height", self.height), ("width", self.width)] {
            if v == 0 {
                return fail(key, "must be positive".into());
            }
        }
        for (key, v) in [("height", self.height), ("width", self.width)] {
            if v % 2 != 0 {
                return fail(key, format!("must be even for the wavelet transform, got {v}"));
            }
        }
        if !self.data_mu.is_finite() {
            return fail("data.mu", "must be finite".into());
        }
        if !(self.data_s.is_finite() && self.data_s > 0.0) {
            return fail("data.s", format!("must be finite and > 0, got {}", self.data_s));
        }
        if !(self.eta.is_finite() && self.eta >= 0.0) {
            return fail("eta", format!("must be finite and >= 0, got {}", self.eta));
        }
        if let Err(e) = self.weight_policy().validate() {
            let key = if e.to_string().contains("w_l") {
                "policy.w_l"
            } else if e.to_string().contains("w_h") {
                "policy.w_h"
            } else {
                "policy.t_mid_frac"
            };
            return fail(key, e.to_string());
        }
        if let Some(s) = self.diagnose_start {
            if s + 1 > self.steps {
                return fail("diagnose.start", format!("need start + 1 <= steps = {}", self.steps));
            }
        }
        if self.verify_samples < crate::diagnostics::MIN_VERIFY_SAMPLES {
            return fail(
                "verify.samples",
                format!("need at least {}", crate::diagnostics::MIN_VERIFY_SAMPLES),
            );
        }
        if !(self.verify_phi_max.is_finite() && self.verify_phi_max >= 0.0) {
            return fail("verify.phi_max", "must be finite and >= 0".into());
        }
        if self.verify_size == 0 {
            return fail("verify.size", "must be positive".into());
        }
        if !(self.search_wl_lo < self.search_wl_hi) {
            return fail("search.wl_hi", "need search.wl_lo < search.wl_hi".into());
        }
        if !(self.search_wh_lo < self.search_wh_hi) {
            return fail("search.wh_hi", "need search.wh_lo < search.wh_hi".into());
        }
        if !(self.search_fine > 0.0 && self.search_fine < self.search_coarse) {
            return fail("search.fine", "need 0 < search.fine < search.coarse".into());
        }
        Ok(())
    }

    pub fn noise_schedule(&self) -> Result<NoiseSchedule> {
        match self.schedule {
            SchedulePreset::Linear => NoiseSchedule::linear(self.timesteps, self.beta_start, self.beta_end),
            SchedulePreset::Cosine => NoiseSchedule::cosine(self.timesteps),
        }
        .map_err(|e| Error::config("schedule", e.to_string()))
    }

    pub fn weight_policy(&self) -> WeightPolicy {
        WeightPolicy {
            low_variant: self.low_variant,
            high_variant: self.high_variant,
            w_l: self.w_l,
            w_h: self.w_h,
            t_mid_frac: self.t_mid_frac,
        }
    }

    pub fn sampler_config(&self) -> SamplerConfig {
        let cfg = SamplerConfig::new(self.kind, self.steps, self.seed);
        if self.policy {
            cfg.with_policy(self.weight_policy())
        } else {
            cfg
        }
    }

    pub fn shape(&self) -> Shape {
        Shape::new(self.batch, self.channels, self.height, self.width)
    }

    /// Per-pixel grids from tensor files when given, scalars otherwise.
    pub fn data_model(&self) -> Result<GaussianDataModel> {
        let dims = (self.channels, self.height, self.width);
        let grid = |key: &str, file: &Option<PathBuf>, scalar: f64| -> Result<ndarray::Array3<f64>> {
            match file {
                None => Ok(ndarray::Array3::from_elem(dims, scalar)),
                Some(path) => {
                    let x = tensor_file::read(path)?;
                    let s = x.shape();
                    if (s.batch, s.channels, s.height, s.width) != (1, dims.0, dims.1, dims.2) {
                        return Err(Error::config(
                            key,
                            format!("{} holds {s}, expected 1x{}x{}x{}", path.display(), dims.0, dims.1, dims.2),
                        ));
                    }
                    Ok(x.into_array().index_axis_move(ndarray::Axis(0), 0))
                }
            }
        };
        let mu = grid("data.mu_file", &self.data_mu_file, self.data_mu)?;
        let s = grid("data.s_file", &self.data_s_file, self.data_s)?;
        GaussianDataModel::new(mu, s).map_err(|e| Error::config("data.s", e.to_string()))
    }

    pub fn search_plan(&self) -> SearchPlan {
        SearchPlan {
            wl_range: (self.search_wl_lo, self.search_wl_hi),
            wh_range: (self.search_wh_lo, self.search_wh_hi),
            coarse: self.search_coarse,
            fine: self.search_fine,
            neutral_w_h: WeightPolicy::neutral_w_h(self.high_variant),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pairs(items: &[(&str, &str)]) -> Vec<(String, String)> {
        items.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect()
    }

    #[test]
    fn default_roundtrips() {
        let cfg = RunConfig::default();
        cfg.validate().unwrap();
        let text = cfg.to_file_string();
        assert_eq!(text.lines().count(), KEYS.len());
        assert_eq!(RunConfig::from_file_string(&text).unwrap(), cfg);
    }

    #[test]
    fn preset_then_explicit_keys() {
        let cfg = RunConfig::resolve(&pairs(&[("policy.w_h", "1.5"), ("preset", "adm-cifar10-20")])).unwrap();
        assert_eq!(cfg.steps, 20);
        assert_eq!(cfg.w_l, 1.013);
        assert_eq!(cfg.w_h, 1.5);
        assert!(cfg.policy);
        assert_eq!(cfg.low_variant, LowVariant::Constant);
        let text = cfg.to_file_string();
        assert_eq!(RunConfig::from_file_string(&text).unwrap(), cfg);
    }

    #[test]
    fn errors_name_the_key() {
        let err = RunConfig::resolve(&pairs(&[("steps", "0")])).unwrap_err();
        assert!(matches!(err, Error::Config { ref key, .. } if key == "steps"), "{err}");
        let err = RunConfig::resolve(&pairs(&[("bogus", "1")])).unwrap_err();
        assert!(matches!(err, Error::Config { ref key, .. } if key == "bogus"));
        let err = RunConfig::resolve(&pairs(&[("height", "7")])).unwrap_err();
        assert!(matches!(err, Error::Config { ref key, .. } if key == "height"));
        let err = RunConfig::resolve(&pairs(&[("policy.low_variant", "constant"), ("policy.w_l", "-1")])).unwrap_err();
        assert!(matches!(err, Error::Config { ref key, .. } if key == "policy.w_l"), "{err}");
        assert!(RunConfig::parse_pairs("novalue").is_err());
    }

    #[test]
    fn comments_and_blank_lines() {
        let cfg = RunConfig::from_file_string("# run\n\nseed = 9 # trailing\nkind=ddim\n").unwrap();
        assert_eq!(cfg.seed, 9);
        assert_eq!(cfg.kind, SamplerKind::Ddim);
    }
}
