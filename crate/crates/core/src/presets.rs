//! Published weight settings for pretrained baselines, addressable by name.
//!
//! The recorded `w_l` values mix two conventions: values near 1 are direct
//! multipliers, small values are coefficients of the variance-scaled variant.
//! Presets resolve this by magnitude (`w_l >= 0.5` means constant). `w_h` is
//! always the turn-on multiplier, with `t_mid` at 0.2.
//!
//! The numbers belong to networks that are not part of this crate; with the
//! Gaussian oracle they only serve as realistic magnitudes.

use crate::error::{Error, Result};
use crate::sampler::{HighVariant, LowVariant, SamplerKind, WeightPolicy, DEFAULT_T_MID_FRAC};
use crate::schedule::SchedulePreset;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Preset {
    pub name: &'static str,
    /// Baseline and dataset the weights were tuned for.
    pub source: &'static str,
    pub schedule: SchedulePreset,
    pub kind: SamplerKind,
    pub steps: usize,
    pub w_l: f64,
    pub w_h: f64,
}

impl Preset {
    pub fn low_variant(&self) -> LowVariant {
        if self.w_l >= 0.5 {
            LowVariant::Constant
        } else {
            LowVariant::Variance
        }
    }

    pub fn policy(&self) -> WeightPolicy {
        WeightPolicy {
            low_variant: self.low_variant(),
            high_variant: HighVariant::Turnon,
            w_l: self.w_l,
            w_h: self.w_h,
            t_mid_frac: DEFAULT_T_MID_FRAC,
        }
    }
}

macro_rules! presets {
    ($($name:literal, $source:literal, $sched:ident, $kind:ident, $steps:literal, $wl:literal, $wh:literal;)*) => {
        &[$(Preset {
            name: $name,
            source: $source,
            schedule: SchedulePreset::$sched,
            kind: SamplerKind::$kind,
            steps: $steps,
            w_l: $wl,
            w_h: $wh,
        },)*]
    };
}

pub const PRESETS: &[Preset] = presets! {
    "adm-cifar10-20", "ADM, CIFAR-10", Linear, Ddpm, 20, 1.013, 1.064;
    "adm-cifar10-30", "ADM, CIFAR-10", Linear, Ddpm, 30, 1.008, 1.034;
    "adm-cifar10-50", "ADM, CIFAR-10", Linear, Ddpm, 50, 1.0036, 1.015;
    "adm-imagenet-20", "ADM, ImageNet", Linear, Ddpm, 20, 0.050, 0.997;
    "adm-imagenet-30", "ADM, ImageNet", Linear, Ddpm, 30, 0.040, 0.998;
    "adm-imagenet-50", "ADM, ImageNet", Linear, Ddpm, 50, 0.028, 1.001;
    "ddpm-cifar10-10", "DDPM, CIFAR-10", Linear, Ddpm, 10, 1.068, 1.250;
    "ddpm-cifar10-20", "DDPM, CIFAR-10", Linear, Ddpm, 20, 1.019, 1.140;
    "ddpm-cifar10-30", "DDPM, CIFAR-10", Linear, Ddpm, 30, 1.009, 1.042;
    "iddpm-cifar10-100", "IDDPM, CIFAR-10", Linear, Ddpm, 100, 1.0011, 1.0060;
    "a-dpm-ls-10", "A-DPM, CIFAR-10 linear schedule", Linear, Ddpm, 10, 0.132, 1.11;
    "a-dpm-ls-25", "A-DPM, CIFAR-10 linear schedule", Linear, Ddpm, 25, 0.049, 1.038;
    "a-dpm-ls-50", "A-DPM, CIFAR-10 linear schedule", Linear, Ddpm, 50, 0.03, 1.019;
    "a-dpm-cs-10", "A-DPM, CIFAR-10 cosine schedule", Cosine, Ddpm, 10, 0.072, 1.202;
    "a-dpm-cs-25", "A-DPM, CIFAR-10 cosine schedule", Cosine, Ddpm, 25, 0.032, 1.046;
    "a-dpm-cs-50", "A-DPM, CIFAR-10 cosine schedule", Cosine, Ddpm, 50, 0.008, 1.018;
    "npr-dpm-ls-10", "NPR-DPM, CIFAR-10 linear schedule", Linear, Ddpm, 10, 0.132, 1.105;
    "npr-dpm-ls-25", "NPR-DPM, CIFAR-10 linear schedule", Linear, Ddpm, 25, 0.048, 1.034;
    "npr-dpm-ls-50", "NPR-DPM, CIFAR-10 linear schedule", Linear, Ddpm, 50, 0.024, 1.015;
    "npr-dpm-cs-10", "NPR-DPM, CIFAR-10 cosine schedule", Cosine, Ddpm, 10, 0.066, 1.192;
    "npr-dpm-cs-25", "NPR-DPM, CIFAR-10 cosine schedule", Cosine, Ddpm, 25, 0.03, 1.045;
    "npr-dpm-cs-50", "NPR-DPM, CIFAR-10 cosine schedule", Cosine, Ddpm, 50, 0.007, 1.017;
    "sn-dpm-ls-10", "SN-DPM, CIFAR-10 linear schedule", Linear, Ddpm, 10, 0.109, 1.013;
    "sn-dpm-ls-25", "SN-DPM, CIFAR-10 linear schedule", Linear, Ddpm, 25, 0.043, 1.005;
    "sn-dpm-ls-50", "SN-DPM, CIFAR-10 linear schedule", Linear, Ddpm, 50, 0.025, 1.005;
    "sn-dpm-cs-10", "SN-DPM, CIFAR-10 cosine schedule", Cosine, Ddpm, 10, 0.052, 1.101;
    "sn-dpm-cs-25", "SN-DPM, CIFAR-10 cosine schedule", Cosine, Ddpm, 25, 0.027, 1.019;
    "sn-dpm-cs-50", "SN-DPM, CIFAR-10 cosine schedule", Cosine, Ddpm, 50, 0.009, 1.01;
    "ddim-cifar10-10", "DDIM, CIFAR-10", Linear, Ddim, 10, 0.0, 1.21;
    "ddim-cifar10-25", "DDIM, CIFAR-10", Linear, Ddim, 25, 0.0, 1.037;
    "ddim-cifar10-50", "DDIM, CIFAR-10", Linear, Ddim, 50, 0.0, 1.011;
    "amed-cifar10-5", "AMED, CIFAR-10", Linear, Ddim, 5, 0.0014, 0.9955;
    "amed-cifar10-7", "AMED, CIFAR-10", Linear, Ddim, 7, 0.0012, 0.9932;
    "amed-cifar10-9", "AMED, CIFAR-10", Linear, Ddim, 9, 0.0027, 0.9985;
    "edm-cifar10-13", "EDM, CIFAR-10", Linear, Ddim, 13, 0.036, 1.087;
    "edm-cifar10-21", "EDM, CIFAR-10", Linear, Ddim, 21, 0.016, 1.054;
    "edm-cifar10-35", "EDM, CIFAR-10", Linear, Ddim, 35, 0.007, 1.022;
    "pfgm-cifar10-13", "PFGM++, CIFAR-10", Linear, Ddim, 13, 0.037, 1.095;
    "pfgm-cifar10-21", "PFGM++, CIFAR-10", Linear, Ddim, 21, 0.016, 1.057;
    "pfgm-cifar10-35", "PFGM++, CIFAR-10", Linear, Ddim, 35, 0.006, 1.025;
};

pub fn find(name: &str) -> Result<&'static Preset> {
    PRESETS.iter().find(|p| p.name == name).ok_or_else(|| {
        Error::Parameter(format!(
            "unknown preset {name:?}; known: {}",
            PRESETS.iter().map(|p| p.name).collect::<Vec<_>>().join(", ")
        ))
    })
}
