//! Wavelet-domain frequency regulation for diffusion sampling.
//!
//! A sampler step produces `x_{t-1}`; the regulation hook decomposes it with a
//! single-level Haar DWT, rescales the low-frequency subband by `w_l(t)` and the
//! three detail subbands by `w_h(t)`, and recombines with the inverse DWT.
//!
//! Everything around the hook is built so that it can be checked without a
//! trained network: a diagonal-Gaussian data model has a closed-form optimal
//! noise predictor, a perturbed wrapper injects controlled prediction error,
//! and the diagnostics compare forward and reverse trajectories subband by
//! subband.
//!
//! Modules, bottom-up:
//!
//! - [`wavelet`]: Haar DWT / iDWT and subband energies
//! - [`schedule`]: linear and cosine schedules, respacing
//! - [`model`]: noise predictors and the synthetic reconstruction model
//! - [`sampler`]: DDPM / DDIM steps, weight policies and the regulated loop
//! - [`diagnostics`]: bias simulation, energy curves, moment verification
//! - [`search`]: two-stage grid search and the Gaussian W2 objective
//! - [`config`], [`tensor_file`], [`cli`]: the reproducible command-line runs

pub mod cli;
pub mod config;
pub mod diagnostics;
pub mod error;
pub mod model;
pub mod presets;
pub mod rng;
pub mod sampler;
pub mod schedule;
pub mod search;
pub mod tensor;
pub mod tensor_file;
pub mod wavelet;

pub use error::{Error, Result};
pub use model::{GaussianDataModel, NoisePredictor, OptimalPredictor, PerturbedPredictor};
pub use sampler::{sample, SamplerConfig, SamplerKind, WeightPolicy};
pub use schedule::NoiseSchedule;
pub use tensor::{Shape, TensorBatch};
pub use wavelet::{dwt2, idwt2, subband_energy, EnergyRecord, Subband, SubbandSet};
