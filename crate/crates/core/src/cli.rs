//! `wpp` command line: `sample`, `diagnose`, `verify` and `search`.
//!
//! Every subcommand accepts the same flags; each one sets the config key of
//! the same name. `--config FILE` reads a `key = value` file first, and
//! `--set key=value` reaches any key without a dedicated flag. Outputs go
//! to `--out` (default `wpp-out/`) and are written atomically.
//!
//! Exit codes: 0 success, 2 configuration or usage error, 3 verification
//! failure, 4 I/O error.

use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::Path;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};

use crate::config::{RunConfig, SearchObjective};
use crate::diagnostics::{self, Comparison, MomentReport};
use crate::error::{Error, Result};
use crate::model::{ShrinkageParams, GaussianDataModel, OptimalPredictor, PerturbedPredictor};
use crate::sampler::sample;
use crate::search::{sequential_wl_wh_search, W2Experiment};
use crate::tensor_file;
use crate::wavelet::Subband;

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_VERIFY: i32 = 3;
pub const EXIT_IO: i32 = 4;

/// Multiplier applied to the predicted variance by `--corrupt-variance`;
/// a negative control that the verification must reject.
const CORRUPTION: f64 = 1.05;

#[derive(Debug, Parser)]
#[command(name = "wpp", version, about = "Wavelet-domain frequency regulation for diffusion sampling")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the reverse sampler and write the terminal batch.
    Sample(RunArgs),
    /// Forward/reverse subband energy curves of the bias simulation.
    Diagnose(RunArgs),
    /// Monte-Carlo check of the one-step bias mean and variance.
    Verify(RunArgs),
    /// Sequential two-stage search over w_l then w_h.
    Search(RunArgs),
}

#[derive(Debug, Clone, Default, Args)]
pub struct RunArgs {
    /// Flat key = value config file, applied before flags.
    #[arg(long, value_name = "FILE")]
    pub config: Option<std::path::PathBuf>,
    /// Any config key, e.g. --set verify.triples=5. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
    #[arg(long)]
    pub preset: Option<String>,
    #[arg(long)]
    pub schedule: Option<String>,
    #[arg(long)]
    pub timesteps: Option<String>,
    #[arg(long)]
    pub kind: Option<String>,
    #[arg(long)]
    pub steps: Option<String>,
    #[arg(long)]
    pub seed: Option<String>,
    #[arg(long)]
    pub batch: Option<String>,
    #[arg(long)]
    pub channels: Option<String>,
    #[arg(long)]
    pub height: Option<String>,
    #[arg(long)]
    pub width: Option<String>,
    #[arg(long = "data-mu")]
    pub data_mu: Option<String>,
    #[arg(long = "data-s")]
    pub data_s: Option<String>,
    #[arg(long)]
    pub eta: Option<String>,
    /// off or wpp.
    #[arg(long)]
    pub policy: Option<String>,
    #[arg(long = "low-variant")]
    pub low_variant: Option<String>,
    #[arg(long = "high-variant")]
    pub high_variant: Option<String>,
    #[arg(long = "w-l")]
    pub w_l: Option<String>,
    #[arg(long = "w-h")]
    pub w_h: Option<String>,
    /// Fraction of the trajectory, from the end, with high-frequency boost.
    #[arg(long = "t-mid")]
    pub t_mid: Option<String>,
    #[arg(long)]
    pub out: Option<String>,
    /// Bias simulation start step.
    #[arg(long)]
    pub start: Option<String>,
    #[arg(long)]
    pub samples: Option<String>,
    #[arg(long)]
    pub triples: Option<String>,
    #[arg(long)]
    pub objective: Option<String>,
    #[arg(long = "corrupt-variance", hide = true)]
    pub corrupt_variance: bool,
}

impl RunArgs {
    /// Config file pairs followed by flag pairs.
    pub fn pairs(&self) -> Result<Vec<(String, String)>> {
        let mut pairs = match &self.config {
            Some(path) => RunConfig::parse_pairs(&fs::read_to_string(path)?)?,
            None => Vec::new(),
        };
        for item in &self.set {
            let (k, v) = item
                .split_once('=')
                .ok_or_else(|| Error::config(item.clone(), "--set expects KEY=VALUE"))?;
            pairs.push((k.trim().to_string(), v.trim().to_string()));
        }
        let flags = [
            ("preset", &self.preset),
            ("schedule", &self.schedule),
            ("timesteps", &self.timesteps),
            ("kind", &self.kind),
            ("steps", &self.steps),
            ("seed", &self.seed),
            ("batch", &self.batch),
            ("channels", &self.channels),
            ("height", &self.height),
            ("width", &self.width),
            ("data.mu", &self.data_mu),
            ("data.s", &self.data_s),
            ("eta", &self.eta),
            ("policy", &self.policy),
            ("policy.low_variant", &self.low_variant),
            ("policy.high_variant", &self.high_variant),
            ("policy.w_l", &self.w_l),
            ("policy.w_h", &self.w_h),
            ("policy.t_mid_frac", &self.t_mid),
            ("out", &self.out),
            ("diagnose.start", &self.start),
            ("verify.samples", &self.samples),
            ("verify.triples", &self.triples),
            ("search.objective", &self.objective),
        ];
        for (key, value) in flags {
            if let Some(v) = value {
                pairs.push((key.to_string(), v.clone()));
            }
        }
        if self.corrupt_variance {
            pairs.push(("verify.corrupt_variance".into(), "true".into()));
        }
        Ok(pairs)
    }

    pub fn resolve(&self) -> Result<RunConfig> {
        RunConfig::resolve(&self.pairs()?)
    }
}

pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Verification(_) => EXIT_VERIFY,
        Error::Io(_) => EXIT_IO,
        _ => EXIT_CONFIG,
    }
}

fn configure_threads() -> Result<()> {
    if let Ok(value) = std::env::var("WPP_THREADS") {
        let n: usize = value
            .parse()
            .ok()
            .filter(|&n| n > 0)
            .ok_or_else(|| Error::config("WPP_THREADS", format!("expected a positive integer, got {value:?}")))?;
        // a pool may already exist when called twice in one process
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    Ok(())
}

/// Parses `args` (including the program name), runs the command and returns
/// the process exit code. Messages go to stderr.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
        }
    };
    match configure_threads().and_then(|_| execute(&cli.command)) {
        Ok(summary) => {
            let _ = writeln!(std::io::stdout(), "{summary}");
            EXIT_OK
        }
        Err(e) => {
            eprintln!("wpp: {e}");
            exit_code(&e)
        }
    }
}

/// Runs one command and returns its summary text.
pub fn execute(command: &Command) -> Result<String> {
    let started = Instant::now();
    let (name, args) = match command {
        Command::Sample(a) => ("sample", a),
        Command::Diagnose(a) => ("diagnose", a),
        Command::Verify(a) => ("verify", a),
        Command::Search(a) => ("search", a),
    };
    let cfg = args.resolve()?;
    fs::create_dir_all(&cfg.out)?;
    let outcome = match command {
        Command::Sample(_) => cmd_sample(&cfg),
        Command::Diagnose(_) => cmd_diagnose(&cfg),
        Command::Verify(_) => cmd_verify(&cfg),
        Command::Search(_) => cmd_search(&cfg),
    };
    let (results, failure) = match outcome {
        Ok(text) => (text, None),
        Err(Failure::Checks(text, err)) => (text, Some(err)),
        Err(Failure::Error(err)) => return Err(err),
    };
    let mut summary = format!("command = {name}\n");
    let _ = writeln!(summary, "wall_time_s = {:.3}", started.elapsed().as_secs_f64());
    summary.push_str(&results);
    summary.push_str("\n[config]\n");
    summary.push_str(&cfg.to_file_string());
    tensor_file::write_atomic(&cfg.out.join(format!("{name}_summary.txt")), summary.as_bytes())?;
    match failure {
        Some(err) => Err(err),
        None => Ok(summary),
    }
}

/// A command can finish its artifacts and still fail its checks.
enum Failure {
    Checks(String, Error),
    Error(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Error(e)
    }
}

fn predictor(cfg: &RunConfig) -> Result<(PerturbedPredictor<OptimalPredictor>, GaussianDataModel)> {
    let data = cfg.data_model()?;
    let base = OptimalPredictor::new(data.clone(), cfg.noise_schedule()?);
    Ok((PerturbedPredictor::new(base, cfg.eta, cfg.seed)?, data))
}

fn write_text(dir: &Path, name: &str, text: &str) -> Result<()> {
    tensor_file::write_atomic(&dir.join(name), text.as_bytes())
}

fn cmd_sample(cfg: &RunConfig) -> Result<String, Failure> {
    let sched = cfg.noise_schedule()?;
    let (pred, data) = predictor(cfg)?;
    let x = sample(&pred, &sched, &cfg.sampler_config(), cfg.shape())?;
    tensor_file::write(&cfg.out.join("samples.wppt"), &x)?;
    let mean = x.mean();
    let var = x.array().iter().map(|v| (v - mean).powi(2)).sum::<f64>() / x.shape().len() as f64;
    let mut out = String::from("[results]\n");
    let _ = writeln!(out, "samples = samples.wppt");
    let _ = writeln!(out, "pooled_mean = {mean}");
    let _ = writeln!(out, "pooled_variance = {var}");
    if x.shape().batch >= 2 {
        let _ = writeln!(out, "w2_to_data = {}", crate::search::gaussian_w2_objective(&x, &data)?);
    }
    Ok(out)
}

fn cmd_diagnose(cfg: &RunConfig) -> Result<String, Failure> {
    let base = cfg.noise_schedule()?;
    let sched = base.subsample(cfg.steps)?;
    let (pred, data) = predictor(cfg)?;
    let x0 = data.sample(cfg.batch, cfg.seed);
    let start = cfg.diagnose_start.unwrap_or_else(|| diagnostics::default_start(cfg.steps));
    let report = diagnostics::energy_study(&pred, &sched, &x0, start, cfg.seed, cfg.diagnose_noise)?;
    write_text(&cfg.out, "energy.csv", &report.curve.to_csv())?;
    write_text(&cfg.out, "energy_gaps.csv", &report.gaps_csv())?;

    let mut out = String::from("[results]\n");
    let _ = writeln!(out, "start = {start}");
    let _ = writeln!(out, "rows = {}", report.curve.rows.len());
    for band in Subband::ALL {
        let below: Vec<usize> = (0..=start)
            .filter(|&t| {
                report
                    .gap(t, Comparison::ReverseMinusForward, band)
                    .is_some_and(|g| g.z() < -3.0)
            })
            .collect();
        let _ = writeln!(out, "reverse_below_forward_3se.{band} = {}", below.len());
    }
    Ok(out)
}

fn cmd_verify(cfg: &RunConfig) -> Result<String, Failure> {
    let sched = cfg.noise_schedule()?;
    let triples = diagnostics::random_triples(cfg.verify_triples, cfg.timesteps, cfg.verify_phi_max, cfg.seed);
    let x0 = GaussianDataModel::isotropic(1, cfg.verify_size, cfg.verify_size, cfg.data_mu, cfg.data_s)?
        .sample(1, cfg.seed);
    let bound = (2.0 * cfg.verify_phi_max).max(1.0);
    let mut csv = format!("{}\n", MomentReport::CSV_HEADER);
    let mut failures = Vec::new();
    for (i, &(gamma, phi, t)) in triples.iter().enumerate() {
        let params = ShrinkageParams::constant(cfg.timesteps, gamma, phi, bound)?;
        let mut report = diagnostics::verify_bias_moments(
            &params,
            &sched,
            t,
            &x0,
            cfg.verify_samples,
            cfg.seed.wrapping_add(i as u64),
        )?;
        if cfg.verify_corrupt_variance {
            report.predicted_variance *= CORRUPTION;
        }
        let _ = writeln!(csv, "{}", report.csv_row());
        if !report.passes(3.0) {
            failures.push(format!(
                "t = {t}, gamma = {gamma:.4}, phi = {phi:.4}: mean z = {:.2}, variance z = {:.2}",
                report.mean_z(),
                report.var_z()
            ));
        }
        if gamma < 1.0 && phi > 0.0 {
            let exact_mean = sched.alpha_bar(t - 1).sqrt();
            let exact_var = 1.0 - sched.alpha_bar(t - 1);
            if !(report.predicted_mean_coeff < exact_mean && report.predicted_variance > exact_var) {
                failures.push(format!("t = {t}: predicted moments not shifted from the exact posterior"));
            }
        }
    }
    write_text(&cfg.out, "moments.csv", &csv)?;
    let mut out = String::from("[results]\n");
    let _ = writeln!(out, "triples = {}", triples.len());
    let _ = writeln!(out, "failures = {}", failures.len());
    for f in &failures {
        let _ = writeln!(out, "# {f}");
    }
    if failures.is_empty() {
        Ok(out)
    } else {
        let err = Error::Verification(format!("{} of {} checks outside 3 standard errors", failures.len(), triples.len()));
        Err(Failure::Checks(out, err))
    }
}

fn cmd_search(cfg: &RunConfig) -> Result<String, Failure> {
    let plan = cfg.search_plan();
    let mut out = String::from("[results]\n");
    let result = match cfg.search_objective {
        SearchObjective::Quadratic => {
            let (a, b) = (cfg.search_target_wl, cfg.search_target_wh);
            sequential_wl_wh_search(|wl, wh| Ok((wl - a).powi(2) + (wh - b).powi(2)), &plan)?
        }
        SearchObjective::W2 => {
            let sched = cfg.noise_schedule()?;
            let (pred, data) = predictor(cfg)?;
            let experiment = W2Experiment {
                predictor: &pred,
                schedule: &sched,
                sampler: cfg.sampler_config(),
                policy: cfg.weight_policy(),
                target: &data,
                batch: cfg.batch,
            };
            let neutral = experiment.neutral_objective()?;
            let _ = writeln!(out, "neutral_objective = {neutral}");
            experiment.search(&plan)?
        }
    };
    write_text(&cfg.out, "search.csv", &result.to_csv())?;
    let _ = writeln!(out, "w_l = {}", result.w_l);
    let _ = writeln!(out, "w_h = {}", result.w_h);
    let _ = writeln!(out, "objective = {}", result.objective);
    let _ = writeln!(out, "wl_coarse_best = {}", result.wl_search.coarse_best().w);
    let _ = writeln!(out, "wh_coarse_best = {}", result.wh_search.coarse_best().w);
    Ok(out)
}
