//! Acceptance criteria, one test each. Every test prints a single
//! `criterion N: PASS|FAIL ...` line before asserting.

use std::sync::{Mutex, MutexGuard};
use std::time::{Duration, Instant};

use wpp::diagnostics::{self, Comparison, ForwardNoise, MIN_VERIFY_SAMPLES};
use wpp::model::{diffuse, ShrinkageParams, ExactNoisePredictor};
use wpp::rng::Domain;
use wpp::sampler::{self, ddim_step, wpp_regulate, HighVariant, LowVariant};
use wpp::search::{two_stage_search, LookupObjective, SearchPlan, W2Experiment};
use wpp::{
    dwt2, idwt2, subband_energy, GaussianDataModel, NoiseSchedule, OptimalPredictor, PerturbedPredictor,
    SamplerConfig, SamplerKind, Shape, Subband, TensorBatch, WeightPolicy,
};

fn linear() -> NoiseSchedule {
    NoiseSchedule::linear(1000, 1e-4, 0.02).unwrap()
}

// Runtime budgets are wall-clock, so criteria must not share the CPU.
static SERIAL: Mutex<()> = Mutex::new(());

fn serial() -> MutexGuard<'static, ()> {
    SERIAL.lock().unwrap_or_else(|e| e.into_inner())
}

// Written past the test harness's output capture so passing criteria show up
// in a plain `cargo test` log too.
fn emit(text: String) {
    use std::io::Write;
    let mut out = std::io::stdout().lock();
    let _ = writeln!(out, "{text}");
    let _ = out.flush();
}

fn report(id: &str, ok: bool, detail: String, elapsed: Duration, budget: Duration) {
    let ok = ok && elapsed <= budget;
    emit(format!(
        "criterion {id}: {} {detail} ({:.2} s, budget {} s)",
        if ok { "PASS" } else { "FAIL" },
        elapsed.as_secs_f64(),
        budget.as_secs()
    ));
    assert!(ok, "criterion {id} failed: {detail}");
}

#[test]
fn criterion_1_wavelet_exactness() {
    let _serial = serial();
    use rand::Rng;
    let clock = Instant::now();
    let mut rng = wpp::rng::stream(1, Domain::Grid, 1, 0);
    let (mut worst_rt, mut worst_parseval) = (0.0f64, 0.0f64);
    for i in 0..1000u64 {
        let shape = Shape::new(
            rng.random_range(1..=4),
            rng.random_range(1..=3),
            2 * rng.random_range(1..=8),
            2 * rng.random_range(1..=8),
        );
        let x = TensorBatch::standard_normal(shape, i, Domain::Data, 0).scaled(rng.random_range(0.1..10.0));
        let bands = dwt2(&x).unwrap();
        worst_rt = worst_rt.max(idwt2(&bands).unwrap().max_abs_diff(&x).unwrap());
        let space: f64 = x.array().iter().map(|v| v * v).sum();
        let freq: f64 = Subband::ALL
            .iter()
            .map(|&b| bands.band(b).array().iter().map(|v| v * v).sum::<f64>())
            .sum();
        worst_parseval = worst_parseval.max((freq - space).abs() / space);
    }
    report(
        "1",
        worst_rt <= 1e-12 && worst_parseval <= 1e-10,
        format!("max roundtrip error {worst_rt:.2e}, max Parseval relative error {worst_parseval:.2e}"),
        clock.elapsed(),
        Duration::from_secs(10),
    );
}

#[test]
fn criterion_2_reconstruction_moments() {
    let _serial = serial();
    let clock = Instant::now();
    let sched = linear();
    let n = 100_000;
    assert!(n >= MIN_VERIFY_SAMPLES);
    let x0 = GaussianDataModel::isotropic(1, 8, 8, 0.0, 1.0).unwrap().sample(1, 2);
    let triples = diagnostics::random_triples(20, sched.steps(), 0.5, 2);
    let mut worst_z = 0.0f64;
    let mut ordering_ok = true;
    for (i, &(gamma, phi, t)) in triples.iter().enumerate() {
        let params = ShrinkageParams::constant(sched.steps(), gamma, phi, 1.0).unwrap();
        let r = diagnostics::verify_bias_moments(&params, &sched, t, &x0, n, 100 + i as u64).unwrap();
        worst_z = worst_z.max(r.mean_z().abs()).max(r.var_z().abs());
        if gamma < 1.0 && phi > 0.0 {
            let exact_mean = sched.alpha_bar(t - 1).sqrt();
            let exact_var = 1.0 - sched.alpha_bar(t - 1);
            ordering_ok &= r.predicted_mean_coeff < exact_mean && r.predicted_variance > exact_var;
        }
    }
    report(
        "2",
        worst_z <= 3.0 && ordering_ok,
        format!("20 triples, worst |z| {worst_z:.2}, shifted-moment ordering {ordering_ok}"),
        clock.elapsed(),
        Duration::from_secs(120),
    );
}

struct EnergyRun {
    report: diagnostics::EnergyReport,
    start: usize,
    steps: usize,
    elapsed: Duration,
}

fn energy_run() -> EnergyRun {
    let clock = Instant::now();
    let base = linear();
    let steps = 100;
    let sched = base.subsample(steps).unwrap();
    let data = GaussianDataModel::isotropic(1, 32, 32, 0.0, 1.0).unwrap();
    let pred = PerturbedPredictor::new(OptimalPredictor::new(data.clone(), base), 0.1, 3).unwrap();
    let x0 = data.sample(1024, 3);
    let start = diagnostics::default_start(steps);
    let report = diagnostics::energy_study(&pred, &sched, &x0, start, 3, ForwardNoise::Independent).unwrap();
    EnergyRun {
        report,
        start,
        steps,
        elapsed: clock.elapsed(),
    }
}

fn z(run: &EnergyRun, t: usize, c: Comparison, b: Subband) -> f64 {
    run.report.gap(t, c, b).unwrap().z()
}

#[test]
fn criterion_3_exposure_bias_direction() {
    let _serial = serial();
    let run = energy_run();
    let final_third: Vec<usize> = (1..=run.steps / 3).collect();
    let worst_ll = final_third
        .iter()
        .map(|&t| z(&run, t, Comparison::ReverseMinusForward, Subband::LL))
        .fold(f64::NEG_INFINITY, f64::max);
    let ll_ok = worst_ll < -3.0;

    let late = run.steps / 5;
    let mut early_hits = Vec::new();
    let mut late_hits = 0;
    for t in 1..=run.start {
        let hit = Subband::HIGH
            .iter()
            .any(|&b| z(&run, t, Comparison::ReverseMinusForward, b).abs() > 3.0);
        match (hit, t <= late) {
            (true, true) => late_hits += 1,
            (true, false) => early_hits.push(t),
            _ => {}
        }
    }
    let high_ok = early_hits.is_empty() && late_hits > 0;
    emit(format!(
        "criterion 3a: {} reverse-forward ll z over t in 1..={} is at most {worst_ll:.2}",
        if ll_ok { "PASS" } else { "FAIL" },
        run.steps / 3
    ));
    emit(format!(
        "criterion 3b: {} high-band |z| > 3 at {late_hits} of t <= {late}, and at {} earlier steps {:?}",
        if high_ok { "PASS" } else { "FAIL" },
        early_hits.len(),
        &early_hits[..early_hits.len().min(8)]
    ));
    report(
        "3",
        ll_ok && high_ok,
        format!("3a {ll_ok}, 3b {high_ok}"),
        run.elapsed,
        Duration::from_secs(300),
    );
}

#[test]
fn criterion_4_reconstruction_energy_ordering() {
    let _serial = serial();
    let run = energy_run();
    let mut worst = (f64::NEG_INFINITY, 0, "", "");
    for t in 1..=run.start {
        for band in Subband::ALL {
            for c in [Comparison::ReverseReconMinusForwardRecon, Comparison::ForwardReconMinusData] {
                let zt = z(&run, t, c, band);
                if zt > worst.0 {
                    worst = (zt, t, c.name(), band.name());
                }
            }
        }
    }
    report(
        "4",
        worst.0 <= 3.0,
        format!(
            "largest z against the ordering {:.2} at t = {}, {} {}",
            worst.0, worst.1, worst.2, worst.3
        ),
        run.elapsed,
        Duration::from_secs(300),
    );
}

#[test]
fn criterion_5_regulation_identity_and_scaling() {
    let _serial = serial();
    let clock = Instant::now();
    let base = linear();
    let data = GaussianDataModel::isotropic(2, 8, 8, 0.3, 0.8).unwrap();
    let pred = PerturbedPredictor::new(OptimalPredictor::new(data.clone(), base.clone()), 0.1, 5).unwrap();
    let shape = data.batch_shape(16);
    let mut identical = true;
    for kind in [SamplerKind::Ddpm, SamplerKind::Ddim] {
        let cfg = SamplerConfig::new(kind, 50, 5);
        let plain = sampler::sample(&pred, &base, &cfg, shape).unwrap();
        let neutral_policies = [
            WeightPolicy::neutral(),
            WeightPolicy::new(LowVariant::Variance, HighVariant::Variance, 0.0, 0.0, 0.2).unwrap(),
            WeightPolicy::new(LowVariant::Turnoff, HighVariant::Off, 1.0, 1.7, 0.2).unwrap(),
        ];
        for policy in neutral_policies {
            let regulated = sampler::sample(&pred, &base, &cfg.with_policy(policy), shape).unwrap();
            identical &= regulated.array() == plain.array();
        }
    }

    let x = TensorBatch::standard_normal(Shape::new(8, 3, 16, 16), 5, Domain::Data, 0);
    let before = subband_energy(&dwt2(&x).unwrap());
    let mut worst = 0.0f64;
    for (wl, wh) in [(1.013, 1.064), (0.5, 2.0), (0.0, 1.0), (1.2, 0.0), (3.0, 0.9)] {
        let after = subband_energy(&dwt2(&wpp_regulate(&x, wl, wh).unwrap()).unwrap());
        for band in Subband::ALL {
            let k = if band.is_high() { wh } else { wl };
            let expected = k * k * before.get(band);
            worst = worst.max((after.get(band) - expected).abs() / before.get(band));
        }
    }
    report(
        "5",
        identical && worst <= 1e-10,
        format!("neutral policies bit-identical {identical}, worst scaling error {worst:.2e}"),
        clock.elapsed(),
        Duration::from_secs(60),
    );
}

const PLAN: SearchPlan = SearchPlan {
    wl_range: (0.0, 0.07),
    wh_range: (0.95, 1.15),
    coarse: 0.01,
    fine: 0.001,
    neutral_w_h: 1.0,
};

fn w2_setup(eta: f64) -> (PerturbedPredictor<OptimalPredictor>, NoiseSchedule, GaussianDataModel) {
    let base = linear();
    let data = GaussianDataModel::isotropic(1, 8, 8, 0.0, 1.0).unwrap();
    let pred = PerturbedPredictor::new(OptimalPredictor::new(data.clone(), base.clone()), eta, 6).unwrap();
    (pred, base, data)
}

fn w2_experiment<'a>(
    pred: &'a PerturbedPredictor<OptimalPredictor>,
    sched: &'a NoiseSchedule,
    data: &'a GaussianDataModel,
) -> W2Experiment<'a, PerturbedPredictor<OptimalPredictor>> {
    W2Experiment {
        predictor: pred,
        schedule: sched,
        sampler: SamplerConfig::new(SamplerKind::Ddpm, 1000, 6),
        policy: WeightPolicy::new(LowVariant::Variance, HighVariant::Turnon, 0.0, 1.0, 0.2).unwrap(),
        target: data,
        batch: 1024,
    }
}

#[test]
fn criterion_6_search_improves_biased_sampler() {
    let _serial = serial();
    let clock = Instant::now();
    let (pred, sched, data) = w2_setup(0.1);
    let experiment = w2_experiment(&pred, &sched, &data);
    let neutral = experiment.neutral_objective().unwrap();
    let biased = experiment.search(&PLAN).unwrap();
    let improved = biased.objective < neutral;
    emit(format!(
        "criterion 6a: {} eta 0.1: searched (w_l, w_h) = ({}, {}) objective {:.5} vs neutral {:.5}",
        if improved { "PASS" } else { "FAIL" },
        biased.w_l,
        biased.w_h,
        biased.objective,
        neutral
    ));

    // Only the first stage decides w_l*.
    let (pred, sched, data) = w2_setup(0.0);
    let experiment = w2_experiment(&pred, &sched, &data);
    let (lo, hi) = PLAN.wl_range;
    let unbiased = two_stage_search(|w| experiment.objective(w, PLAN.neutral_w_h), lo, hi, PLAN.coarse, PLAN.fine).unwrap();
    let near_neutral = unbiased.best_w.abs() <= PLAN.fine + 1e-12;
    emit(format!(
        "criterion 6b: {} eta 0: searched w_l = {} (neutral 0, fine step {})",
        if near_neutral { "PASS" } else { "FAIL" },
        unbiased.best_w,
        PLAN.fine
    ));
    report(
        "6",
        improved && near_neutral,
        format!("6a {improved}, 6b {near_neutral}"),
        clock.elapsed(),
        Duration::from_secs(900),
    );
}

#[test]
fn criterion_7_search_replays_recorded_table() {
    let _serial = serial();
    let clock = Instant::now();
    let ws = [0.0, 0.03, 0.04, 0.049, 0.05, 0.06, 0.07];
    let values = [11.60, 9.00, 8.59, 8.46, 8.47, 8.59, 8.99];
    let lookup = LookupObjective::new(ws.into_iter().zip(values).collect()).unwrap();
    let r = two_stage_search(|w| Ok(lookup.eval(w)), 0.0, 0.07, 0.01, 0.001).unwrap();
    report(
        "7",
        r.best_w == 0.049 && r.best_objective == 8.46,
        format!("argmin {} objective {}", r.best_w, r.best_objective),
        clock.elapsed(),
        Duration::from_secs(10),
    );
}

#[test]
fn criterion_8_sampler_correctness() {
    let _serial = serial();
    let clock = Instant::now();
    let base = linear();
    let data = GaussianDataModel::isotropic(1, 8, 8, 0.0, 1.0).unwrap();
    let pred = OptimalPredictor::new(data.clone(), base.clone());
    let x = sampler::sample(&pred, &base, &SamplerConfig::new(SamplerKind::Ddpm, 1000, 8), data.batch_shape(4096)).unwrap();
    let mean = x.mean();
    let var = x.array().iter().map(|v| (v - mean).powi(2)).sum::<f64>() / x.shape().len() as f64;
    let ddpm_ok = mean.abs() <= 0.05 && (0.95..=1.05).contains(&var);

    let x0 = TensorBatch::standard_normal(Shape::new(16, 3, 8, 8), 8, Domain::Data, 1);
    let eps = TensorBatch::standard_normal(x0.shape(), 8, Domain::Forward, 1);
    let exact = ExactNoisePredictor::new(x0.clone(), base.clone());
    let mut worst = 0.0f64;
    for steps in [10, 50, 1000] {
        let sched = base.subsample(steps).unwrap();
        let mut xt = diffuse(&sched, &x0, &eps, steps).unwrap();
        for t in (1..=steps).rev() {
            xt = ddim_step(&exact, &sched, &xt, t, t - 1).unwrap();
        }
        worst = worst.max(xt.max_abs_diff(&x0).unwrap());
    }
    report(
        "8",
        ddpm_ok && worst <= 1e-10,
        format!("DDPM pooled mean {mean:.4}, variance {var:.4}; DDIM inversion error {worst:.2e}"),
        clock.elapsed(),
        Duration::from_secs(300),
    );
}
