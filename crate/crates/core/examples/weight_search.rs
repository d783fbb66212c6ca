//! Two-stage grid search: first on recorded objective values, then on a
//! small sampling experiment with a perturbed oracle.

use wpp::sampler::{HighVariant, LowVariant};
use wpp::search::{two_stage_search, LookupObjective, SearchPlan, W2Experiment};
use wpp::{GaussianDataModel, NoiseSchedule, OptimalPredictor, PerturbedPredictor, SamplerConfig, SamplerKind, WeightPolicy};

fn main() -> wpp::Result<()> {
    let recorded = LookupObjective::new(vec![
        (0.0, 11.60),
        (0.03, 9.00),
        (0.04, 8.59),
        (0.049, 8.46),
        (0.05, 8.47),
        (0.06, 8.59),
        (0.07, 8.99),
    ])?;
    let r = two_stage_search(|w| Ok(recorded.eval(w)), 0.0, 0.07, 0.01, 0.001)?;
    println!(
        "recorded values: coarse best {} ({}), final {} ({})",
        r.coarse_best().w,
        r.coarse_best().objective,
        r.best_w,
        r.best_objective
    );

    let sched = NoiseSchedule::linear(1000, 1e-4, 0.02)?;
    let data = GaussianDataModel::isotropic(1, 8, 8, 0.0, 1.0)?;
    let pred = PerturbedPredictor::new(OptimalPredictor::new(data.clone(), sched.clone()), 0.1, 7)?;
    let experiment = W2Experiment {
        predictor: &pred,
        schedule: &sched,
        sampler: SamplerConfig::new(SamplerKind::Ddpm, 50, 7),
        policy: WeightPolicy::new(LowVariant::Variance, HighVariant::Turnon, 0.0, 1.0, 0.2)?,
        target: &data,
        batch: 256,
    };
    let plan = SearchPlan {
        wl_range: (0.0, 0.07),
        wh_range: (0.95, 1.15),
        coarse: 0.01,
        fine: 0.001,
        neutral_w_h: 1.0,
    };
    let neutral = experiment.neutral_objective()?;
    let found = experiment.search(&plan)?;
    println!(
        "sampling experiment: w_l {} w_h {} objective {:.5} (no regulation {neutral:.5})",
        found.w_l, found.w_h, found.objective
    );
    Ok(())
}
