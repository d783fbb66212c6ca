//! Sample with and without regulation, using a recorded preset and a
//! perturbed oracle, and score both against the data distribution.

use wpp::presets;
use wpp::search::gaussian_w2_objective;
use wpp::{sample, GaussianDataModel, OptimalPredictor, PerturbedPredictor, SamplerConfig};

fn main() -> wpp::Result<()> {
    let preset = presets::find("a-dpm-ls-25")?;
    let sched = preset.schedule.build(1000)?;
    let data = GaussianDataModel::isotropic(1, 16, 16, 0.0, 1.0)?;
    let pred = PerturbedPredictor::new(OptimalPredictor::new(data.clone(), sched.clone()), 0.1, 4)?;
    let shape = data.batch_shape(256);
    let base = SamplerConfig::new(preset.kind, preset.steps, 4);

    println!("preset {} ({}): {:?}", preset.name, preset.source, preset.policy());
    for (label, cfg) in [("plain", base), ("regulated", base.with_policy(preset.policy()))] {
        let x = sample(&pred, &sched, &cfg, shape)?;
        println!(
            "{label:>9}: mean {:+.4}  mean square {:.4}  w2 {:.4}",
            x.mean(),
            x.mean_square(),
            gaussian_w2_objective(&x, &data)?
        );
    }
    Ok(())
}
