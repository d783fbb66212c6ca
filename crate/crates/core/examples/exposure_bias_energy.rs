//! Forward versus reverse subband energies along a short bias simulation,
//! with the paired standard error of each gap. Writes the two CSV tables to
//! the directory given as the first argument, if any.

use wpp::diagnostics::{default_start, energy_study, Comparison, ForwardNoise};
use wpp::{GaussianDataModel, NoiseSchedule, OptimalPredictor, PerturbedPredictor, Subband};

fn main() -> wpp::Result<()> {
    let base = NoiseSchedule::linear(1000, 1e-4, 0.02)?;
    let steps = 50;
    let sched = base.subsample(steps)?;
    let data = GaussianDataModel::isotropic(1, 16, 16, 0.0, 1.0)?;
    let pred = PerturbedPredictor::new(OptimalPredictor::new(data.clone(), base), 0.1, 5)?;
    let x0 = data.sample(256, 5);
    let start = default_start(steps);
    let report = energy_study(&pred, &sched, &x0, start, 5, ForwardNoise::Independent)?;

    println!("{:>3} {:>16} {:>16}", "t", "ll gap (z)", "hh gap (z)");
    for t in (0..=start).rev().step_by(5) {
        let ll = report.gap(t, Comparison::ReverseMinusForward, Subband::LL).expect("row");
        let hh = report.gap(t, Comparison::ReverseMinusForward, Subband::HH).expect("row");
        println!("{t:>3} {:>+9.4} ({:>+5.1}) {:>+9.4} ({:>+5.1})", ll.diff, ll.z(), hh.diff, hh.z());
    }

    if let Some(dir) = std::env::args().nth(1) {
        let dir = std::path::Path::new(&dir);
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("energy.csv"), report.curve.to_csv())?;
        std::fs::write(dir.join("energy_gaps.csv"), report.gaps_csv())?;
        println!("wrote {}", dir.display());
    }
    Ok(())
}
