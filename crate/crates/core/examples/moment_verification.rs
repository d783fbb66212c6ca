//! Monte-Carlo moments of one biased reverse step against the closed forms.

use wpp::diagnostics::{random_triples, verify_bias_moments, MomentReport};
use wpp::model::ShrinkageParams;
use wpp::{GaussianDataModel, NoiseSchedule};

fn main() -> wpp::Result<()> {
    let sched = NoiseSchedule::linear(1000, 1e-4, 0.02)?;
    let x0 = GaussianDataModel::isotropic(1, 8, 8, 0.0, 1.0)?.sample(1, 6);
    println!("{}", MomentReport::CSV_HEADER);
    let mut passed = 0;
    let triples = random_triples(8, sched.steps(), 0.5, 6);
    for (i, &(gamma, phi, t)) in triples.iter().enumerate() {
        let params = ShrinkageParams::constant(sched.steps(), gamma, phi, 1.0)?;
        let report = verify_bias_moments(&params, &sched, t, &x0, 50_000, 6 + i as u64)?;
        println!("{}", report.csv_row());
        passed += usize::from(report.passes(3.0));
    }
    println!("# {passed} of {} within 3 standard errors", triples.len());
    Ok(())
}
