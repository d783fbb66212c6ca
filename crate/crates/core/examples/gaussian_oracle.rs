//! The optimal noise predictor of a Gaussian data model beats a predictor
//! that assumes the wrong mean, and reconstruction inverts the forward map.

use wpp::model::{diffuse, optimal_eps, reconstruct_x0};
use wpp::rng::Domain;
use wpp::{GaussianDataModel, NoiseSchedule, TensorBatch};

fn main() -> wpp::Result<()> {
    let sched = NoiseSchedule::linear(1000, 1e-4, 0.02)?;
    let data = GaussianDataModel::isotropic(1, 8, 8, 0.5, 0.7)?;
    let wrong = GaussianDataModel::isotropic(1, 8, 8, -0.5, 0.7)?;
    let x0 = data.sample(2048, 1);
    let eps = TensorBatch::standard_normal(x0.shape(), 1, Domain::Forward, 0);

    println!("{:>5} {:>12} {:>12} {:>12}", "t", "mse optimal", "mse wrong", "recon err");
    for t in [10, 100, 400, 800] {
        let xt = diffuse(&sched, &x0, &eps, t)?;
        let good = optimal_eps(&data, &sched, &xt, t)?;
        let bad = optimal_eps(&wrong, &sched, &xt, t)?;
        let mse = |p: &TensorBatch| p.combine(1.0, &eps, -1.0).map(|d| d.mean_square());
        let recon = reconstruct_x0(&sched, &xt, &eps, t)?.max_abs_diff(&x0)?;
        println!("{t:>5} {:>12.5} {:>12.5} {recon:>12.1e}", mse(&good)?, mse(&bad)?);
    }
    Ok(())
}
