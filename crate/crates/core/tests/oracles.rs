//! Values frozen from independent numpy computations.

use wpp::diagnostics::simulate_bias;
use wpp::{GaussianDataModel, NoiseSchedule, OptimalPredictor};

// For N(0, 1) data the optimal predictor is eps = sqrt(1 - ab) x, and one DDIM
// step multiplies x by sqrt(ab_prev ab) + sqrt((1 - ab_prev)(1 - ab)) <= 1.
// Products over the T' = 100 respacing of linear(1000), from t = 61 down.
const SHRINK_TO_30: f64 = 0.995_181_988_733_556_9;
const SHRINK_TO_0: f64 = 0.981_972_614_472_717_7;

#[test]
fn ddim_with_optimal_predictor_shrinks_white_data() {
    let base = NoiseSchedule::linear(1000, 1e-4, 0.02).unwrap();
    let sched = base.subsample(100).unwrap();
    let data = GaussianDataModel::isotropic(1, 8, 8, 0.0, 1.0).unwrap();
    let pred = OptimalPredictor::new(data.clone(), base);
    let x0 = data.sample(4, 9);
    let traj = simulate_bias(&pred, &sched, &x0, 60, 9).unwrap();
    for (t, expected) in [(30, SHRINK_TO_30), (0, SHRINK_TO_0)] {
        let i = traj.timesteps.iter().position(|&s| s == t).unwrap();
        for (r, s) in traj.reverse[i].array().iter().zip(traj.start.array()) {
            assert!((r - expected * s).abs() <= 1e-9 * s.abs().max(1.0), "t = {t}");
        }
    }
}
