//! Linear and cosine schedules, and a 10-step respacing of the linear one.

use wpp::NoiseSchedule;

fn main() -> wpp::Result<()> {
    let linear = NoiseSchedule::linear(1000, 1e-4, 0.02)?;
    let cosine = NoiseSchedule::cosine(1000)?;
    println!("{:>5} {:>10} {:>10}", "t", "linear ab", "cosine ab");
    for t in [1, 100, 250, 500, 750, 1000] {
        println!("{t:>5} {:>10.5} {:>10.5}", linear.alpha_bar(t), cosine.alpha_bar(t));
    }

    let coarse = linear.subsample(10)?;
    println!("\n10-step respacing of the linear schedule");
    println!("{:>3} {:>6} {:>10} {:>8} {:>8}", "k", "model", "ab", "beta", "sigma");
    for k in 1..=coarse.steps() {
        println!(
            "{k:>3} {:>6} {:>10.5} {:>8.4} {:>8.4}",
            coarse.model_timestep(k),
            coarse.alpha_bar(k),
            coarse.beta(k),
            coarse.sigma(k)
        );
    }
    Ok(())
}
