//! Multiple testing with an orthogonal design: BH step-up, step-down and the
//! SLOPE test on the same z-scores.
//!
//! `cargo run --example testing`

use rand::Rng;
use rand_distr::StandardNormal;

use slope::inference::{fdr_threshold_estimate, metrics, slope_test, step_down, step_up};
use slope::lambda_seq::lambda_bh;

fn main() -> slope::Result<()> {
    let (p, k, q) = (1000, 30, 0.1);
    let mut rng = slope::rng::stream(11, &[]);
    let amplitude = (2.0 * (p as f64).ln()).sqrt();
    let truth: Vec<f64> = (0..p).map(|i| if i < k { amplitude } else { 0.0 }).collect();
    let z: Vec<f64> = truth.iter().map(|m| m + rng.sample::<f64, _>(StandardNormal)).collect();

    let lambda = lambda_bh(p, q)?;
    for (name, set) in [
        ("step-down", step_down(&z, q)?),
        ("SLOPE", slope_test(&z, &lambda)?),
        ("step-up", step_up(&z, q)?),
    ] {
        let false_ones = set.rejected.iter().filter(|&&i| i >= k).count();
        println!("{name:>9}: {:>3} rejections, {false_ones} false", set.count);
    }
    let (estimate, t) = fdr_threshold_estimate(&z, q)?;
    let m = metrics(&estimate, &truth)?;
    println!("FDR thresholding at |z| >= {t:.3}: {} kept, MSE {:.4}", m.r, m.mse);
    Ok(())
}
