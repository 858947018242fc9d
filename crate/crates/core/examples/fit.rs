//! Fit SLOPE to a Gaussian design with FISTA and plain proximal gradient.
//!
//! `cargo run --release --example fit`

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use slope::inference::{metrics, support_of_solution};
use slope::lambda_seq::lambda_bh;
use slope::linalg::spectral_norm_sq;
use slope::solver::{fista_solve, prox_gradient_solve, ProblemInstance, SolverConfig};

fn main() -> slope::Result<()> {
    let (n, p, k) = (200, 400, 10);
    let mut rng = slope::rng::stream(2024, &[]);
    let x = DMatrix::from_fn(n, p, |_, _| rng.sample::<f64, _>(StandardNormal) / (n as f64).sqrt());
    let beta: Vec<f64> = (0..p).map(|j| if j < k { 6.0 } else { 0.0 }).collect();
    let y: Vec<f64> = (&x * DVector::from_column_slice(&beta))
        .iter()
        .map(|v| v + rng.sample::<f64, _>(StandardNormal))
        .collect();

    println!("||X||^2 by power iteration: {:.4}", spectral_norm_sq(&x));
    let lambda = lambda_bh(p, 0.1)?;
    let prob = ProblemInstance::new(&x, y, lambda.clone())?;
    let cfg = SolverConfig::default();
    for (name, res) in [
        ("fista", fista_solve(&prob, &cfg, &vec![0.0; p])?),
        ("prox-gradient", prox_gradient_solve(&prob, &cfg, &vec![0.0; p])?),
    ] {
        let support = support_of_solution(&res.b, &lambda);
        let m = metrics(&res.b, &beta)?;
        println!(
            "{name:>13}: {:>5} iterations, objective {:.6}, gap {:.1e}, {} selected, FDP {:.3}, power {:.2}",
            res.iters,
            res.objective,
            res.gap,
            support.count,
            m.fdp,
            m.power()
        );
    }
    Ok(())
}
