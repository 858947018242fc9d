//! The lasso as SLOPE with a constant sequence, swept over a grid of
//! penalties with warm starts and duality-gap stopping.
//!
//! `cargo run --release --example lasso_path`

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use slope::solver::{fista_solve, ProblemInstance, SolverConfig};
use slope::sorted_l1::LambdaSequence;

fn main() -> slope::Result<()> {
    let (n, p) = (100, 150);
    let mut rng = slope::rng::stream(7, &[]);
    let x = DMatrix::from_fn(n, p, |_, _| rng.sample::<f64, _>(StandardNormal) / (n as f64).sqrt());
    let beta = DVector::from_fn(p, |j, _| if j % 15 == 0 { 4.0 } else { 0.0 });
    let y: Vec<f64> = (&x * beta).iter().map(|v| v + rng.sample::<f64, _>(StandardNormal)).collect();

    let lambda_max = (x.transpose() * DVector::from_column_slice(&y)).amax();
    let cfg = SolverConfig { record_history: true, ..SolverConfig::default() };
    let mut b = vec![0.0; p];
    println!("lambda,nonzeros,iterations,gap");
    for step in 1..=10 {
        let lambda = lambda_max * 0.75_f64.powi(step);
        let prob = ProblemInstance::new(&x, y.clone(), LambdaSequence::constant(lambda, p)?)?;
        let res = fista_solve(&prob, &cfg, &b)?;
        let nonzeros = res.b.iter().filter(|v| **v != 0.0).count();
        println!("{lambda:.4},{nonzeros},{},{:.2e}", res.iters, res.gap);
        b = res.b;
    }
    Ok(())
}
