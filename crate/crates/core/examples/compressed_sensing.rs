//! Recover a sparse signal from a random subset of DCT coefficients, then
//! refit the selected support by least squares.
//!
//! `cargo run --release --example compressed_sensing`

use rand::Rng;
use rand_distr::StandardNormal;

use slope::harness::{make_design, make_signal, Design, DesignKind, DesignSpec, SignalSpec};
use slope::inference::{debias, metrics, support_of_solution};
use slope::lambda_seq::lambda_bh;
use slope::linalg::{materialize, LinearOperator};
use slope::solver::{fista_solve, ProblemInstance, SolverConfig};

fn main() -> slope::Result<()> {
    let (n, p) = (256, 1024);
    let mut spec = DesignSpec::new(DesignKind::DctRestricted, n, p);
    spec.seed = 5;
    let Design::Dct(x) = make_design(&spec)? else {
        unreachable!("restricted DCT designs are implicit")
    };
    let beta = make_signal(&SignalSpec::fixed(8.0, 20), p, 5)?;
    let mut rng = slope::rng::stream(5, &[]);
    let mut y = vec![0.0; n];
    x.apply(&beta, &mut y);
    for v in &mut y {
        *v += rng.sample::<f64, _>(StandardNormal);
    }

    let lambda = lambda_bh(p, 0.1)?;
    let res = fista_solve(&ProblemInstance::new(&x, y.clone(), lambda.clone())?, &SolverConfig::default(), &vec![0.0; p])?;
    let support = support_of_solution(&res.b, &lambda);
    let m = metrics(&res.b, &beta)?;
    println!("SLOPE: {} iterations, {} selected, FDP {:.3}, MSE {:.4}", res.iters, support.count, m.fdp, m.mse);

    let refit = debias(&materialize(&x), &y, &support.rejected)?;
    println!("refit on support: MSE {:.4}", metrics(&refit, &beta)?.mse);
    Ok(())
}
