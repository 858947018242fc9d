//! A small simulation study: SLOPE with the BH and corrected sequences on
//! Gaussian designs, as the signal count grows.
//!
//! `cargo run --release --example simulate`

use slope::harness::{
    run_experiment, DesignKind, DesignSpec, ExperimentConfig, LambdaKind, Method, SignalSpec,
};
use slope::solver::SolverConfig;

fn main() -> slope::Result<()> {
    let p = 200;
    let amplitude = 5.0 * (2.0 * (p as f64).ln()).sqrt();
    let k_star = slope::lambda_seq::lambda_bhc_gaussian(p, p, 0.1)?.critical_point();
    println!("corrected sequence is designed for k <= {k_star}");
    println!("sequence, k, FDR, se, power");
    for lambda in [LambdaKind::Bh, LambdaKind::BhcGaussian] {
        for k in [1, 3, 5, 20] {
            let cfg = ExperimentConfig {
                design: DesignSpec::new(DesignKind::GaussianIid, p, p),
                signal: SignalSpec::fixed(amplitude, k),
                method: Method::Slope { lambda, q: 0.1 },
                debias: false,
                replications: 50,
                noise_sd: 1.0,
                master_seed: 1,
                solver: SolverConfig::default(),
            };
            let s = run_experiment(&cfg)?.summary;
            println!("{lambda:?}, {k}, {:.3}, {:.3}, {:.3}", s.fdr.mean, s.fdr.se, s.tpp.mean);
        }
    }
    Ok(())
}
