//! Regularizing sequences: the BH sequence, its Gaussian-design correction
//! and the critical point where the correction stops decreasing, plus the
//! Monte Carlo weighted version for an arbitrary design.
//!
//! `cargo run --release --example sequences`

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;

use slope::lambda_seq::{
    estimate_weights, lambda_bh, lambda_bhc_gaussian, lambda_bhc_weighted, normal_quantile,
    SamplingConfig,
};

fn main() -> slope::Result<()> {
    println!("Phi^-1(1 - 1e-12) = {:.10}", normal_quantile(1.0 - 1e-12)?);
    let bh = lambda_bh(1000, 0.1)?;
    println!("lambda_BH(p=1000, q=0.1): first {:.4}, last {:.4}", bh.first(), bh[999]);

    for (n, p) in [(5000, 5000), (10000, 5000)] {
        for q in [0.05, 0.1, 0.2] {
            let c = lambda_bhc_gaussian(n, p, q)?;
            println!("n={n:>5} p={p} q={q:.2}: k* = {}", c.critical_point());
        }
    }

    let (n, p) = (250, 500);
    let mut rng = slope::rng::stream(3, &[]);
    let x = DMatrix::from_fn(n, p, |_, _| rng.sample::<f64, _>(StandardNormal) / (n as f64).sqrt());
    let table = estimate_weights(&x, &[1, 5, 20, 50, 100], &SamplingConfig { seed: 3, ..SamplingConfig::default() })?;
    println!("k, w_hat, 1/(n-k-1), samples");
    for e in table.entries() {
        println!("{}, {:.5}, {:.5}, {}", e.k, e.w_hat, 1.0 / (n - e.k - 1) as f64, e.samples);
    }
    let weighted = lambda_bhc_weighted(&table, p, 0.1)?;
    let gaussian = lambda_bhc_gaussian(n, p, 0.1)?;
    println!(
        "k*: {} from sampled weights, {} from the Gaussian formula",
        weighted.critical_point(),
        gaussian.critical_point()
    );
    Ok(())
}
