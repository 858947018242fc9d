//! Lasso false discovery predictions from state evolution.
//!
//! `cargo run --release --example amp`

use slope::amp::{alpha_min, high_snr_fdr, state_evolution, weak_threshold, PriorSpec};

fn main() -> slope::Result<()> {
    for delta in [0.5, 1.0, 2.0] {
        println!("delta = {delta}: alpha_min = {:.4}", alpha_min(delta)?);
    }
    println!("weak threshold at delta = 0.5: eps* = {:.4}", weak_threshold(0.5)?);

    let lambda = 3.717;
    println!("\nmixture prior, sd = 3 lambda, delta = 1");
    println!("eps, alpha, tau, FDP, power");
    for eps in [0.01, 0.05, 0.1, 0.2, 0.3] {
        let fp = state_evolution(&PriorSpec::gaussian_mixture(eps, 3.0 * lambda)?, 1.0, lambda)?;
        println!("{eps}, {:.4}, {:.4}, {:.4}, {:.4}", fp.alpha, fp.tau, fp.fdp, fp.power);
    }

    println!("\nhigh-SNR limit, delta = 1");
    println!("eps, regime, q*, power");
    for eps in [0.05, 0.1, 0.2, 0.4] {
        let h = high_snr_fdr(eps, 1.0)?;
        println!("{eps}, {}, {:.4}, {:.4}", h.regime.as_str(), h.q_star, h.power);
    }
    Ok(())
}
