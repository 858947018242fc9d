#![allow(dead_code)]

use rand::Rng;
use slope::rng::SlopeRng;
use slope::sorted_l1::LambdaSequence;

/// Exact sorted-frame prox by enumeration. The minimizer of
/// `1/2 ||y - x||^2 + sum lambda_i x_i` over `x_1 >= ... >= x_n >= 0` is
/// constant on consecutive blocks, each block at the mean of `y - lambda`
/// or at zero. Every split into blocks and every zero suffix is tried and
/// the best feasible candidate kept. Exponential in `n`.
pub fn brute_force_sorted_prox(y: &[f64], lambda: &[f64]) -> Vec<f64> {
    let n = y.len();
    assert!(n <= 12, "brute force is exponential");
    let d: Vec<f64> = y.iter().zip(lambda).map(|(a, b)| a - b).collect();
    let objective = |x: &[f64]| -> f64 {
        (0..n)
            .map(|i| 0.5 * (y[i] - x[i]).powi(2) + lambda[i] * x[i])
            .sum()
    };
    let mut best: Option<(f64, Vec<f64>)> = None;
    for cuts in 0u32..(1 << n.saturating_sub(1)) {
        let mut blocks = Vec::new();
        let mut start = 0;
        for i in 0..n {
            if i + 1 == n || cuts & (1 << i) != 0 {
                blocks.push((start, i));
                start = i + 1;
            }
        }
        for kept in 0..=blocks.len() {
            let mut x = vec![0.0; n];
            for &(s, e) in &blocks[..kept] {
                let avg = d[s..=e].iter().sum::<f64>() / (e - s + 1) as f64;
                x[s..=e].fill(avg);
            }
            let feasible = x.windows(2).all(|w| w[0] >= w[1]) && x.iter().all(|&v| v >= 0.0);
            if !feasible {
                continue;
            }
            let obj = objective(&x);
            if best.as_ref().is_none_or(|(b, _)| obj < *b) {
                best = Some((obj, x));
            }
        }
    }
    best.expect("the zero vector is always feasible").1
}

/// Random nonincreasing nonnegative sequence with `lambda_1 > 0`, sometimes
/// with ties and trailing zeros.
pub fn random_lambda(rng: &mut SlopeRng, n: usize) -> LambdaSequence {
    let scale = rng.random_range(0.1..5.0);
    let mut v: Vec<f64> = (0..n).map(|_| scale * rng.random::<f64>()).collect();
    if rng.random_bool(0.3) {
        let levels = rng.random_range(1..4);
        for x in &mut v {
            *x = (*x * levels as f64 / scale).ceil() * scale / levels as f64;
        }
    }
    if rng.random_bool(0.2) {
        let zeros = rng.random_range(0..n);
        for x in v.iter_mut().take(zeros) {
            *x = 0.0;
        }
    }
    v.sort_by(|a, b| b.total_cmp(a));
    if v[0] == 0.0 {
        v[0] = scale;
    }
    LambdaSequence::new(v).unwrap()
}

/// Random vector with a mix of signs, ties and exact zeros.
pub fn random_vector(rng: &mut SlopeRng, n: usize) -> Vec<f64> {
    let scale = rng.random_range(0.1..10.0);
    (0..n)
        .map(|_| match rng.random_range(0..10) {
            0 => 0.0,
            1 => scale,
            _ => scale * (2.0 * rng.random::<f64>() - 1.0),
        })
        .collect()
}

/// `|y|` sorted in decreasing order.
pub fn sorted_abs(y: &[f64]) -> Vec<f64> {
    let mut v: Vec<f64> = y.iter().map(|x| x.abs()).collect();
    v.sort_by(|a, b| b.total_cmp(a));
    v
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}
