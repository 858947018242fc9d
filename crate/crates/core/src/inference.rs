//! Multiple testing with the BHq critical values, SLOPE used as a testing
//! procedure, hard thresholding at the step-up cut, least-squares
//! debiasing and the usual error/power metrics.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Result, SlopeError};
use crate::lambda_seq::lambda_bh;
use crate::linalg::{least_squares_qr, LinearOperator};
use crate::solver::{fista_solve, ProblemInstance, SolverConfig, SolverResult};
use crate::sorted_l1::{by_magnitude_desc, prox_sorted_l1, LambdaSequence};

/// Relative threshold below which iterative-solver coefficients count as
/// zero (times `lambda_1`).
pub const SOLVER_ZERO_TOL: f64 = 1e-10;

/// Hypotheses rejected by a procedure. `threshold_index` is the number of
/// top-ranked statistics rejected (the cut in the sorted frame).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RejectionSet {
    /// Original indices, ascending.
    pub rejected: Vec<usize>,
    pub count: usize,
    pub threshold_index: usize,
}

impl RejectionSet {
    fn top_ranked(order: &[usize], cut: usize) -> Self {
        let mut rejected = order[..cut].to_vec();
        rejected.sort_unstable();
        Self {
            rejected,
            count: cut,
            threshold_index: cut,
        }
    }

    fn from_support(b: &[f64], zero_tol: f64) -> Self {
        let rejected: Vec<usize> = (0..b.len()).filter(|&i| b[i].abs() > zero_tol).collect();
        let count = rejected.len();
        Self {
            rejected,
            count,
            threshold_index: count,
        }
    }

    pub fn contains(&self, i: usize) -> bool {
        self.rejected.binary_search(&i).is_ok()
    }
}

/// Indices ordered by decreasing `|z|`, ties by index.
fn ranking(z: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..z.len()).collect();
    order.sort_by(|&a, &b| by_magnitude_desc(z[a], z[b]));
    order
}

/// BHq step-up: reject the `i_SU` largest `|z|`, where `i_SU` is the largest
/// `i` with `|z|_(i) > Phi^{-1}(1 - i q / 2p)`.
pub fn step_up(z: &[f64], q: f64) -> Result<RejectionSet> {
    let lambda = lambda_bh(z.len(), q)?;
    let order = ranking(z);
    let cut = (1..=z.len())
        .rev()
        .find(|&i| z[order[i - 1]].abs() > lambda[i - 1])
        .unwrap_or(0);
    Ok(RejectionSet::top_ranked(&order, cut))
}

/// BHq step-down: `i_SD` is one less than the first `i` with
/// `|z|_(i) <= Phi^{-1}(1 - i q / 2p)`; all are rejected when no such `i`
/// exists.
pub fn step_down(z: &[f64], q: f64) -> Result<RejectionSet> {
    let lambda = lambda_bh(z.len(), q)?;
    let order = ranking(z);
    let cut = (1..=z.len())
        .find(|&i| z[order[i - 1]].abs() <= lambda[i - 1])
        .map_or(z.len(), |i| i - 1);
    Ok(RejectionSet::top_ranked(&order, cut))
}

/// SLOPE as a test in the orthogonal frame: reject the coordinates where
/// `prox_lambda(z)` is nonzero. The prox yields exact zeros.
pub fn slope_test(z: &[f64], lambda: &LambdaSequence) -> Result<RejectionSet> {
    let b = prox_sorted_l1(z, lambda)?;
    Ok(RejectionSet::from_support(&b, 0.0))
}

/// SLOPE as a test for a general design: solve with FISTA and reject the
/// coefficients above `SOLVER_ZERO_TOL * lambda_1` in magnitude.
pub fn slope_test_general<A: LinearOperator>(
    prob: &ProblemInstance<A>,
    cfg: &SolverConfig,
) -> Result<(RejectionSet, SolverResult)> {
    let res = fista_solve(prob, cfg, &vec![0.0; prob.p()])?;
    let set = support_of_solution(&res.b, prob.lambda());
    Ok((set, res))
}

/// Support of a solver output with the near-zero convention.
pub fn support_of_solution(b: &[f64], lambda: &LambdaSequence) -> RejectionSet {
    RejectionSet::from_support(b, SOLVER_ZERO_TOL * lambda.first())
}

/// Hard thresholding at the step-up critical value `t = Phi^{-1}(1 - q_{i_SU})`.
/// With no step-up rejection the threshold falls back to the first critical
/// value. Returns `(estimate, threshold)`.
pub fn fdr_threshold_estimate(y: &[f64], q: f64) -> Result<(Vec<f64>, f64)> {
    let lambda = lambda_bh(y.len(), q)?;
    let cut = step_up(y, q)?.threshold_index;
    let t = lambda[cut.max(1) - 1];
    let est = y.iter().map(|&v| if v.abs() >= t { v } else { 0.0 }).collect();
    Ok((est, t))
}

/// Least squares restricted to `support`, zeros elsewhere.
pub fn debias(x: &DMatrix<f64>, y: &[f64], support: &[usize]) -> Result<Vec<f64>> {
    check_len("debias: response length vs design rows", x.nrows(), y.len())?;
    if let Some(&bad) = support.iter().find(|&&j| j >= x.ncols()) {
        return Err(SlopeError::Dimension {
            what: "debias: support index vs design columns",
            expected: x.ncols(),
            got: bad,
        });
    }
    let mut out = vec![0.0; x.ncols()];
    if support.is_empty() {
        return Ok(out);
    }
    let xs = x.select_columns(support);
    let coef = least_squares_qr(&xs, &DVector::from_column_slice(y), 1e12).map_err(|e| {
        SlopeError::Singular(format!("restricted design is rank deficient ({e})"))
    })?;
    for (&j, c) in support.iter().zip(coef.iter()) {
        out[j] = *c;
    }
    Ok(out)
}

/// Selection and estimation quality of one estimate against the truth.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExperimentMetrics {
    /// False discoveries.
    pub v: usize,
    /// Discoveries.
    pub r: usize,
    /// Nonzeros in the truth.
    pub k: usize,
    pub fdp: f64,
    pub tpp: f64,
    pub mse: f64,
}

impl ExperimentMetrics {
    pub fn power(&self) -> f64 {
        self.tpp
    }
}

pub fn metrics(estimate: &[f64], truth: &[f64]) -> Result<ExperimentMetrics> {
    check_len("metrics: estimate vs truth", truth.len(), estimate.len())?;
    let mut v = 0;
    let mut r = 0;
    let mut tp = 0;
    let mut k = 0;
    let mut sq = 0.0;
    for (&e, &t) in estimate.iter().zip(truth) {
        let selected = e != 0.0;
        let signal = t != 0.0;
        r += usize::from(selected);
        k += usize::from(signal);
        v += usize::from(selected && !signal);
        tp += usize::from(selected && signal);
        sq += (e - t) * (e - t);
    }
    Ok(ExperimentMetrics {
        v,
        r,
        k,
        fdp: v as f64 / r.max(1) as f64,
        tpp: tp as f64 / k.max(1) as f64,
        mse: if truth.is_empty() { 0.0 } else { sq / truth.len() as f64 },
    })
}

/// Estimate that keeps the observed value on a rejection set, zero
/// elsewhere. Lets test procedures feed [`metrics`].
pub fn estimate_from_rejections(z: &[f64], set: &RejectionSet) -> Vec<f64> {
    let mut out = vec![0.0; z.len()];
    for &i in &set.rejected {
        out[i] = z[i];
    }
    out
}
