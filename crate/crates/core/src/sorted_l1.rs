//! The sorted l1 norm `J(b) = sum_i lambda_i |b|_(i)`, its dual ball and its
//! proximity operator.
//!
//! The prox is computed in a normalized frame where the input is sorted in
//! nonincreasing order and nonnegative. In that frame the problem
//!
//! ```text
//! minimize  1/2 ||y - x||^2 + sum_i lambda_i x_i
//! s.t.      x_1 >= x_2 >= ... >= x_n >= 0
//! ```
//!
//! is solved either by repeated block averaging ([`prox_reference_averaging`])
//! or by the linear-time stack algorithm ([`prox_stack`]). [`prox_sorted_l1`]
//! wraps the stack solver with the sort / sign bookkeeping for arbitrary input.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::error::{check_len, Result, SlopeError};

/// A nonincreasing, nonnegative regularization sequence with a positive
/// leading entry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct LambdaSequence(Vec<f64>);

impl LambdaSequence {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(SlopeError::InvalidLambda("sequence is empty".into()));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(SlopeError::InvalidLambda(format!(
                "entry {i} is not finite"
            )));
        }
        if values[0] <= 0.0 {
            return Err(SlopeError::InvalidLambda(
                "leading entry must be positive".into(),
            ));
        }
        if let Some(i) = values.windows(2).position(|w| w[0] < w[1]) {
            return Err(SlopeError::InvalidLambda(format!(
                "sequence increases between entries {i} and {}",
                i + 1
            )));
        }
        if values[values.len() - 1] < 0.0 {
            return Err(SlopeError::InvalidLambda("negative entries".into()));
        }
        Ok(Self(values))
    }

    /// Constant sequence: the sorted l1 norm reduces to `value * ||b||_1`.
    pub fn constant(value: f64, p: usize) -> Result<Self> {
        Self::new(vec![value; p])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn first(&self) -> f64 {
        self.0[0]
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }
}

impl TryFrom<Vec<f64>> for LambdaSequence {
    type Error = SlopeError;

    fn try_from(values: Vec<f64>) -> Result<Self> {
        Self::new(values)
    }
}

impl From<LambdaSequence> for Vec<f64> {
    fn from(seq: LambdaSequence) -> Self {
        seq.0
    }
}

impl std::ops::Index<usize> for LambdaSequence {
    type Output = f64;

    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

/// Input to the prox after normalization: sorted magnitudes plus the data
/// needed to map a sorted-frame result back to the original coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct SortedProxInput {
    /// `|y|` sorted in nonincreasing order.
    pub magnitudes: Vec<f64>,
    /// `permutation[r]` is the original index of the entry with rank `r`.
    pub permutation: Vec<usize>,
    /// Sign of each original entry; zeros get `+1`.
    pub signs: Vec<f64>,
}

impl SortedProxInput {
    /// Sorts `|y|` in nonincreasing order. The sort is stable, so ties keep
    /// their original index order.
    pub fn from_vector(y: &[f64]) -> Self {
        let mut permutation: Vec<usize> = (0..y.len()).collect();
        permutation.sort_by(|&a, &b| y[b].abs().total_cmp(&y[a].abs()));
        let magnitudes = permutation.iter().map(|&i| y[i].abs()).collect();
        let signs = y
            .iter()
            .map(|&v| if v < 0.0 { -1.0 } else { 1.0 })
            .collect();
        Self {
            magnitudes,
            permutation,
            signs,
        }
    }

    /// Maps a vector in the sorted frame back to the original order and
    /// signs.
    pub fn restore(&self, sorted: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; sorted.len()];
        for (rank, &idx) in self.permutation.iter().enumerate() {
            out[idx] = self.signs[idx] * sorted[rank];
        }
        out
    }
}

/// One block on the stack: indices `start..=end` share the value `value`;
/// `sum` is the unclamped sum of `y - lambda` over the block.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BlockTuple {
    pub start: usize,
    pub end: usize,
    pub sum: f64,
    pub value: f64,
}

impl BlockTuple {
    #[allow(clippy::len_without_is_empty)]
    pub fn len(&self) -> usize {
        self.end - self.start + 1
    }
}

/// Optimality certificate for a candidate sorted-frame prox output.
#[derive(Debug, Clone, PartialEq)]
pub struct KktCertificate {
    pub x: Vec<f64>,
    pub mu: Vec<f64>,
    pub max_violation: f64,
}

impl KktCertificate {
    pub fn is_valid(&self, tol: f64) -> bool {
        self.max_violation <= tol
    }
}

/// Returns the magnitudes of `b` sorted in nonincreasing order.
pub fn sorted_magnitudes(b: &[f64]) -> Vec<f64> {
    let mut mags: Vec<f64> = b.iter().map(|v| v.abs()).collect();
    mags.sort_unstable_by(|a, b| b.total_cmp(a));
    mags
}

/// `sum_i lambda_i |b|_(i)`.
pub fn sorted_l1_norm(b: &[f64], lambda: &LambdaSequence) -> Result<f64> {
    check_len("sorted_l1_norm: b vs lambda", lambda.len(), b.len())?;
    Ok(sorted_magnitudes(b)
        .iter()
        .zip(lambda.as_slice())
        .map(|(m, l)| m * l)
        .sum())
}

/// Largest partial-sum excess `max_i sum_{j<=i} (|w|_(j) - lambda_j)`,
/// clamped at zero. Zero exactly when `w` lies in the dual-norm unit ball.
pub fn dual_infeasibility(w: &[f64], lambda: &LambdaSequence) -> Result<f64> {
    check_len("dual_infeasibility: w vs lambda", lambda.len(), w.len())?;
    let mut partial = 0.0;
    let mut worst = 0.0_f64;
    for (m, l) in sorted_magnitudes(w).iter().zip(lambda.as_slice()) {
        partial += m - l;
        worst = worst.max(partial);
    }
    Ok(worst)
}

fn check_sorted_input(y: &[f64], lambda: &LambdaSequence) -> Result<()> {
    check_len("prox: y vs lambda", lambda.len(), y.len())?;
    if let Some(i) = y.windows(2).position(|w| w[0] < w[1]) {
        return Err(SlopeError::Contract(format!(
            "y must be nonincreasing (entries {i} and {} increase)",
            i + 1
        )));
    }
    if y.iter().any(|&v| v < 0.0 || v.is_nan()) {
        return Err(SlopeError::Contract("y must be nonnegative".into()));
    }
    Ok(())
}

/// One pass of block averaging: every maximal run over which `y - lambda`
/// is nondecreasing and not constant has both `y` and `lambda` replaced by
/// their averages over the run. Returns `None` when `y - lambda` is already
/// nonincreasing.
pub fn averaging_pass(y: &[f64], lambda: &[f64]) -> Option<(Vec<f64>, Vec<f64>)> {
    let n = y.len();
    let diff = |i: usize| y[i] - lambda[i];
    let mut y_next = y.to_vec();
    let mut l_next = lambda.to_vec();
    let mut changed = false;
    let mut start = 0;
    while start < n {
        let mut end = start;
        while end + 1 < n && diff(end) <= diff(end + 1) {
            end += 1;
        }
        if end > start && diff(start) < diff(end) {
            let len = (end - start + 1) as f64;
            let y_avg = y[start..=end].iter().sum::<f64>() / len;
            let l_avg = lambda[start..=end].iter().sum::<f64>() / len;
            y_next[start..=end].fill(y_avg);
            l_next[start..=end].fill(l_avg);
            changed = true;
        }
        start = end + 1;
    }
    changed.then_some((y_next, l_next))
}

/// Sorted-frame prox by repeated block averaging until `y - lambda` is
/// nonincreasing, then `(y - lambda)_+`.
///
/// Quadratic in the worst case; kept as the reference for [`prox_stack`].
pub fn prox_reference_averaging(y: &[f64], lambda: &LambdaSequence) -> Result<Vec<f64>> {
    check_sorted_input(y, lambda)?;
    let mut ys = y.to_vec();
    let mut ls = lambda.as_slice().to_vec();
    // Each pass strictly reduces the number of constant runs in y - lambda.
    while let Some((yn, ln)) = averaging_pass(&ys, &ls) {
        ys = yn;
        ls = ln;
    }
    Ok(ys
        .iter()
        .zip(&ls)
        .map(|(a, b)| (a - b).max(0.0))
        .collect())
}

/// Sorted-frame prox with the stack algorithm. Each index opens one block
/// and each block is merged at most once, so the cost is linear in `n`.
pub fn prox_stack(y: &[f64], lambda: &LambdaSequence) -> Result<Vec<f64>> {
    check_sorted_input(y, lambda)?;
    let mut x = vec![0.0; y.len()];
    prox_stack_into(y, lambda.as_slice(), &mut x);
    Ok(x)
}

/// Unchecked core of [`prox_stack`]; `y`, `lambda` and `out` must have equal
/// lengths and `y` must already be sorted.
pub(crate) fn prox_stack_into(y: &[f64], lambda: &[f64], out: &mut [f64]) {
    let starts = stack_blocks(y, lambda, out);
    let sums = out[..starts.len()].to_vec();
    let ends = starts.iter().skip(1).copied().chain([y.len()]);
    for ((&s, e), &t) in starts.iter().zip(ends).zip(&sums) {
        out[s..e].fill(block_value(t, e - s));
    }
}

fn block_value(sum: f64, len: usize) -> f64 {
    (sum / len as f64).max(0.0)
}

// Runs the stack pass and returns block starts, bottom first. The block sums
// are stored in `sums[..starts.len()]`; a block ends where the next begins.
// Keeping sums in the caller's buffer avoids a second length-n allocation.
fn stack_blocks(y: &[f64], lambda: &[f64], sums: &mut [f64]) -> Vec<usize> {
    let n = y.len();
    let mut starts: Vec<usize> = Vec::with_capacity(n);
    for k in 0..n {
        let mut start = k;
        let mut sum = y[k] - lambda[k];
        while let Some(&s) = starts.last() {
            let t = sums[starts.len() - 1];
            if block_value(t, start - s) > block_value(sum, k + 1 - start) {
                break;
            }
            start = s;
            sum += t;
            starts.pop();
        }
        sums[starts.len()] = sum;
        starts.push(start);
    }
    starts
}

/// Final block decomposition of the stack algorithm, bottom of the stack
/// first. Block values are strictly decreasing.
pub fn prox_stack_blocks(y: &[f64], lambda: &LambdaSequence) -> Result<Vec<BlockTuple>> {
    check_sorted_input(y, lambda)?;
    let mut sums = vec![0.0; y.len()];
    let starts = stack_blocks(y, lambda.as_slice(), &mut sums);
    let ends = starts.iter().skip(1).map(|&s| s - 1).chain([y.len().saturating_sub(1)]);
    Ok(starts
        .iter()
        .zip(ends)
        .zip(&sums)
        .map(|((&start, end), &sum)| BlockTuple {
            start,
            end,
            sum,
            value: block_value(sum, end - start + 1),
        })
        .collect())
}

/// Prox of the sorted l1 norm at an arbitrary vector `y`.
pub fn prox_sorted_l1(y: &[f64], lambda: &LambdaSequence) -> Result<Vec<f64>> {
    check_len("prox_sorted_l1: y vs lambda", lambda.len(), y.len())?;
    if y.iter().any(|v| v.is_nan()) {
        return Err(SlopeError::Contract("prox input contains NaN".into()));
    }
    let sorted = SortedProxInput::from_vector(y);
    let mut x = vec![0.0; y.len()];
    prox_stack_into(&sorted.magnitudes, lambda.as_slice(), &mut x);
    Ok(sorted.restore(&x))
}

/// Checks the optimality conditions of the sorted-frame prox problem at `x`.
///
/// The multipliers are rebuilt from stationarity,
/// `mu_i = mu_{i-1} + x_i - y_i + lambda_i` with `mu_0 = 0`, and the report
/// is the largest of: primal infeasibility (`x` increasing or negative),
/// negative multipliers, complementary slackness measured as
/// `|min(mu_i, x_i - x_{i+1})|` (with `x_{n+1} = 0`), and the stationarity
/// residual recomputed from the final multipliers.
pub fn kkt_verify(y: &[f64], lambda: &LambdaSequence, x: &[f64]) -> Result<KktCertificate> {
    check_len("kkt_verify: y vs lambda", lambda.len(), y.len())?;
    check_len("kkt_verify: x vs lambda", lambda.len(), x.len())?;
    let n = y.len();
    let lam = lambda.as_slice();
    let mut mu = vec![0.0; n];
    let mut prev = 0.0;
    for i in 0..n {
        mu[i] = prev + x[i] - y[i] + lam[i];
        prev = mu[i];
    }
    let mut worst = 0.0_f64;
    for i in 0..n {
        let next = if i + 1 < n { x[i + 1] } else { 0.0 };
        let gap = x[i] - next;
        worst = worst.max(-gap);
        worst = worst.max(-mu[i]);
        worst = worst.max(mu[i].min(gap).abs());
        let mu_prev = if i > 0 { mu[i - 1] } else { 0.0 };
        let stationarity = x[i] - y[i] + lam[i] - (mu[i] - mu_prev);
        worst = worst.max(stationarity.abs());
    }
    Ok(KktCertificate {
        x: x.to_vec(),
        mu,
        max_violation: worst,
    })
}

/// Orders `a` and `b` by magnitude, descending; used when ranking test
/// statistics.
pub(crate) fn by_magnitude_desc(a: f64, b: f64) -> Ordering {
    b.abs().total_cmp(&a.abs())
}
