//! Regularization sequences.
//!
//! * [`lambda_bh`]: `lambda_i = Phi^{-1}(1 - i q / 2p)`.
//! * [`lambda_bhc_gaussian`]: the same sequence inflated for the variance
//!   added by already-selected variables under an i.i.d. Gaussian design,
//!   truncated at its global minimum `k*`.
//! * [`lambda_bhc_weighted`]: the same construction with design-specific
//!   weights `w_k` estimated by Monte Carlo ([`estimate_weights`]).

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SlopeError};
use crate::linalg::least_squares_qr;
use crate::normal;
use crate::rng;
use crate::sorted_l1::LambdaSequence;

fn check_q(q: f64) -> Result<()> {
    if !(q > 0.0 && q < 1.0) {
        return Err(SlopeError::Domain(format!("q must lie in (0, 1), got {q}")));
    }
    Ok(())
}

/// `Phi^{-1}(u)`; see [`normal::quantile`].
pub fn normal_quantile(u: f64) -> Result<f64> {
    normal::quantile(u)
}

/// The BHq critical values `Phi^{-1}(1 - i q / 2p)`, `i = 1..p`.
pub fn lambda_bh(p: usize, q: f64) -> Result<LambdaSequence> {
    check_q(q)?;
    if p == 0 {
        return Err(SlopeError::Domain("p must be at least 1".into()));
    }
    let pf = p as f64;
    let values = (1..=p)
        .map(|i| normal::upper_quantile(i as f64 * q / (2.0 * pf)))
        .collect::<Result<Vec<_>>>()?;
    LambdaSequence::new(values)
}

/// A corrected sequence together with its pre-truncation values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrectedSequence {
    pub lambda: LambdaSequence,
    /// Zero-based index of the first global minimum of `uncapped`.
    pub k_star: usize,
    /// Uncapped values. May be shorter than `lambda` when the correction is
    /// undefined past some index (denominator reaching zero, weight table
    /// exhausted); the minimum is then interior to the defined prefix.
    pub uncapped: Vec<f64>,
}

impl CorrectedSequence {
    /// The critical point as a 1-based count, as it is usually reported.
    pub fn critical_point(&self) -> usize {
        self.k_star + 1
    }

    fn from_uncapped(uncapped: Vec<f64>, p: usize, source: &str) -> Result<Self> {
        let k_star = uncapped
            .iter()
            .enumerate()
            .fold(0, |best, (i, &v)| if v < uncapped[best] { i } else { best });
        if uncapped.len() < p && k_star + 1 == uncapped.len() {
            return Err(SlopeError::Config(format!(
                "{source}: correction still decreasing at index {} where it becomes undefined",
                uncapped.len()
            )));
        }
        let floor = uncapped[k_star];
        let values = (0..p)
            .map(|i| if i <= k_star { uncapped[i] } else { floor })
            .collect();
        Ok(Self {
            lambda: LambdaSequence::new(values)?,
            k_star,
            uncapped,
        })
    }
}

/// Denominator used for the Gaussian variance inflation of `lambda_i`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Denominator {
    /// `n - i + 1`: the number of rows minus the `i - 1` selected variables.
    /// Reproduces the published critical points.
    #[default]
    Shifted,
    /// `n - i`, the inverse-Wishart expectation `1 / (n - |S| - 1)` with
    /// `|S| = i - 1`.
    Literal,
}

impl Denominator {
    fn value(self, n: usize, i: usize) -> f64 {
        match self {
            Self::Shifted => n as f64 - i as f64 + 1.0,
            Self::Literal => n as f64 - i as f64,
        }
    }
}

/// Which values enter the inflation sum `sum_{j<i} lambda_j^2`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum InflationSum {
    /// The uncorrected BH values.
    #[default]
    Bh,
    /// The corrected values themselves (recursive, slightly more
    /// conservative).
    Recursive,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub struct GaussianCorrection {
    pub denominator: Denominator,
    pub sum: InflationSum,
}

/// Gaussian-design corrected sequence with the default convention.
pub fn lambda_bhc_gaussian(n: usize, p: usize, q: f64) -> Result<CorrectedSequence> {
    lambda_bhc_gaussian_with(n, p, q, GaussianCorrection::default())
}

pub fn lambda_bhc_gaussian_with(
    n: usize,
    p: usize,
    q: f64,
    correction: GaussianCorrection,
) -> Result<CorrectedSequence> {
    if n < 2 {
        return Err(SlopeError::Config("corrected sequences need n >= 2".into()));
    }
    let bh = lambda_bh(p, q)?;
    let bh = bh.as_slice();
    let mut uncapped = Vec::with_capacity(p);
    uncapped.push(bh[0]);
    let mut sum_sq = 0.0;
    for i in 2..=p {
        let prev = match correction.sum {
            InflationSum::Bh => bh[i - 2],
            InflationSum::Recursive => uncapped[i - 2],
        };
        sum_sq += prev * prev;
        let denom = correction.denominator.value(n, i);
        if denom <= 0.0 {
            break;
        }
        uncapped.push(bh[i - 1] * (1.0 + sum_sq / denom).sqrt());
    }
    CorrectedSequence::from_uncapped(uncapped, p, "gaussian correction (n too small)")
}

/// One row of a [`WeightTable`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeightEntry {
    pub k: usize,
    pub w_hat: f64,
    pub samples: usize,
    /// Monte Carlo standard error; unknown for tables read from disk.
    #[serde(default)]
    pub std_err: Option<f64>,
    /// Draws discarded because the selected columns were near-singular.
    #[serde(default)]
    pub resampled: usize,
}

/// Sampled weights `w_k`, linearly interpolated in `k`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightTable {
    entries: Vec<WeightEntry>,
}

impl WeightTable {
    pub fn new(entries: Vec<WeightEntry>) -> Result<Self> {
        if entries.is_empty() {
            return Err(SlopeError::Config("weight table is empty".into()));
        }
        if entries.windows(2).any(|w| w[0].k >= w[1].k) {
            return Err(SlopeError::Config("weight table k values must increase".into()));
        }
        if entries.iter().any(|e| !e.w_hat.is_finite() || e.w_hat < 0.0) {
            return Err(SlopeError::Config("weights must be finite and nonnegative".into()));
        }
        Ok(Self { entries })
    }

    /// Table with `w(k) = f(k)` at the given points.
    pub fn from_fn(ks: &[usize], f: impl Fn(usize) -> f64) -> Result<Self> {
        Self::new(
            ks.iter()
                .map(|&k| WeightEntry {
                    k,
                    w_hat: f(k),
                    samples: 0,
                    std_err: None,
                    resampled: 0,
                })
                .collect(),
        )
    }

    pub fn entries(&self) -> &[WeightEntry] {
        &self.entries
    }

    pub fn k_range(&self) -> (usize, usize) {
        (self.entries[0].k, self.entries[self.entries.len() - 1].k)
    }

    /// Piecewise-linear interpolation; `None` outside the sampled range.
    pub fn interpolate(&self, k: usize) -> Option<f64> {
        let (lo, hi) = self.k_range();
        if k < lo || k > hi {
            return None;
        }
        let idx = self.entries.partition_point(|e| e.k < k);
        let right = self.entries[idx];
        if right.k == k {
            return Some(right.w_hat);
        }
        let left = self.entries[idx - 1];
        let t = (k - left.k) as f64 / (right.k - left.k) as f64;
        Some(left.w_hat + t * (right.w_hat - left.w_hat))
    }
}

/// Corrected sequence with design-specific weights:
/// `lambda_i = lambda_BH(i) sqrt(1 + w(i - 1) sum_{j<i} lambda_BH(j)^2)`,
/// truncated at the first global minimum.
pub fn lambda_bhc_weighted(table: &WeightTable, p: usize, q: f64) -> Result<CorrectedSequence> {
    let bh = lambda_bh(p, q)?;
    let bh = bh.as_slice();
    let mut uncapped = Vec::with_capacity(p);
    uncapped.push(bh[0]);
    let mut sum_sq = 0.0;
    for i in 2..=p {
        sum_sq += bh[i - 2] * bh[i - 2];
        let Some(w) = table.interpolate(i - 1) else {
            if uncapped.len() == 1 {
                return Err(SlopeError::Config(format!(
                    "weight table covers k in {:?} but k = 1 is required",
                    table.k_range()
                )));
            }
            break;
        };
        uncapped.push(bh[i - 1] * (1.0 + w * sum_sq).sqrt());
    }
    CorrectedSequence::from_uncapped(uncapped, p, "weighted correction (table range insufficient)")
}

/// Grid of support sizes at which weights are sampled: 21 equidistant
/// points on `[1, min(n, p - 1)]` plus 19 interior points of the first
/// interval, rounded to integers and deduplicated. Falls back to every
/// integer in range when the interval holds fewer than 21 values.
pub fn weight_sampling_grid(n: usize, p: usize) -> Vec<usize> {
    let m = n.min(p.saturating_sub(1));
    if m == 0 {
        return Vec::new();
    }
    if m < 21 {
        return (1..=m).collect();
    }
    let step = (m - 1) as f64 / 20.0;
    let mut grid: Vec<usize> = (0..=20)
        .map(|j| (1.0 + j as f64 * step).round() as usize)
        .collect();
    let first_end = grid[1] as f64;
    grid.extend((1..=19).map(|t| (1.0 + t as f64 * (first_end - 1.0) / 20.0).round() as usize));
    grid.sort_unstable();
    grid.dedup();
    grid
}

/// Controls for the doubling Monte Carlo scheme in [`estimate_weights`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplingConfig {
    pub initial_samples: usize,
    /// Cap for `k < large_k_threshold`.
    pub max_samples_small_k: usize,
    /// Cap for `k >= large_k_threshold`.
    pub max_samples_large_k: usize,
    pub large_k_threshold: usize,
    /// Stop once a fresh batch moves the running estimate by less than this
    /// relative amount.
    pub rel_tol: f64,
    /// Draws whose selected columns have a condition estimate above this are
    /// discarded and redrawn.
    pub max_condition: f64,
    pub seed: u64,
}

impl Default for SamplingConfig {
    fn default() -> Self {
        Self {
            initial_samples: 64,
            max_samples_small_k: 8192,
            max_samples_large_k: 4096,
            large_k_threshold: 300,
            rel_tol: 0.02,
            max_condition: 1e12,
            seed: 0,
        }
    }
}

#[derive(Debug, Default, Clone, Copy)]
struct Moments {
    count: usize,
    sum: f64,
    sum_sq: f64,
    resampled: usize,
}

impl Moments {
    fn mean(&self) -> f64 {
        self.sum / self.count as f64
    }

    fn merge(&mut self, other: &Moments) {
        self.count += other.count;
        self.sum += other.sum;
        self.sum_sq += other.sum_sq;
        self.resampled += other.resampled;
    }

    fn std_err(&self) -> f64 {
        let n = self.count as f64;
        if self.count < 2 {
            return f64::NAN;
        }
        let var = (self.sum_sq - self.sum * self.sum / n) / (n - 1.0);
        (var.max(0.0) / n).sqrt()
    }
}

/// `(1/k) ||(X_S'X_S)^{-1} X_S' x_i||^2` for one random support `S` of size
/// `k` and one column `i` outside it.
fn sample_weight(
    design: &DMatrix<f64>,
    k: usize,
    rng: &mut rng::SlopeRng,
    max_cond: f64,
    resampled: &mut usize,
) -> Result<f64> {
    let p = design.ncols();
    let mut idx: Vec<usize> = (0..p).collect();
    for _ in 0..1000 {
        // Partial Fisher-Yates: the first k + 1 slots are a uniform draw.
        for j in 0..=k {
            let r = rng.random_range(j..p);
            idx.swap(j, r);
        }
        let support = &idx[..k];
        let target = idx[k];
        let xs = design.select_columns(support);
        let xi: DVector<f64> = design.column(target).into_owned();
        match least_squares_qr(&xs, &xi, max_cond) {
            Ok(c) => return Ok(c.norm_squared() / k as f64),
            Err(SlopeError::Singular(_)) => *resampled += 1,
            Err(e) => return Err(e),
        }
    }
    Err(SlopeError::Singular(format!(
        "k = {k}: every drawn support was singular"
    )))
}

fn sample_batch(
    design: &DMatrix<f64>,
    k: usize,
    size: usize,
    cfg: &SamplingConfig,
    batch: u64,
) -> Result<Moments> {
    let mut rng = rng::stream(cfg.seed, &[k as u64, batch]);
    let mut m = Moments::default();
    for _ in 0..size {
        let v = sample_weight(design, k, &mut rng, cfg.max_condition, &mut m.resampled)?;
        m.count += 1;
        m.sum += v;
        m.sum_sq += v * v;
    }
    Ok(m)
}

fn estimate_one(design: &DMatrix<f64>, k: usize, cfg: &SamplingConfig) -> Result<WeightEntry> {
    let cap = if k < cfg.large_k_threshold {
        cfg.max_samples_small_k
    } else {
        cfg.max_samples_large_k
    };
    let mut total = sample_batch(design, k, cfg.initial_samples.max(2), cfg, 0)?;
    let mut batch = 1;
    while total.count < cap {
        let size = total.count.min(cap - total.count);
        let reference = sample_batch(design, k, size, cfg, batch)?;
        let current = total.mean();
        let change = (reference.mean() - current).abs() / current.abs().max(f64::MIN_POSITIVE);
        total.merge(&reference);
        batch += 1;
        if change < cfg.rel_tol {
            break;
        }
    }
    Ok(WeightEntry {
        k,
        w_hat: total.mean(),
        samples: total.count,
        std_err: Some(total.std_err()),
        resampled: total.resampled,
    })
}

/// Monte Carlo estimates of `w_k = (1/k) E ||(X_S'X_S)^{-1} X_S' X_i||^2`
/// for a fixed design, over uniform supports `S` with `|S| = k` and `i`
/// outside `S`.
///
/// Each `k` starts from `initial_samples` draws; a reference batch as large
/// as everything drawn so far is compared with the running mean and then
/// merged into it, doubling the sample count, until the relative change
/// drops below `rel_tol` or the cap is reached. Batches use independent
/// streams derived from `(seed, k, batch)`, so the table is reproducible and
/// independent of the thread count.
pub fn estimate_weights(design: &DMatrix<f64>, ks: &[usize], cfg: &SamplingConfig) -> Result<WeightTable> {
    let (n, p) = design.shape();
    if let Some(&bad) = ks.iter().find(|&&k| k == 0 || k >= n.min(p)) {
        return Err(SlopeError::Config(format!(
            "support size {bad} outside [1, min(n, p) - 1] = [1, {}]",
            n.min(p).saturating_sub(1)
        )));
    }
    let mut ks = ks.to_vec();
    ks.sort_unstable();
    ks.dedup();
    let entries = ks
        .par_iter()
        .map(|&k| estimate_one(design, k, cfg))
        .collect::<Result<Vec<_>>>()?;
    WeightTable::new(entries)
}
