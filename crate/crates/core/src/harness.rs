//! Simulation engine: designs, signals, methods, replication loop, reports.
//!
//! Seeds. Every replication `r` draws from three streams
//! `rng::stream(master_seed, [tag, r])` with tags [`DESIGN_STREAM`],
//! [`SIGNAL_STREAM`] and [`NOISE_STREAM`]. A design that stays fixed across
//! replications uses `rng::stream(master_seed, [DESIGN_STREAM])`. The RNG is
//! ChaCha8, so reports are reproducible byte for byte.

use std::io::Write;

use nalgebra::DMatrix;
use rand::seq::{index, SliceRandom};
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Result, SlopeError};
use crate::inference::{
    debias, estimate_from_rejections, fdr_threshold_estimate, metrics, step_up,
    support_of_solution, ExperimentMetrics, RejectionSet,
};
use crate::io::fmt_f64;
use crate::lambda_seq::{lambda_bh, lambda_bhc_gaussian};
use crate::linalg::{LinearOperator, RestrictedDct};
use crate::rng::{self, SlopeRng};
use crate::solver::{fista_solve, ProblemInstance, SolverConfig, SolverResult};
use crate::sorted_l1::{prox_sorted_l1, LambdaSequence};

pub const DESIGN_STREAM: u64 = 1;
pub const SIGNAL_STREAM: u64 = 2;
pub const NOISE_STREAM: u64 = 3;

/// Largest share of failed solves an experiment tolerates.
pub const MAX_FAILURE_RATE: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum DesignKind {
    /// Orthonormal columns: the identity when `n == p`.
    Orthogonal,
    /// Entries i.i.d. `N(0, 1/n)`.
    GaussianIid,
    /// `n` rows of the orthonormal DCT-II (row 0 always kept), scaled by
    /// `sqrt(p / n)`.
    DctRestricted,
    /// `Sigma^{-1/2}` for `Sigma = (1 - rho) I + rho 11'`, columns scaled to
    /// unit norm. Square.
    EquicorrelatedWhitened { rho: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DesignSpec {
    pub kind: DesignKind,
    pub n: usize,
    pub p: usize,
    #[serde(default)]
    pub seed: u64,
    /// Draw a new design for every replication. Defaults to true for
    /// Gaussian designs only.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub redraw: Option<bool>,
}

impl DesignSpec {
    pub fn new(kind: DesignKind, n: usize, p: usize) -> Self {
        Self {
            kind,
            n,
            p,
            seed: 0,
            redraw: None,
        }
    }

    pub fn redraws(&self) -> bool {
        self.redraw
            .unwrap_or(matches!(self.kind, DesignKind::GaussianIid))
    }

    fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(SlopeError::Config(msg));
        if self.n == 0 || self.p == 0 {
            return bad(format!("design needs n, p >= 1, got {}x{}", self.n, self.p));
        }
        match self.kind {
            DesignKind::Orthogonal if self.n < self.p => {
                bad(format!("orthogonal design needs n >= p, got {}x{}", self.n, self.p))
            }
            DesignKind::DctRestricted if self.n > self.p => {
                bad(format!("restricted DCT needs n <= p, got {}x{}", self.n, self.p))
            }
            DesignKind::EquicorrelatedWhitened { rho } => {
                if self.n != self.p {
                    bad(format!("whitened design is square, got {}x{}", self.n, self.p))
                } else if !(rho > -1.0 / (self.p as f64 - 1.0).max(1.0) && rho < 1.0) {
                    bad(format!("rho = {rho} does not give a positive definite Sigma"))
                } else {
                    Ok(())
                }
            }
            _ => Ok(()),
        }
    }
}

/// A generated design.
#[derive(Debug)]
pub enum Design {
    Dense(DMatrix<f64>),
    Dct(RestrictedDct),
}

impl Design {
    /// Columns `idx` as a dense matrix.
    pub fn columns(&self, idx: &[usize]) -> DMatrix<f64> {
        match self {
            Design::Dense(m) => m.select_columns(idx),
            Design::Dct(op) => {
                let mut out = DMatrix::zeros(op.nrows(), idx.len());
                let mut e = vec![0.0; op.ncols()];
                let mut col = vec![0.0; op.nrows()];
                for (c, &j) in idx.iter().enumerate() {
                    e[j] = 1.0;
                    op.apply(&e, &mut col);
                    e[j] = 0.0;
                    out.column_mut(c).copy_from_slice(&col);
                }
                out
            }
        }
    }
}

impl LinearOperator for Design {
    fn nrows(&self) -> usize {
        match self {
            Design::Dense(m) => m.nrows(),
            Design::Dct(op) => op.nrows(),
        }
    }

    fn ncols(&self) -> usize {
        match self {
            Design::Dense(m) => m.ncols(),
            Design::Dct(op) => op.ncols(),
        }
    }

    fn apply(&self, x: &[f64], out: &mut [f64]) {
        match self {
            Design::Dense(m) => m.apply(x, out),
            Design::Dct(op) => op.apply(x, out),
        }
    }

    fn apply_transpose(&self, y: &[f64], out: &mut [f64]) {
        match self {
            Design::Dense(m) => m.apply_transpose(y, out),
            Design::Dct(op) => op.apply_transpose(y, out),
        }
    }
}

/// `(diagonal, off-diagonal)` of `Sigma^{-1/2}` for the equicorrelated
/// `Sigma`, from its two eigenvalues `1 - rho` and `1 - rho + p rho`.
pub fn equicorrelated_inverse_sqrt(p: usize, rho: f64) -> (f64, f64) {
    let a = 1.0 / (1.0 - rho).sqrt();
    let b = (1.0 / (1.0 - rho + p as f64 * rho).sqrt() - a) / p as f64;
    (a + b, b)
}

fn gaussian_matrix(rng: &mut SlopeRng, n: usize, p: usize, scale: f64) -> DMatrix<f64> {
    DMatrix::from_fn(n, p, |_, _| scale * rng.sample::<f64, _>(StandardNormal))
}

/// Builds the design described by `spec` from `spec.seed`.
pub fn make_design(spec: &DesignSpec) -> Result<Design> {
    make_design_with(spec, &mut rng::stream(spec.seed, &[DESIGN_STREAM]))
}

fn make_design_with(spec: &DesignSpec, rng: &mut SlopeRng) -> Result<Design> {
    spec.validate()?;
    let (n, p) = (spec.n, spec.p);
    Ok(match spec.kind {
        DesignKind::Orthogonal if n == p => Design::Dense(DMatrix::identity(n, p)),
        DesignKind::Orthogonal => {
            Design::Dense(gaussian_matrix(rng, n, p, 1.0).qr().q())
        }
        DesignKind::GaussianIid => {
            Design::Dense(gaussian_matrix(rng, n, p, 1.0 / (n as f64).sqrt()))
        }
        DesignKind::DctRestricted => {
            let mut rows: Vec<usize> = index::sample(rng, p - 1, n - 1)
                .into_iter()
                .map(|r| r + 1)
                .collect();
            rows.push(0);
            rows.sort_unstable();
            Design::Dct(RestrictedDct::new(p, rows, (p as f64 / n as f64).sqrt())?)
        }
        DesignKind::EquicorrelatedWhitened { rho } => {
            let (d, o) = equicorrelated_inverse_sqrt(p, rho);
            let norm = (d * d + (p as f64 - 1.0) * o * o).sqrt();
            Design::Dense(DMatrix::from_fn(p, p, |i, j| {
                if i == j {
                    d / norm
                } else {
                    o / norm
                }
            }))
        }
    })
}

/// Magnitude profile of the nonzero coefficients.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SignalClass {
    /// Classes 1 to 7 of the compressive-sensing study, in units of
    /// `sqrt(2 log p)`: 1 and 2 Gaussian with sd 2 and 3; 3 constant 1.2;
    /// 4, 5, 6 linear from 1.2 to 0.6, 1.5 to 0.5, 4.5 to 1.5; 7 dense,
    /// `1.2 (i / k)^{-1.2}`.
    Class(u8),
    Fixed { fixed_amplitude: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SignalSpec {
    pub class: SignalClass,
    /// Support size; for class 7 the decay scale.
    pub k: usize,
}

impl SignalSpec {
    pub fn fixed(amplitude: f64, k: usize) -> Self {
        Self {
            class: SignalClass::Fixed {
                fixed_amplitude: amplitude,
            },
            k,
        }
    }

    fn validate(&self, p: usize) -> Result<()> {
        if self.k > p {
            return Err(SlopeError::Config(format!("k = {} exceeds p = {p}", self.k)));
        }
        match self.class {
            SignalClass::Class(c) if !(1..=7).contains(&c) => {
                Err(SlopeError::Config(format!("signal class {c} is not in 1..=7")))
            }
            SignalClass::Class(7) if self.k == 0 => {
                Err(SlopeError::Config("class 7 needs k >= 1".into()))
            }
            _ => Ok(()),
        }
    }
}

/// Evenly spaced values from `hi` down to `lo`.
fn linear_range(hi: f64, lo: f64, k: usize) -> Vec<f64> {
    if k == 1 {
        return vec![hi];
    }
    (0..k)
        .map(|i| hi + (lo - hi) * i as f64 / (k - 1) as f64)
        .collect()
}

/// Draws a coefficient vector of length `p` from `seed`.
pub fn make_signal(spec: &SignalSpec, p: usize, seed: u64) -> Result<Vec<f64>> {
    make_signal_with(spec, p, &mut rng::stream(seed, &[SIGNAL_STREAM]))
}

fn make_signal_with(spec: &SignalSpec, p: usize, rng: &mut SlopeRng) -> Result<Vec<f64>> {
    spec.validate(p)?;
    let k = spec.k;
    let unit = (2.0 * (p as f64).ln()).sqrt();
    let mut beta = vec![0.0; p];
    if let SignalClass::Class(7) = spec.class {
        for (i, b) in beta.iter_mut().enumerate() {
            *b = 1.2 * unit * ((i + 1) as f64 / k as f64).powf(-1.2);
        }
        beta.shuffle(rng);
        return Ok(beta);
    }
    let support = index::sample(rng, p, k).into_vec();
    let mut values = match spec.class {
        SignalClass::Fixed { fixed_amplitude } => vec![fixed_amplitude; k],
        SignalClass::Class(c @ (1 | 2)) => {
            let sd = if c == 1 { 2.0 } else { 3.0 } * unit;
            (0..k).map(|_| sd * rng.sample::<f64, _>(StandardNormal)).collect()
        }
        SignalClass::Class(3) => vec![1.2 * unit; k],
        SignalClass::Class(4) => linear_range(1.2 * unit, 0.6 * unit, k),
        SignalClass::Class(5) => linear_range(1.5 * unit, 0.5 * unit, k),
        SignalClass::Class(6) => linear_range(4.5 * unit, 1.5 * unit, k),
        SignalClass::Class(c) => unreachable!("class {c} rejected by validation"),
    };
    values.shuffle(rng);
    for (&j, v) in support.iter().zip(values) {
        beta[j] = v;
    }
    Ok(beta)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LambdaKind {
    Bh,
    BhcGaussian,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Method {
    Slope { lambda: LambdaKind, q: f64 },
    Lasso { lambda: f64 },
    BhMarginal { q: f64 },
    FdrThreshold { q: f64 },
}

fn default_noise_sd() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub design: DesignSpec,
    pub signal: SignalSpec,
    pub method: Method,
    #[serde(default)]
    pub debias: bool,
    pub replications: usize,
    #[serde(default = "default_noise_sd")]
    pub noise_sd: f64,
    pub master_seed: u64,
    #[serde(default)]
    pub solver: SolverConfig,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        self.design.validate()?;
        self.signal.validate(self.design.p)?;
        if self.replications == 0 {
            return Err(SlopeError::Config("replications must be at least 1".into()));
        }
        if !(self.noise_sd >= 0.0 && self.noise_sd.is_finite()) {
            return Err(SlopeError::Config(format!("noise_sd = {} is invalid", self.noise_sd)));
        }
        match self.method {
            Method::Slope { q, .. } | Method::BhMarginal { q } | Method::FdrThreshold { q }
                if !(q > 0.0 && q < 1.0) =>
            {
                Err(SlopeError::Config(format!("q = {q} must lie in (0, 1)")))
            }
            Method::Lasso { lambda } if !(lambda > 0.0 && lambda.is_finite()) => {
                Err(SlopeError::Config(format!("lasso lambda = {lambda} must be positive")))
            }
            _ => Ok(()),
        }
    }

    /// Hex SHA-256 of the canonical JSON encoding.
    pub fn hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("config serializes");
        Sha256::digest(&json)
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }

    /// Regularization sequence used by SLOPE and lasso methods.
    pub fn lambda(&self) -> Result<Option<LambdaSequence>> {
        let (n, p) = (self.design.n, self.design.p);
        Ok(match self.method {
            Method::Slope { lambda: LambdaKind::Bh, q } => Some(lambda_bh(p, q)?),
            Method::Slope {
                lambda: LambdaKind::BhcGaussian,
                q,
            } => Some(lambda_bhc_gaussian(n, p, q)?.lambda),
            Method::Lasso { lambda } => Some(LambdaSequence::constant(lambda, p)?),
            Method::BhMarginal { .. } | Method::FdrThreshold { .. } => None,
        })
    }
}

/// Lasso through the SLOPE solver with a constant sequence.
pub fn lasso_reference<A: LinearOperator>(
    x: A,
    y: &[f64],
    lambda: f64,
    cfg: &SolverConfig,
) -> Result<SolverResult> {
    let p = x.ncols();
    let prob = ProblemInstance::new(x, y.to_vec(), LambdaSequence::constant(lambda, p)?)?;
    fista_solve(&prob, cfg, &vec![0.0; p])
}

/// BHq on the marginal statistics `X'y`.
pub fn bh_marginal<A: LinearOperator>(x: &A, y: &[f64], q: f64) -> Result<RejectionSet> {
    let mut z = vec![0.0; x.ncols()];
    x.apply_transpose(y, &mut z);
    step_up(&z, q)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicationRecord {
    pub rep: usize,
    pub metrics: ExperimentMetrics,
    /// Solver iterations; zero for closed-form methods.
    pub iters: usize,
    pub converged: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub mean: f64,
    pub se: f64,
}

impl Aggregate {
    fn of(values: impl Iterator<Item = f64> + Clone) -> Self {
        let n = values.clone().count();
        if n == 0 {
            return Self {
                mean: f64::NAN,
                se: f64::NAN,
            };
        }
        let mean = values.clone().sum::<f64>() / n as f64;
        let var = if n > 1 {
            values.map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64
        } else {
            0.0
        };
        Self {
            mean,
            se: (var / n as f64).sqrt(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSummary {
    pub fdr: Aggregate,
    pub tpp: Aggregate,
    pub mse: Aggregate,
    pub discoveries: Aggregate,
    /// Replications included in the aggregates.
    pub used: usize,
    pub failures: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub config: ExperimentConfig,
    pub config_hash: String,
    pub master_seed: u64,
    pub version: String,
    pub summary: ExperimentSummary,
    pub replications: Vec<ReplicationRecord>,
}

impl ExperimentReport {
    /// CSV rows `rep,V,R,FDP,TPP,MSE` for the converged replications.
    pub fn write_replications_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["rep", "V", "R", "FDP", "TPP", "MSE"])?;
        for r in self.replications.iter().filter(|r| r.converged) {
            let m = &r.metrics;
            w.write_record([
                r.rep.to_string(),
                m.v.to_string(),
                m.r.to_string(),
                fmt_f64(m.fdp),
                fmt_f64(m.tpp),
                fmt_f64(m.mse),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    /// JSON summary: config echo, hash, seed, version and aggregates.
    pub fn write_summary_json<W: Write>(&self, out: W) -> Result<()> {
        #[derive(Serialize)]
        struct Summary<'a> {
            config: &'a ExperimentConfig,
            config_hash: &'a str,
            master_seed: u64,
            version: &'a str,
            summary: &'a ExperimentSummary,
        }
        let s = Summary {
            config: &self.config,
            config_hash: &self.config_hash,
            master_seed: self.master_seed,
            version: &self.version,
            summary: &self.summary,
        };
        let mut out = out;
        serde_json::to_writer_pretty(&mut out, &s)?;
        writeln!(out)?;
        Ok(())
    }
}

struct Prepared {
    lambda: Option<LambdaSequence>,
    fixed_design: Option<Design>,
}

fn run_replication(cfg: &ExperimentConfig, prep: &Prepared, rep: usize) -> Result<ReplicationRecord> {
    let master = cfg.master_seed;
    let tag = rep as u64;
    let drawn;
    let design = match &prep.fixed_design {
        Some(d) => d,
        None => {
            drawn = make_design_with(&cfg.design, &mut rng::stream(master, &[DESIGN_STREAM, tag]))?;
            &drawn
        }
    };
    let p = cfg.design.p;
    let beta = make_signal_with(&cfg.signal, p, &mut rng::stream(master, &[SIGNAL_STREAM, tag]))?;
    let mut y = vec![0.0; cfg.design.n];
    design.apply(&beta, &mut y);
    let mut noise = rng::stream(master, &[NOISE_STREAM, tag]);
    for v in &mut y {
        *v += cfg.noise_sd * noise.sample::<f64, _>(StandardNormal);
    }

    let orthogonal = matches!(cfg.design.kind, DesignKind::Orthogonal);
    let mut iters = 0;
    let mut converged = true;
    let mut estimate = match cfg.method {
        Method::Slope { .. } | Method::Lasso { .. } => {
            let lambda = prep.lambda.as_ref().expect("sequence prepared");
            if orthogonal {
                let mut z = vec![0.0; p];
                design.apply_transpose(&y, &mut z);
                prox_sorted_l1(&z, lambda)?
            } else {
                let prob = ProblemInstance::new(design, y.clone(), lambda.clone())?;
                let res = fista_solve(&prob, &cfg.solver, &vec![0.0; p])?;
                iters = res.iters;
                converged = res.converged();
                let support = support_of_solution(&res.b, lambda);
                estimate_from_rejections(&res.b, &support)
            }
        }
        Method::BhMarginal { q } => {
            let mut z = vec![0.0; p];
            design.apply_transpose(&y, &mut z);
            estimate_from_rejections(&z, &step_up(&z, q)?)
        }
        Method::FdrThreshold { q } => {
            let mut z = vec![0.0; p];
            design.apply_transpose(&y, &mut z);
            fdr_threshold_estimate(&z, q)?.0
        }
    };
    if cfg.debias {
        let support: Vec<usize> = (0..p).filter(|&j| estimate[j] != 0.0).collect();
        let xs = design.columns(&support);
        let refit = debias(&xs, &y, &(0..support.len()).collect::<Vec<_>>())?;
        estimate = vec![0.0; p];
        for (&j, v) in support.iter().zip(refit) {
            estimate[j] = v;
        }
    }
    Ok(ReplicationRecord {
        rep,
        metrics: metrics(&estimate, &beta)?,
        iters,
        converged,
    })
}

/// Runs all replications in parallel and folds them in replication order.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    cfg.validate()?;
    let prep = Prepared {
        lambda: cfg.lambda()?,
        fixed_design: if cfg.design.redraws() {
            None
        } else {
            Some(make_design_with(&cfg.design, &mut rng::stream(cfg.master_seed, &[DESIGN_STREAM]))?)
        },
    };
    let records = (0..cfg.replications)
        .into_par_iter()
        .map(|rep| run_replication(cfg, &prep, rep))
        .collect::<Result<Vec<_>>>()?;

    let failures = records.iter().filter(|r| !r.converged).count();
    if failures as f64 > MAX_FAILURE_RATE * cfg.replications as f64 {
        return Err(SlopeError::NonConvergence(format!(
            "{failures} of {} replications did not converge",
            cfg.replications
        )));
    }
    let ok = records.iter().filter(|r| r.converged);
    let summary = ExperimentSummary {
        fdr: Aggregate::of(ok.clone().map(|r| r.metrics.fdp)),
        tpp: Aggregate::of(ok.clone().map(|r| r.metrics.tpp)),
        mse: Aggregate::of(ok.clone().map(|r| r.metrics.mse)),
        discoveries: Aggregate::of(ok.clone().map(|r| r.metrics.r as f64)),
        used: ok.count(),
        failures,
    };
    Ok(ExperimentReport {
        config_hash: cfg.hash(),
        master_seed: cfg.master_seed,
        version: env!("CARGO_PKG_VERSION").to_string(),
        config: cfg.clone(),
        summary,
        replications: records,
    })
}
