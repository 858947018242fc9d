//! Command-line front end. The `slope` binary only forwards to [`run`].
//!
//! Exit codes: 0 success, 2 bad arguments, 3 unreadable or malformed input,
//! 4 numerical failure (nonconvergence, singular systems), 5 internal
//! invariant violation.

use std::ffi::OsString;
use std::fs::File;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::amp::{predict_grid, write_predictions_csv};
use crate::error::{Result, SlopeError};
use crate::harness::{run_experiment, ExperimentConfig};
use crate::io;
use crate::lambda_seq::{
    estimate_weights, lambda_bh, lambda_bhc_gaussian, weight_sampling_grid, SamplingConfig,
};
use crate::rng;
use crate::solver::{fista_solve, prox_gradient_solve, ProblemInstance, SolverConfig};
use crate::sorted_l1::{prox_sorted_l1, LambdaSequence};

/// Output stream handed to [`run`].
pub type Out = dyn Write + Send;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_INPUT: i32 = 3;
pub const EXIT_NUMERIC: i32 = 4;
pub const EXIT_INTERNAL: i32 = 5;

#[derive(Debug, Parser)]
#[command(name = "slope", version, about = "Sorted L-one penalized estimation")]
struct Cli {
    /// Worker threads for `simulate` and `weights` (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Evaluate the sorted-l1 prox of a vector.
    Prox(ProxArgs),
    /// Fit SLOPE (or the lasso) to a design and response.
    Solve(SolveArgs),
    /// Emit a regularization sequence as CSV `i,lambda`.
    Lambda(LambdaArgs),
    /// Monte Carlo weights `w_k` for a design.
    Weights(WeightsArgs),
    /// Run a simulation from a JSON experiment config.
    Simulate(SimulateArgs),
    /// High-SNR lasso FDR predictions over an (epsilon, delta) grid.
    Predict(PredictArgs),
}

#[derive(Debug, Args, Serialize)]
struct ProxArgs {
    /// Input vector (CSV).
    #[arg(long)]
    y: PathBuf,
    /// Nonincreasing sequence (CSV `i,lambda` or one value per line).
    #[arg(long)]
    lambda: PathBuf,
    /// Output CSV; standard output when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
enum LambdaKindArg {
    Bh,
    BhcGaussian,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
enum Algorithm {
    Fista,
    ProxGradient,
}

#[derive(Debug, Args, Serialize)]
struct SolveArgs {
    /// Design matrix (CSV or SLP1 binary).
    #[arg(long)]
    x: PathBuf,
    /// Response (CSV).
    #[arg(long)]
    y: PathBuf,
    /// Explicit sequence file; overrides `--q`/`--kind` and `--lasso`.
    #[arg(long)]
    lambda: Option<PathBuf>,
    /// Target FDR level for a generated sequence.
    #[arg(long)]
    q: Option<f64>,
    #[arg(long, value_enum, default_value = "bh")]
    kind: LambdaKindArg,
    /// Constant sequence (the lasso) with this value.
    #[arg(long)]
    lasso: Option<f64>,
    /// Declared number of rows; the design file must match.
    #[arg(long)]
    rows: Option<usize>,
    /// Declared number of columns; the design file must match.
    #[arg(long)]
    cols: Option<usize>,
    #[arg(long, value_enum, default_value = "fista")]
    algorithm: Algorithm,
    /// Absolute duality-gap tolerance (default `1e-6 max(1, ||y||^2/2)`).
    #[arg(long)]
    gap_tol: Option<f64>,
    /// Absolute infeasibility tolerance (default `1e-6 lambda_1`).
    #[arg(long)]
    infeas_tol: Option<f64>,
    #[arg(long, default_value_t = 20_000)]
    max_iters: usize,
    /// Estimate output CSV; standard output when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    /// JSON report with objective, gap, infeasibility and iterations.
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
struct LambdaArgs {
    #[arg(long)]
    p: usize,
    /// Number of observations (needed for `bhc-gaussian`).
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    q: f64,
    #[arg(long, value_enum, default_value = "bh")]
    kind: LambdaKindArg,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
struct WeightsArgs {
    /// Design matrix file; a Gaussian `N(0, 1/n)` design is drawn when
    /// omitted.
    #[arg(long)]
    x: Option<PathBuf>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    p: Option<usize>,
    /// Comma-separated k values (default: the standard sampling grid).
    #[arg(long, value_delimiter = ',')]
    ks: Option<Vec<usize>>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 64)]
    initial_samples: usize,
    #[arg(long, default_value_t = 0.02)]
    rel_tol: f64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
struct SimulateArgs {
    /// JSON experiment config.
    #[arg(long)]
    config: PathBuf,
    /// Per-replication CSV `rep,V,R,FDP,TPP,MSE`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// JSON summary; standard output when omitted.
    #[arg(long)]
    summary: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
struct PredictArgs {
    /// Sparsity values: a comma list or `start:end:count`.
    #[arg(long, default_value = "0.01:0.99:99")]
    epsilons: String,
    /// Sampling ratios n/p: a comma list or `start:end:count`.
    #[arg(long, default_value = "0.5,1,2")]
    deltas: String,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn exit_code(e: &SlopeError) -> i32 {
    match e {
        SlopeError::Parse(_) | SlopeError::Io(_) | SlopeError::Json(_) | SlopeError::Csv(_) => {
            EXIT_INPUT
        }
        SlopeError::NonConvergence(_) | SlopeError::Singular(_) => EXIT_NUMERIC,
        SlopeError::Contract(_) => EXIT_INTERNAL,
        SlopeError::Dimension { .. }
        | SlopeError::InvalidLambda(_)
        | SlopeError::Domain(_)
        | SlopeError::Config(_) => EXIT_USAGE,
    }
}

/// Parses `args` (program name first) and runs the subcommand. Results go to
/// `stdout` or files, diagnostics to `stderr`. Returns the exit code.
pub fn run<I, T>(args: I, stdout: &mut Out, stderr: &mut Out) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = write!(stderr, "{}", e.render());
            return code;
        }
    };
    let pool = match rayon::ThreadPoolBuilder::new()
        .num_threads(cli.threads.unwrap_or(0))
        .build()
    {
        Ok(p) => p,
        Err(e) => {
            let _ = writeln!(stderr, "error: thread pool: {e}");
            return EXIT_INTERNAL;
        }
    };
    match pool.install(|| dispatch(&cli.command, stdout, stderr)) {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            exit_code(&e)
        }
    }
}

fn echo_config(stderr: &mut Out, name: &str, cfg: &impl Serialize) -> Result<()> {
    writeln!(stderr, "{name}: {}", serde_json::to_string(cfg)?)?;
    Ok(())
}

/// Writes through `f` to `path`, or to `stdout` when no path is given.
fn emit(
    path: Option<&Path>,
    stdout: &mut Out,
    f: impl FnOnce(&mut dyn Write) -> Result<()>,
) -> Result<()> {
    match path {
        Some(p) => {
            let mut file = File::create(p)?;
            f(&mut file)?;
            file.flush()?;
        }
        None => f(stdout)?,
    }
    Ok(())
}

fn dispatch(cmd: &Command, stdout: &mut Out, stderr: &mut Out) -> Result<i32> {
    match cmd {
        Command::Prox(a) => prox(a, stdout, stderr),
        Command::Solve(a) => solve(a, stdout, stderr),
        Command::Lambda(a) => lambda(a, stdout, stderr),
        Command::Weights(a) => weights(a, stdout, stderr),
        Command::Simulate(a) => simulate(a, stdout, stderr),
        Command::Predict(a) => predict(a, stdout, stderr),
    }
}

fn prox(a: &ProxArgs, stdout: &mut Out, stderr: &mut Out) -> Result<i32> {
    echo_config(stderr, "prox", a)?;
    let y = io::read_vector_csv(&a.y)?;
    let lambda = io::read_sequence(&a.lambda)?;
    let x = prox_sorted_l1(&y, &lambda)?;
    emit(a.out.as_deref(), stdout, |w| io::write_vector_csv(w, "x", &x))?;
    Ok(EXIT_OK)
}

fn sequence_for(kind: LambdaKindArg, n: Option<usize>, p: usize, q: f64) -> Result<(LambdaSequence, Option<usize>)> {
    match kind {
        LambdaKindArg::Bh => Ok((lambda_bh(p, q)?, None)),
        LambdaKindArg::BhcGaussian => {
            let n = n.ok_or_else(|| SlopeError::Config("bhc-gaussian needs --n".into()))?;
            let c = lambda_bhc_gaussian(n, p, q)?;
            let k = c.critical_point();
            Ok((c.lambda, Some(k)))
        }
    }
}

fn solve(a: &SolveArgs, stdout: &mut Out, stderr: &mut Out) -> Result<i32> {
    let cfg = SolverConfig {
        gap_tol: a.gap_tol,
        infeas_tol: a.infeas_tol,
        max_iters: a.max_iters,
        ..SolverConfig::default()
    };
    echo_config(stderr, "solve", &(a, &cfg))?;
    let x = io::read_matrix(&a.x)?;
    for (what, declared, got) in [("rows", a.rows, x.nrows()), ("columns", a.cols, x.ncols())] {
        if let Some(d) = declared {
            if d != got {
                return Err(SlopeError::Parse(format!(
                    "{}: declared {d} {what}, file holds {got}",
                    a.x.display()
                )));
            }
        }
    }
    let y = io::read_vector_csv(&a.y)?;
    if y.len() != x.nrows() {
        return Err(SlopeError::Parse(format!(
            "{}: {} values for a design with {} rows",
            a.y.display(),
            y.len(),
            x.nrows()
        )));
    }
    let p = x.ncols();
    let lambda = match (&a.lambda, a.lasso, a.q) {
        (Some(path), _, _) => io::read_sequence(path)?,
        (None, Some(l), _) => LambdaSequence::constant(l, p)?,
        (None, None, Some(q)) => sequence_for(a.kind, Some(x.nrows()), p, q)?.0,
        (None, None, None) => {
            return Err(SlopeError::Config("give --lambda, --lasso or --q".into()))
        }
    };
    let prob = ProblemInstance::new(&x, y, lambda)?;
    let b0 = vec![0.0; p];
    let res = match a.algorithm {
        Algorithm::Fista => fista_solve(&prob, &cfg, &b0)?,
        Algorithm::ProxGradient => prox_gradient_solve(&prob, &cfg, &b0)?,
    };
    emit(a.out.as_deref(), stdout, |w| io::write_vector_csv(w, "b", &res.b))?;
    #[derive(Serialize)]
    struct Report {
        objective: f64,
        gap: f64,
        infeasibility: f64,
        iters: usize,
        converged: bool,
        step: f64,
    }
    let report = Report {
        objective: res.objective,
        gap: res.gap,
        infeasibility: res.infeasibility,
        iters: res.iters,
        converged: res.converged(),
        step: res.step,
    };
    let text = serde_json::to_string_pretty(&report)?;
    match &a.report {
        Some(path) => std::fs::write(path, text + "\n")?,
        None => writeln!(stderr, "{text}")?,
    }
    if !res.converged() {
        writeln!(
            stderr,
            "error: no convergence after {} iterations (gap {:e}, infeasibility {:e})",
            res.iters, res.gap, res.infeasibility
        )?;
        return Ok(EXIT_NUMERIC);
    }
    Ok(EXIT_OK)
}

fn lambda(a: &LambdaArgs, stdout: &mut Out, stderr: &mut Out) -> Result<i32> {
    echo_config(stderr, "lambda", a)?;
    let (seq, k_star) = sequence_for(a.kind, a.n, a.p, a.q)?;
    if let Some(k) = k_star {
        writeln!(stderr, "k_star: {k}")?;
    }
    emit(a.out.as_deref(), stdout, |w| io::write_sequence(w, &seq))?;
    Ok(EXIT_OK)
}

fn weights(a: &WeightsArgs, stdout: &mut Out, stderr: &mut Out) -> Result<i32> {
    let x = match (&a.x, a.n, a.p) {
        (Some(path), _, _) => io::read_matrix(path)?,
        (None, Some(n), Some(p)) => {
            use rand::Rng;
            use rand_distr::StandardNormal;
            let mut r = rng::stream(a.seed, &[crate::harness::DESIGN_STREAM]);
            let scale = 1.0 / (n as f64).sqrt();
            nalgebra::DMatrix::from_fn(n, p, |_, _| scale * r.sample::<f64, _>(StandardNormal))
        }
        _ => return Err(SlopeError::Config("give --x or both --n and --p".into())),
    };
    let ks = a
        .ks
        .clone()
        .unwrap_or_else(|| weight_sampling_grid(x.nrows(), x.ncols()));
    let cfg = SamplingConfig {
        initial_samples: a.initial_samples,
        rel_tol: a.rel_tol,
        seed: a.seed,
        ..SamplingConfig::default()
    };
    echo_config(stderr, "weights", &(a, &cfg, &ks))?;
    let table = estimate_weights(&x, &ks, &cfg)?;
    emit(a.out.as_deref(), stdout, |w| io::write_weight_table(w, &table))?;
    Ok(EXIT_OK)
}

fn simulate(a: &SimulateArgs, stdout: &mut Out, stderr: &mut Out) -> Result<i32> {
    let text = std::fs::read_to_string(&a.config)?;
    let cfg: ExperimentConfig = serde_json::from_str(&text)
        .map_err(|e| SlopeError::Parse(format!("{}: {e}", a.config.display())))?;
    echo_config(stderr, "simulate", &cfg)?;
    let report = run_experiment(&cfg)?;
    if let Some(path) = &a.out {
        report.write_replications_csv(File::create(path)?)?;
    }
    emit(a.summary.as_deref(), stdout, |w| report.write_summary_json(w))?;
    Ok(EXIT_OK)
}

/// `start:end:count` (inclusive, evenly spaced) or a comma list.
fn parse_grid(spec: &str) -> Result<Vec<f64>> {
    let bad = |e: &dyn std::fmt::Display| SlopeError::Config(format!("bad grid '{spec}': {e}"));
    let parts: Vec<&str> = spec.split(':').collect();
    match parts.as_slice() {
        [start, end, count] => {
            let start: f64 = start.trim().parse().map_err(|e| bad(&e))?;
            let end: f64 = end.trim().parse().map_err(|e| bad(&e))?;
            let count: usize = count.trim().parse().map_err(|e| bad(&e))?;
            match count {
                0 => Err(bad(&"count must be positive")),
                1 => Ok(vec![start]),
                _ => Ok((0..count)
                    .map(|i| start + (end - start) * i as f64 / (count - 1) as f64)
                    .collect()),
            }
        }
        [list] => list
            .split(',')
            .map(|s| s.trim().parse::<f64>().map_err(|e| bad(&e)))
            .collect(),
        _ => Err(bad(&"expected a comma list or start:end:count")),
    }
}

fn predict(a: &PredictArgs, stdout: &mut Out, stderr: &mut Out) -> Result<i32> {
    let eps = parse_grid(&a.epsilons)?;
    let deltas = parse_grid(&a.deltas)?;
    echo_config(stderr, "predict", &(a, &eps, &deltas))?;
    let preds = predict_grid(&eps, &deltas)?;
    emit(a.out.as_deref(), stdout, |w| write_predictions_csv(w, &preds))?;
    Ok(EXIT_OK)
}
