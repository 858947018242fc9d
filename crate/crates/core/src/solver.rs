//! Proximal-gradient and accelerated (FISTA) solvers for
//!
//! ```text
//! minimize  1/2 ||y - X b||^2 + J_lambda(b)
//! ```
//!
//! Both stop once the primal-dual gap at the current estimate and the
//! infeasibility of the residual-based dual point are small, or when the
//! iteration budget runs out.

use serde::{Deserialize, Serialize};

use crate::error::{check_len, Result, SlopeError};
use crate::linalg::{spectral_norm_sq, LinearOperator};
use crate::sorted_l1::{dual_infeasibility, prox_stack_into, sorted_l1_norm, LambdaSequence, SortedProxInput};

/// A SLOPE problem: design, response and regularization sequence.
pub struct ProblemInstance<A> {
    design: A,
    y: Vec<f64>,
    lambda: LambdaSequence,
}

impl<A: LinearOperator> ProblemInstance<A> {
    pub fn new(design: A, y: Vec<f64>, lambda: LambdaSequence) -> Result<Self> {
        check_len("problem: response length vs design rows", design.nrows(), y.len())?;
        check_len("problem: lambda length vs design columns", design.ncols(), lambda.len())?;
        Ok(Self { design, y, lambda })
    }

    pub fn design(&self) -> &A {
        &self.design
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    pub fn lambda(&self) -> &LambdaSequence {
        &self.lambda
    }

    pub fn n(&self) -> usize {
        self.y.len()
    }

    pub fn p(&self) -> usize {
        self.lambda.len()
    }

    fn check_estimate(&self, b: &[f64]) -> Result<()> {
        check_len("estimate length vs design columns", self.p(), b.len())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepRule {
    /// Fixed step `1 / ||X||^2`.
    Auto,
    Fixed(f64),
    /// Start at `initial` (or `1 / ||X||^2` when `None`) and multiply by
    /// `shrink` until the quadratic upper bound on the smooth part holds.
    Backtracking { initial: Option<f64>, shrink: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverConfig {
    pub step_rule: StepRule,
    /// Absolute gap tolerance; `None` means `1e-6 * max(1, ||y||^2 / 2)`.
    pub gap_tol: Option<f64>,
    /// Absolute infeasibility tolerance; `None` means `1e-6 * lambda_1`.
    pub infeas_tol: Option<f64>,
    pub max_iters: usize,
    pub record_history: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            step_rule: StepRule::Auto,
            gap_tol: None,
            infeas_tol: None,
            max_iters: 20_000,
            record_history: false,
        }
    }
}

impl SolverConfig {
    pub fn with_tolerances(gap_tol: f64, infeas_tol: f64) -> Self {
        Self {
            gap_tol: Some(gap_tol),
            infeas_tol: Some(infeas_tol),
            ..Self::default()
        }
    }

    /// Concrete `(gap_tol, infeas_tol)` for a problem.
    pub fn tolerances<A: LinearOperator>(&self, prob: &ProblemInstance<A>) -> (f64, f64) {
        let half_y2 = 0.5 * prob.y.iter().map(|v| v * v).sum::<f64>();
        (
            self.gap_tol.unwrap_or(1e-6 * half_y2.max(1.0)),
            self.infeas_tol.unwrap_or(1e-6 * prob.lambda.first()),
        )
    }
}

/// Momentum state of the accelerated solver.
#[derive(Debug, Clone, PartialEq)]
pub struct SolverState {
    pub b: Vec<f64>,
    pub a: Vec<f64>,
    pub theta: f64,
    pub iter: usize,
}

/// `theta_{k+1}` from `1 / theta_{k+1} = (1 + sqrt(1 + 4 / theta_k^2)) / 2`.
pub fn next_theta(theta: f64) -> f64 {
    2.0 / (1.0 + (1.0 + 4.0 / (theta * theta)).sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    Converged,
    MaxIters,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iter: usize,
    pub objective: f64,
    pub gap: f64,
    pub infeasibility: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverResult {
    pub b: Vec<f64>,
    pub objective: f64,
    pub gap: f64,
    pub infeasibility: f64,
    pub iters: usize,
    pub termination: Termination,
    pub step: f64,
    pub history: Option<Vec<IterationRecord>>,
}

impl SolverResult {
    pub fn converged(&self) -> bool {
        self.termination == Termination::Converged
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `1/2 ||y - X b||^2 + J_lambda(b)`.
pub fn objective<A: LinearOperator>(prob: &ProblemInstance<A>, b: &[f64]) -> Result<f64> {
    prob.check_estimate(b)?;
    let mut xb = vec![0.0; prob.n()];
    prob.design.apply(b, &mut xb);
    let rss: f64 = xb.iter().zip(&prob.y).map(|(f, y)| (y - f) * (y - f)).sum();
    Ok(0.5 * rss + sorted_l1_norm(b, &prob.lambda)?)
}

/// Primal-dual gap `(Xb)'(Xb - y) + J(b)` and the infeasibility of the dual
/// point `w = y - Xb`, measured on `X'w`.
pub fn duality_gap<A: LinearOperator>(prob: &ProblemInstance<A>, b: &[f64]) -> Result<(f64, f64)> {
    prob.check_estimate(b)?;
    let mut xb = vec![0.0; prob.n()];
    prob.design.apply(b, &mut xb);
    let resid: Vec<f64> = xb.iter().zip(&prob.y).map(|(f, y)| f - y).collect();
    let mut grad = vec![0.0; prob.p()];
    prob.design.apply_transpose(&resid, &mut grad);
    let gap = dot(&xb, &resid) + sorted_l1_norm(b, &prob.lambda)?;
    Ok((gap, dual_infeasibility(&grad, &prob.lambda)?))
}

/// Point `b` together with `X b` and the gradient `X'(X b - y)`.
#[derive(Clone)]
struct Tracked {
    b: Vec<f64>,
    xb: Vec<f64>,
    grad: Vec<f64>,
}

impl Tracked {
    fn at<A: LinearOperator>(prob: &ProblemInstance<A>, b: Vec<f64>) -> Self {
        let mut xb = vec![0.0; prob.n()];
        prob.design.apply(&b, &mut xb);
        let mut t = Self {
            b,
            xb,
            grad: vec![0.0; prob.p()],
        };
        t.refresh_grad(prob);
        t
    }

    fn refresh_grad<A: LinearOperator>(&mut self, prob: &ProblemInstance<A>) {
        let resid: Vec<f64> = self.xb.iter().zip(&prob.y).map(|(f, y)| f - y).collect();
        prob.design.apply_transpose(&resid, &mut self.grad);
    }

    fn smooth(&self, y: &[f64]) -> f64 {
        0.5 * self.xb.iter().zip(y).map(|(f, v)| (f - v) * (f - v)).sum::<f64>()
    }

    /// `(objective, gap, infeasibility)` at `b`.
    fn certificate(&self, prob: &ProblemInstance<impl LinearOperator>) -> (f64, f64, f64) {
        let penalty = sorted_l1_norm(&self.b, &prob.lambda).expect("lengths checked");
        let resid_dot: f64 = self
            .xb
            .iter()
            .zip(&prob.y)
            .map(|(f, y)| f * (f - y))
            .sum();
        let infeas = dual_infeasibility(&self.grad, &prob.lambda).expect("lengths checked");
        (self.smooth(&prob.y) + penalty, resid_dot + penalty, infeas)
    }
}

struct ProxStep {
    scaled: Vec<f64>,
    out: Vec<f64>,
}

impl ProxStep {
    fn new(p: usize) -> Self {
        Self {
            scaled: vec![0.0; p],
            out: vec![0.0; p],
        }
    }

    /// `prox_{t lambda}(point - t grad)`.
    fn run(&mut self, lambda: &LambdaSequence, point: &[f64], grad: &[f64], t: f64) -> Vec<f64> {
        let v: Vec<f64> = point.iter().zip(grad).map(|(b, g)| b - t * g).collect();
        for (s, l) in self.scaled.iter_mut().zip(lambda.as_slice()) {
            *s = t * l;
        }
        let sorted = SortedProxInput::from_vector(&v);
        prox_stack_into(&sorted.magnitudes, &self.scaled, &mut self.out);
        sorted.restore(&self.out)
    }
}

fn initial_step<A: LinearOperator>(prob: &ProblemInstance<A>, rule: StepRule) -> Result<f64> {
    let auto = || {
        let l = spectral_norm_sq(&prob.design);
        if l > 0.0 {
            1.0 / l
        } else {
            1.0
        }
    };
    let t = match rule {
        StepRule::Auto => auto(),
        StepRule::Fixed(t) => t,
        StepRule::Backtracking { initial, shrink } => {
            if !(shrink > 0.0 && shrink < 1.0) {
                return Err(SlopeError::Config(format!(
                    "backtracking shrink factor must lie in (0, 1), got {shrink}"
                )));
            }
            initial.unwrap_or_else(auto)
        }
    };
    if !(t > 0.0 && t.is_finite()) {
        return Err(SlopeError::Config(format!("invalid step size {t}")));
    }
    Ok(t)
}

fn solve<A: LinearOperator>(
    prob: &ProblemInstance<A>,
    cfg: &SolverConfig,
    b0: &[f64],
    accelerate: bool,
) -> Result<SolverResult> {
    prob.check_estimate(b0)?;
    let (gap_tol, infeas_tol) = cfg.tolerances(prob);
    let mut t = initial_step(prob, cfg.step_rule)?;
    let shrink = match cfg.step_rule {
        StepRule::Backtracking { shrink, .. } => Some(shrink),
        _ => None,
    };

    let mut prox = ProxStep::new(prob.p());
    let mut current = Tracked::at(prob, b0.to_vec());
    // Momentum point; equals `current` for plain proximal gradient.
    let mut point = current.clone();
    let mut theta = 1.0;
    let mut history = cfg.record_history.then(Vec::new);

    let mut iter = 0;
    loop {
        let (obj, gap, infeas) = current.certificate(prob);
        if let Some(h) = history.as_mut() {
            h.push(IterationRecord {
                iter,
                objective: obj,
                gap,
                infeasibility: infeas,
            });
        }
        let done = gap <= gap_tol && infeas <= infeas_tol;
        if done || iter >= cfg.max_iters {
            return Ok(SolverResult {
                b: current.b,
                objective: obj,
                gap,
                infeasibility: infeas,
                iters: iter,
                termination: if done {
                    Termination::Converged
                } else {
                    Termination::MaxIters
                },
                step: t,
                history,
            });
        }

        let base = if accelerate { &point } else { &current };
        let next = loop {
            let b_new = prox.run(&prob.lambda, &base.b, &base.grad, t);
            let mut xb = vec![0.0; prob.n()];
            prob.design.apply(&b_new, &mut xb);
            let candidate = Tracked {
                b: b_new,
                xb,
                grad: vec![0.0; prob.p()],
            };
            let Some(shrink) = shrink else {
                break candidate;
            };
            let diff: Vec<f64> = candidate.b.iter().zip(&base.b).map(|(a, b)| a - b).collect();
            let bound = base.smooth(&prob.y)
                + dot(&base.grad, &diff)
                + dot(&diff, &diff) / (2.0 * t);
            if candidate.smooth(&prob.y) <= bound * (1.0 + 1e-12) + 1e-300 {
                break candidate;
            }
            t *= shrink;
            if t < 1e-300 {
                return Err(SlopeError::NonConvergence("backtracking step underflow".into()));
            }
        };
        let mut next = next;
        next.refresh_grad(prob);

        if accelerate {
            let theta_next = next_theta(theta);
            let coef = theta_next * (1.0 / theta - 1.0);
            let extrapolate = |new: &[f64], old: &[f64]| -> Vec<f64> {
                new.iter().zip(old).map(|(n, o)| n + coef * (n - o)).collect()
            };
            // X and X' are linear, so the momentum point's products follow
            // from the two most recent iterates without new applications.
            point = Tracked {
                b: extrapolate(&next.b, &current.b),
                xb: extrapolate(&next.xb, &current.xb),
                grad: extrapolate(&next.grad, &current.grad),
            };
            theta = theta_next;
        }
        current = next;
        if !accelerate {
            point = current.clone();
        }
        iter += 1;
    }
}

/// Plain proximal gradient, `b <- prox_{t lambda}(b - t X'(Xb - y))`.
pub fn prox_gradient_solve<A: LinearOperator>(
    prob: &ProblemInstance<A>,
    cfg: &SolverConfig,
    b0: &[f64],
) -> Result<SolverResult> {
    solve(prob, cfg, b0, false)
}

/// Accelerated proximal gradient with the FISTA momentum sequence, started
/// from `a = b = b0`, `theta = 1`.
pub fn fista_solve<A: LinearOperator>(
    prob: &ProblemInstance<A>,
    cfg: &SolverConfig,
    b0: &[f64],
) -> Result<SolverResult> {
    solve(prob, cfg, b0, true)
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;

    fn lam(v: &[f64]) -> LambdaSequence {
        LambdaSequence::new(v.to_vec()).unwrap()
    }

    #[test]
    fn theta_sequence_starts_at_golden_ratio() {
        let t1 = next_theta(1.0);
        assert!((t1 - 2.0 / (1.0 + 5.0_f64.sqrt())).abs() < 1e-15);
        assert!((t1 - 0.618_033_988_749_895).abs() < 1e-12);
        let mut t = 1.0;
        for _ in 0..50 {
            let n = next_theta(t);
            assert!(n < t && n > 0.0);
            t = n;
        }
    }

    #[test]
    fn objective_at_zero_is_half_rss() {
        let x = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 4.0]);
        let prob = ProblemInstance::new(&x, vec![1.0, -2.0], lam(&[1.0, 0.5])).unwrap();
        assert!((objective(&prob, &[0.0, 0.0]).unwrap() - 2.5).abs() < 1e-15);
    }

    #[test]
    fn identity_design_objective() {
        let x = DMatrix::<f64>::identity(3, 3);
        let y = vec![2.0, -1.0, 0.5];
        let l = lam(&[1e-3, 1e-3, 1e-3]);
        let j = sorted_l1_norm(&y, &l).unwrap();
        let prob = ProblemInstance::new(&x, y.clone(), l).unwrap();
        assert!((objective(&prob, &y).unwrap() - j).abs() < 1e-15);
    }

    #[test]
    fn zero_data_gap_is_zero() {
        let x = DMatrix::<f64>::identity(3, 3);
        let prob = ProblemInstance::new(&x, vec![0.0; 3], lam(&[1.0, 1.0, 1.0])).unwrap();
        assert_eq!(duality_gap(&prob, &[0.0; 3]).unwrap(), (0.0, 0.0));
        let res = fista_solve(&prob, &SolverConfig::default(), &[0.0; 3]).unwrap();
        assert_eq!(res.iters, 0);
        assert!(res.converged());
        assert_eq!(res.b, vec![0.0; 3]);
    }

    #[test]
    fn dimension_errors() {
        let x = DMatrix::<f64>::identity(3, 3);
        assert!(ProblemInstance::new(&x, vec![0.0; 2], lam(&[1.0, 1.0, 1.0])).is_err());
        assert!(ProblemInstance::new(&x, vec![0.0; 3], lam(&[1.0, 1.0])).is_err());
        let prob = ProblemInstance::new(&x, vec![0.0; 3], lam(&[1.0, 1.0, 1.0])).unwrap();
        assert!(objective(&prob, &[0.0; 2]).is_err());
        assert!(fista_solve(&prob, &SolverConfig::default(), &[0.0; 4]).is_err());
    }

    #[test]
    fn identity_design_one_step() {
        let x = DMatrix::<f64>::identity(4, 4);
        let y = vec![3.0, -0.2, 1.5, -2.5];
        let l = lam(&[1.0, 0.8, 0.5, 0.1]);
        let expected = crate::sorted_l1::prox_sorted_l1(&y, &l).unwrap();
        let prob = ProblemInstance::new(&x, y, l).unwrap();
        let cfg = SolverConfig {
            step_rule: StepRule::Fixed(1.0),
            ..SolverConfig::with_tolerances(1e-12, 1e-12)
        };
        let res = prox_gradient_solve(&prob, &cfg, &[0.0; 4]).unwrap();
        assert_eq!(res.iters, 1);
        for (a, b) in res.b.iter().zip(&expected) {
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn bad_step_rules_are_rejected() {
        let x = DMatrix::<f64>::identity(2, 2);
        let prob = ProblemInstance::new(&x, vec![1.0, 1.0], lam(&[0.1, 0.1])).unwrap();
        let cfg = SolverConfig {
            step_rule: StepRule::Fixed(-1.0),
            ..SolverConfig::default()
        };
        assert!(matches!(fista_solve(&prob, &cfg, &[0.0; 2]), Err(SlopeError::Config(_))));
        let cfg = SolverConfig {
            step_rule: StepRule::Backtracking { initial: None, shrink: 1.5 },
            ..SolverConfig::default()
        };
        assert!(fista_solve(&prob, &cfg, &[0.0; 2]).is_err());
    }

    #[test]
    fn max_iters_is_reported_not_raised() {
        let x = DMatrix::from_row_slice(2, 2, &[1.0, 0.99, 0.99, 1.0]);
        let prob = ProblemInstance::new(&x, vec![3.0, -1.0], lam(&[0.01, 0.005])).unwrap();
        let cfg = SolverConfig {
            max_iters: 2,
            ..SolverConfig::with_tolerances(1e-14, 1e-14)
        };
        let res = prox_gradient_solve(&prob, &cfg, &[0.0; 2]).unwrap();
        assert_eq!(res.termination, Termination::MaxIters);
        assert_eq!(res.iters, 2);
    }
}
