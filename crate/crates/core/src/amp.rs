//! Asymptotic lasso predictions for i.i.d. Gaussian designs.
//!
//! Everything here is a fixed point of the state-evolution equations
//!
//! ```text
//! tau^2  = 1 + E(eta_{alpha tau}(Theta + tau Z) - Theta)^2 / delta
//! lambda = (1 - P(|Theta + tau Z| > alpha tau) / delta) alpha tau
//! ```
//!
//! or of their high-SNR limits. Every returned value carries the relative
//! residuals of the equations it solves.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SlopeError};
use crate::io::fmt_f64;
use crate::normal::{cdf, pdf, sf};

/// Residual certificate every fixed point must meet.
pub const RESIDUAL_TOL: f64 = 1e-8;

/// Distribution of a coefficient: zero with probability `1 - epsilon`,
/// otherwise `M` or `N(0, sd^2)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PriorSpec {
    PointMass { epsilon: f64, m: f64 },
    GaussianMixture { epsilon: f64, sd: f64 },
}

impl PriorSpec {
    pub fn point_mass(epsilon: f64, m: f64) -> Result<Self> {
        Self::PointMass { epsilon, m }.validated()
    }

    pub fn gaussian_mixture(epsilon: f64, sd: f64) -> Result<Self> {
        Self::GaussianMixture { epsilon, sd }.validated()
    }

    fn validated(self) -> Result<Self> {
        let (eps, scale) = match self {
            Self::PointMass { epsilon, m } => (epsilon, m),
            Self::GaussianMixture { epsilon, sd } => (epsilon, sd),
        };
        if !(0.0..=1.0).contains(&eps) {
            return Err(SlopeError::Domain(format!("epsilon = {eps} outside [0, 1]")));
        }
        if !(scale > 0.0 && scale.is_finite()) {
            return Err(SlopeError::Domain(format!("prior scale = {scale} must be positive")));
        }
        if eps == 0.0 {
            return Err(SlopeError::Domain("prior has zero variance (epsilon = 0)".into()));
        }
        Ok(self)
    }

    pub fn epsilon(&self) -> f64 {
        match *self {
            Self::PointMass { epsilon, .. } | Self::GaussianMixture { epsilon, .. } => epsilon,
        }
    }

    /// `E miss(alpha, Theta / tau)` over the nonzero component.
    fn nonzero_miss(&self, alpha: f64, tau: f64) -> Result<f64> {
        match *self {
            Self::PointMass { m, .. } => Ok(soft_threshold_moments(alpha, m / tau).1),
            Self::GaussianMixture { sd, .. } => {
                let r = sd / tau;
                // Symmetric in u, so integrate over the half line.
                let v = integrate(|u| 2.0 * pdf(u) * soft_threshold_moments(alpha, u * r).1, 0.0, 10.0, QUAD_TOL)?;
                Ok(v)
            }
        }
    }

    /// `P(|Theta + tau Z| > alpha tau | Theta != 0)`.
    fn nonzero_detection(&self, alpha: f64, tau: f64) -> f64 {
        match *self {
            Self::PointMass { m, .. } => two_sided_tail(alpha, m / tau),
            Self::GaussianMixture { sd, .. } => {
                2.0 * sf(alpha * tau / (tau * tau + sd * sd).sqrt())
            }
        }
    }
}

const QUAD_TOL: f64 = 1e-10;

/// `P(|gamma + Z| > alpha)`.
fn two_sided_tail(alpha: f64, gamma: f64) -> f64 {
    sf(alpha - gamma) + cdf(-alpha - gamma)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    /// Finite signal strength: the full state-evolution system.
    Finite,
    FullPower,
    LimitedPower,
}

impl Regime {
    pub fn as_str(&self) -> &'static str {
        match self {
            Self::Finite => "finite",
            Self::FullPower => "full_power",
            Self::LimitedPower => "limited_power",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AmpFixedPoint {
    pub alpha: f64,
    pub tau: f64,
    pub delta: f64,
    pub lambda: f64,
    pub fdp: f64,
    pub power: f64,
    pub regime: Regime,
    /// Relative residual of the `tau` equation.
    pub residual_tau: f64,
    /// Relative residual of the `lambda` equation.
    pub residual_lambda: f64,
}

impl AmpFixedPoint {
    pub fn max_residual(&self) -> f64 {
        self.residual_tau.max(self.residual_lambda)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HighSnrPrediction {
    pub epsilon: f64,
    pub delta: f64,
    pub regime: Regime,
    pub alpha_star: f64,
    pub gamma_star: Option<f64>,
    pub q_star: f64,
    pub power: f64,
    /// Largest absolute residual of the equations solved.
    pub residual: f64,
}

/// Bisection on a sign change between `lo` and `hi`, run until the bracket
/// stops shrinking in floating point.
fn bisect(mut f: impl FnMut(f64) -> Result<f64>, mut lo: f64, mut hi: f64) -> Result<f64> {
    let f_lo = f(lo)?;
    let lo_negative = f_lo < 0.0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo.min(hi) || mid >= lo.max(hi) {
            break;
        }
        let v = f(mid)?;
        if v == 0.0 {
            return Ok(mid);
        }
        if (v < 0.0) == lo_negative {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// `E eta_alpha(Z)^2 = 2[(1 + a^2) Phi(-a) - a phi(a)]`.
fn null_moment(alpha: f64) -> f64 {
    2.0 * ((1.0 + alpha * alpha) * cdf(-alpha) - alpha * pdf(alpha))
}

/// Threshold below which the state-evolution equations have no solution:
/// the root of `2(1 + a^2) Phi(-a) - 2 a phi(a) = delta` for `delta <= 1`,
/// zero otherwise.
pub fn alpha_min(delta: f64) -> Result<f64> {
    if delta.is_nan() || delta <= 0.0 {
        return Err(SlopeError::Domain(format!("delta = {delta} must be positive")));
    }
    if delta >= 1.0 {
        return Ok(0.0);
    }
    let mut hi = 1.0;
    while null_moment(hi) > delta {
        hi *= 2.0;
    }
    bisect(|a| Ok(null_moment(a) - delta), 0.0, hi)
}

/// Second moments of soft thresholding at `alpha` applied to `gamma + Z`:
/// `(E eta_alpha(gamma + Z)^2, E(eta_alpha(gamma + Z) - gamma)^2)`.
pub fn soft_threshold_moments(alpha: f64, gamma: f64) -> (f64, f64) {
    let g = gamma.abs();
    let a = alpha;
    let (lo, hi) = (a - g, a + g);
    let tail = |t: f64| (1.0 + t * t) * sf(t) - t * pdf(t);
    let m2 = tail(lo) + tail(hi);
    let miss = (1.0 + a * a) * (sf(lo) + sf(hi)) - (a + g) * pdf(lo) + (g - a) * pdf(hi)
        + g * g * (cdf(lo) - cdf(-hi));
    (m2, miss)
}

/// Adaptive Gauss-Kronrod (7/15) integration to absolute tolerance `tol`.
/// The error budget is spread over subintervals in proportion to width.
pub fn integrate(f: impl Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> Result<f64> {
    let width = b - a;
    let mut total = 0.0;
    let mut err = 0.0;
    let mut stack = vec![(a, b, 0u32)];
    while let Some((lo, hi, depth)) = stack.pop() {
        let (k, g) = gk15(&f, lo, hi);
        let e = (k - g).abs();
        let local = tol * (hi - lo) / width;
        if e <= local || e <= 1e-15 * k.abs() || depth >= 50 {
            total += k;
            err += e;
        } else {
            let mid = 0.5 * (lo + hi);
            stack.push((lo, mid, depth + 1));
            stack.push((mid, hi, depth + 1));
        }
    }
    if err > tol.max(1e-14 * total.abs()) {
        return Err(SlopeError::NonConvergence(format!(
            "quadrature on [{a}, {b}] reached error {err:e} > {tol:e}"
        )));
    }
    Ok(total)
}

#[allow(clippy::excessive_precision)]
const XGK: [f64; 8] = [
    0.991455371120812639206854697526329,
    0.949107912342758524526189684047851,
    0.864864423359769072789712788640926,
    0.741531185599394439863864773280788,
    0.586087235467691130294144845693013,
    0.405845151377397166906606412076961,
    0.207784955007898467600689403773245,
    0.000000000000000000000000000000000,
];
#[allow(clippy::excessive_precision)]
const WGK: [f64; 8] = [
    0.022935322010529224963732008058970,
    0.063092092629978553290700663189204,
    0.104790010322250183839876322541518,
    0.140653259715525918745189590510238,
    0.169004726639267902826583426598550,
    0.190350578064785409913256402421014,
    0.204432940075298892414161999234649,
    0.209482141084727828012999174891714,
];
#[allow(clippy::excessive_precision)]
const WG: [f64; 4] = [
    0.129484966168869693270611432679082,
    0.279705391489276667901467771423780,
    0.381830050505118944950369775488975,
    0.417959183673469387755102040816327,
];

fn gk15(f: &impl Fn(f64) -> f64, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut kronrod = WGK[7] * fc;
    let mut gauss = WG[3] * fc;
    for j in 0..7 {
        let x = h * XGK[j];
        let s = f(c - x) + f(c + x);
        kronrod += WGK[j] * s;
        if j % 2 == 1 {
            gauss += WG[j / 2] * s;
        }
    }
    (kronrod * h, gauss * h)
}

/// `tau^2` solving the first equation at fixed `alpha`, as a function of
/// `s = tau^2`: `h(s) = 1 + (s / delta) E miss(alpha, Theta / sqrt(s)) - s`.
/// `None` when `h` stays positive up to a huge scale (alpha at or below the
/// admissible range).
fn tau_sq_at(prior: &PriorSpec, delta: f64, alpha: f64) -> Result<Option<f64>> {
    let eps = prior.epsilon();
    let null = null_moment(alpha);
    let h = |s: f64| -> Result<f64> {
        let tau = s.sqrt();
        let e = (1.0 - eps) * null + eps * prior.nonzero_miss(alpha, tau)?;
        Ok((1.0 + s * e / delta - s) / s)
    };
    let mut hi = 2.0;
    while h(hi)? >= 0.0 {
        hi *= 4.0;
        if hi > 1e30 {
            return Ok(None);
        }
    }
    // h is scaled by 1/s, which preserves the sign; bisection in log s.
    let ls = bisect(|l| h(l.exp()), 0.0, hi.ln())?;
    Ok(Some(ls.exp()))
}

fn lambda_at(prior: &PriorSpec, delta: f64, alpha: f64, tau: f64) -> f64 {
    let eps = prior.epsilon();
    let p_sel = (1.0 - eps) * 2.0 * cdf(-alpha) + eps * prior.nonzero_detection(alpha, tau);
    (1.0 - p_sel / delta) * alpha * tau
}

/// Solves the state-evolution system for `(alpha, tau)` at penalty `lambda`
/// and attaches the predicted FDP and power.
pub fn state_evolution(prior: &PriorSpec, delta: f64, lambda: f64) -> Result<AmpFixedPoint> {
    let prior = prior.validated()?;
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(SlopeError::Domain(format!("lambda = {lambda} must be positive")));
    }
    let a_min = alpha_min(delta)?;
    // lambda(alpha) increases from -inf (delta < 1) or 0 (delta >= 1) at
    // alpha_min to +inf. Missing tau counts as "below".
    let gap = |alpha: f64| -> Result<f64> {
        Ok(match tau_sq_at(&prior, delta, alpha)? {
            Some(s) => lambda_at(&prior, delta, alpha, s.sqrt()) - lambda,
            None => -1.0,
        })
    };
    let mut hi = a_min + 1.0;
    while gap(hi)? <= 0.0 {
        hi *= 2.0;
        if hi > 1e6 {
            return Err(SlopeError::NonConvergence(format!(
                "no alpha bracket for lambda = {lambda}, delta = {delta} below {hi}"
            )));
        }
    }
    let alpha = bisect(gap, a_min, hi)?;
    let s = tau_sq_at(&prior, delta, alpha)?.ok_or_else(|| {
        SlopeError::NonConvergence(format!("tau diverges at alpha = {alpha}, alpha_min = {a_min}"))
    })?;
    let tau = s.sqrt();
    let eps = prior.epsilon();
    let e = (1.0 - eps) * null_moment(alpha) + eps * prior.nonzero_miss(alpha, tau)?;
    let residual_tau = ((1.0 + s * e / delta - s) / s).abs();
    let residual_lambda = ((lambda_at(&prior, delta, alpha, tau) - lambda) / lambda).abs();
    let false_sel = (1.0 - eps) * 2.0 * cdf(-alpha);
    let power = prior.nonzero_detection(alpha, tau);
    let fp = AmpFixedPoint {
        alpha,
        tau,
        delta,
        lambda,
        fdp: false_sel / (false_sel + eps * power),
        power,
        regime: Regime::Finite,
        residual_tau,
        residual_lambda,
    };
    if alpha.is_nan() || alpha <= a_min || fp.max_residual() > RESIDUAL_TOL {
        return Err(SlopeError::NonConvergence(format!(
            "state evolution: alpha = {alpha} (alpha_min = {a_min}), residuals {residual_tau:e}, {residual_lambda:e}"
        )));
    }
    Ok(fp)
}

/// Left side of the full-power equation:
/// `2(1 - eps)((1 + a^2) Phi(-a) - a phi(a)) + eps (1 + a^2)`.
fn full_power_lhs(alpha: f64, eps: f64) -> f64 {
    (1.0 - eps) * null_moment(alpha) + eps * (1.0 + alpha * alpha)
}

/// Minimizer of the (convex) full-power left side in `alpha`.
fn full_power_argmin(eps: f64) -> Result<f64> {
    let slope = |a: f64| 4.0 * (1.0 - eps) * (a * cdf(-a) - pdf(a)) + 2.0 * eps * a;
    let mut hi = 1.0;
    while slope(hi) < 0.0 {
        hi *= 2.0;
    }
    bisect(|a| Ok(slope(a)), 0.0, hi)
}

/// Weak phase-transition threshold `eps*(delta)`: the sparsity at which the
/// minimum over `alpha` of the full-power left side reaches `delta`.
/// Below it the full-power equation has a root; above it, none.
pub fn weak_threshold(delta: f64) -> Result<f64> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(SlopeError::Domain(format!("delta = {delta} must lie in (0, 1)")));
    }
    let min_lhs = |eps: f64| -> Result<f64> { Ok(full_power_lhs(full_power_argmin(eps)?, eps) - delta) };
    bisect(min_lhs, 0.0, 1.0)
}

/// High-SNR limit of the lasso FDR at sparsity `epsilon` and sampling ratio
/// `delta`, with the matching power and regime.
pub fn high_snr_fdr(epsilon: f64, delta: f64) -> Result<HighSnrPrediction> {
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(SlopeError::Domain(format!("epsilon = {epsilon} must lie in (0, 1)")));
    }
    if !(delta > 0.0 && delta.is_finite()) {
        return Err(SlopeError::Domain(format!("delta = {delta} must be positive")));
    }
    let limited = delta < 1.0 && epsilon > weak_threshold(delta)?;
    if !limited {
        full_power(epsilon, delta)
    } else {
        limited_power(epsilon, delta)
    }
}

fn full_power(eps: f64, delta: f64) -> Result<HighSnrPrediction> {
    let lo = full_power_argmin(eps)?;
    if full_power_lhs(lo, eps) > delta {
        return Err(SlopeError::NonConvergence(format!(
            "full-power equation has no root at epsilon = {eps}, delta = {delta}"
        )));
    }
    let mut hi = lo + 1.0;
    while full_power_lhs(hi, eps) < delta {
        hi *= 2.0;
    }
    // The largest root: the left side is increasing there.
    let alpha = bisect(|a| Ok(full_power_lhs(a, eps) - delta), lo, hi)?;
    let t = 2.0 * cdf(-alpha);
    let q = (1.0 - eps) * t / (eps + (1.0 - eps) * t);
    Ok(HighSnrPrediction {
        epsilon: eps,
        delta,
        regime: Regime::FullPower,
        alpha_star: alpha,
        gamma_star: None,
        q_star: q,
        power: 1.0,
        residual: (full_power_lhs(alpha, eps) - delta).abs(),
    })
}

/// Selection-count equation `2(1-eps)Phi(-a) + eps[Phi(-a-g) + Phi(-a+g)] - delta`.
fn selection_gap(alpha: f64, gamma: f64, eps: f64, delta: f64) -> f64 {
    2.0 * (1.0 - eps) * cdf(-alpha) + eps * two_sided_tail(alpha, gamma) - delta
}

fn limited_power(eps: f64, delta: f64) -> Result<HighSnrPrediction> {
    // Inner: alpha(gamma) from the selection count (decreasing in alpha,
    // equal to 1 - delta > 0 at alpha = 0).
    let alpha_of = |gamma: f64| -> Result<f64> {
        let mut hi = 1.0;
        while selection_gap(hi, gamma, eps, delta) > 0.0 {
            hi *= 2.0;
        }
        bisect(|a| Ok(selection_gap(a, gamma, eps, delta)), 0.0, hi)
    };
    let variance_gap = |gamma: f64| -> Result<f64> {
        let a = alpha_of(gamma)?;
        Ok((1.0 - eps) * null_moment(a) + eps * soft_threshold_moments(a, gamma).1 - delta)
    };
    let mut hi = 1.0;
    while variance_gap(hi)? < 0.0 {
        hi *= 2.0;
        if hi > 1e4 {
            return Err(SlopeError::NonConvergence(format!(
                "limited-power system: no gamma bracket at epsilon = {eps}, delta = {delta}"
            )));
        }
    }
    let gamma = bisect(variance_gap, 0.0, hi)?;
    let alpha = alpha_of(gamma)?;
    let residual = selection_gap(alpha, gamma, eps, delta)
        .abs()
        .max(variance_gap(gamma)?.abs());
    Ok(HighSnrPrediction {
        epsilon: eps,
        delta,
        regime: Regime::LimitedPower,
        alpha_star: alpha,
        gamma_star: Some(gamma),
        q_star: 2.0 * (1.0 - eps) * cdf(-alpha) / delta,
        power: two_sided_tail(alpha, gamma),
        residual,
    })
}

/// Predictions over the product grid, ordered by delta then epsilon.
pub fn predict_grid(epsilons: &[f64], deltas: &[f64]) -> Result<Vec<HighSnrPrediction>> {
    let cells: Vec<(f64, f64)> = deltas
        .iter()
        .flat_map(|&d| epsilons.iter().map(move |&e| (e, d)))
        .collect();
    cells.par_iter().map(|&(e, d)| high_snr_fdr(e, d)).collect()
}

/// CSV with header `epsilon,delta,regime,alpha,gamma,q_star,power`; gamma is
/// empty in the full-power regime.
pub fn write_predictions_csv<W: Write>(out: W, preds: &[HighSnrPrediction]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["epsilon", "delta", "regime", "alpha", "gamma", "q_star", "power"])?;
    for p in preds {
        w.write_record([
            fmt_f64(p.epsilon),
            fmt_f64(p.delta),
            p.regime.as_str().to_string(),
            fmt_f64(p.alpha_star),
            p.gamma_star.map(fmt_f64).unwrap_or_default(),
            fmt_f64(p.q_star),
            fmt_f64(p.power),
        ])?;
    }
    w.flush()?;
    Ok(())
}
