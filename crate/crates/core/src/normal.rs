//! Standard normal density, distribution function and quantile.

use statrs::function::erf::erfc;

use crate::error::{Result, SlopeError};

const SQRT_2: f64 = std::f64::consts::SQRT_2;
const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

/// Standard normal density.
pub fn pdf(x: f64) -> f64 {
    INV_SQRT_2PI * (-0.5 * x * x).exp()
}

/// Standard normal distribution function, accurate in both tails.
pub fn cdf(x: f64) -> f64 {
    0.5 * erfc(-x / SQRT_2)
}

/// Upper tail `P(Z > x)`.
pub fn sf(x: f64) -> f64 {
    0.5 * erfc(x / SQRT_2)
}

// Rational approximation of the inverse normal distribution function
// (P. J. Acklam), relative error below 1.2e-9 before refinement.
const A: [f64; 6] = [
    -3.969_683_028_665_376e1,
    2.209_460_984_245_205e2,
    -2.759_285_104_469_687e2,
    1.383_577_518_672_69e2,
    -3.066_479_806_614_716e1,
    2.506_628_277_459_239,
];
const B: [f64; 5] = [
    -5.447_609_879_822_406e1,
    1.615_858_368_580_409e2,
    -1.556_989_798_598_866e2,
    6.680_131_188_771_972e1,
    -1.328_068_155_288_572e1,
];
const C: [f64; 6] = [
    -7.784_894_002_430_293e-3,
    -3.223_964_580_411_365e-1,
    -2.400_758_277_161_838,
    -2.549_732_539_343_734,
    4.374_664_141_464_968,
    2.938_163_982_698_783,
];
const D: [f64; 4] = [
    7.784_695_709_041_462e-3,
    3.224_671_290_700_398e-1,
    2.445_134_137_142_996,
    3.754_408_661_907_416,
];
const P_LOW: f64 = 0.024_25;

fn initial_guess(u: f64) -> f64 {
    if u < P_LOW {
        let q = (-2.0 * u.ln()).sqrt();
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    } else if u <= 1.0 - P_LOW {
        let q = u - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    } else {
        let q = (-2.0 * (1.0 - u).ln()).sqrt();
        -(((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    }
}

/// Lower-tail quantile for `u <= 0.5`, refined with Halley steps against
/// the erfc-based distribution function. Working in the lower tail keeps
/// full relative precision for tiny `u`.
fn lower_quantile(u: f64) -> f64 {
    let mut x = initial_guess(u);
    for _ in 0..2 {
        let e = cdf(x) - u;
        let d = e / pdf(x);
        x -= d / (1.0 + 0.5 * x * d);
    }
    x
}

/// `Phi^{-1}(u)` for `u` in `(0, 1)`.
pub fn quantile(u: f64) -> Result<f64> {
    if !(u > 0.0 && u < 1.0) {
        return Err(SlopeError::Domain(format!(
            "normal quantile needs 0 < u < 1, got {u}"
        )));
    }
    if u == 0.5 {
        return Ok(0.0);
    }
    Ok(if u < 0.5 {
        lower_quantile(u)
    } else {
        -lower_quantile(1.0 - u)
    })
}

/// `Phi^{-1}(1 - tail)`, computed from `tail` directly so small tail
/// probabilities do not lose precision to `1 - tail` rounding.
pub fn upper_quantile(tail: f64) -> Result<f64> {
    if !(tail > 0.0 && tail < 1.0) {
        return Err(SlopeError::Domain(format!(
            "upper quantile needs 0 < tail < 1, got {tail}"
        )));
    }
    if tail == 0.5 {
        return Ok(0.0);
    }
    Ok(if tail < 0.5 {
        -lower_quantile(tail)
    } else {
        lower_quantile(1.0 - tail)
    })
}
