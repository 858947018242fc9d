//! Linear operators and the small amount of dense linear algebra the solvers
//! and the harness need.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector, DVectorView, DVectorViewMut};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{Result, SlopeError};

/// A linear map `R^ncols -> R^nrows` that can be applied with its transpose.
///
/// Solvers only touch the design through this trait, so structured designs
/// such as [`RestrictedDct`] never need to be materialized.
pub trait LinearOperator: Send + Sync {
    fn nrows(&self) -> usize;
    fn ncols(&self) -> usize;
    /// `out = A x`
    fn apply(&self, x: &[f64], out: &mut [f64]);
    /// `out = A^T y`
    fn apply_transpose(&self, y: &[f64], out: &mut [f64]);
}

impl LinearOperator for DMatrix<f64> {
    fn nrows(&self) -> usize {
        self.nrows()
    }

    fn ncols(&self) -> usize {
        self.ncols()
    }

    fn apply(&self, x: &[f64], out: &mut [f64]) {
        let x = DVectorView::from_slice(x, x.len());
        let mut o = DVectorViewMut::from_slice(out, self.nrows());
        o.gemv(1.0, self, &x, 0.0);
    }

    fn apply_transpose(&self, y: &[f64], out: &mut [f64]) {
        let y = DVectorView::from_slice(y, y.len());
        let mut o = DVectorViewMut::from_slice(out, self.ncols());
        o.gemv_tr(1.0, self, &y, 0.0);
    }
}

impl<T: LinearOperator + ?Sized> LinearOperator for &T {
    fn nrows(&self) -> usize {
        (**self).nrows()
    }
    fn ncols(&self) -> usize {
        (**self).ncols()
    }
    fn apply(&self, x: &[f64], out: &mut [f64]) {
        (**self).apply(x, out)
    }
    fn apply_transpose(&self, y: &[f64], out: &mut [f64]) {
        (**self).apply_transpose(y, out)
    }
}

impl<T: LinearOperator + ?Sized> LinearOperator for Arc<T> {
    fn nrows(&self) -> usize {
        (**self).nrows()
    }
    fn ncols(&self) -> usize {
        (**self).ncols()
    }
    fn apply(&self, x: &[f64], out: &mut [f64]) {
        (**self).apply(x, out)
    }
    fn apply_transpose(&self, y: &[f64], out: &mut [f64]) {
        (**self).apply_transpose(y, out)
    }
}

/// Dense copy of any operator, built column by column.
pub fn materialize(op: &dyn LinearOperator) -> DMatrix<f64> {
    let (n, p) = (op.nrows(), op.ncols());
    let mut m = DMatrix::zeros(n, p);
    let mut e = vec![0.0; p];
    let mut col = vec![0.0; n];
    for j in 0..p {
        e[j] = 1.0;
        op.apply(&e, &mut col);
        m.column_mut(j).copy_from_slice(&col);
        e[j] = 0.0;
    }
    m
}

const POWER_SEED: u64 = 0x05ee_d0f5_9ec7;

/// `||A||_2^2` by power iteration on `A^T A` from a fixed random start.
///
/// Iterates until successive Rayleigh quotients agree to 1e-10 relative,
/// which puts the estimate within about 1e-6 of the top eigenvalue unless
/// the spectral gap is tiny; a final dense fallback is not attempted.
pub fn spectral_norm_sq(op: &dyn LinearOperator) -> f64 {
    let (n, p) = (op.nrows(), op.ncols());
    if n == 0 || p == 0 {
        return 0.0;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(POWER_SEED);
    let mut v: Vec<f64> = (0..p).map(|_| StandardNormal.sample(&mut rng)).collect();
    normalize(&mut v);
    let mut av = vec![0.0; n];
    let mut w = vec![0.0; p];
    let mut estimate = 0.0;
    for _ in 0..10_000 {
        op.apply(&v, &mut av);
        op.apply_transpose(&av, &mut w);
        let next: f64 = v.iter().zip(&w).map(|(a, b)| a * b).sum();
        let norm = normalize(&mut w);
        if norm == 0.0 {
            return 0.0;
        }
        std::mem::swap(&mut v, &mut w);
        if (next - estimate).abs() <= 1e-10 * next.abs() {
            return next.max(estimate);
        }
        estimate = next;
    }
    estimate
}

fn normalize(v: &mut [f64]) -> f64 {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > 0.0 {
        v.iter_mut().for_each(|x| *x /= norm);
    }
    norm
}

/// Least-squares coefficients of `y` on the columns of `a` via Householder
/// QR. Fails when `a` has fewer rows than columns or when the triangular
/// factor is numerically singular (condition estimate above `max_cond`).
pub fn least_squares_qr(a: &DMatrix<f64>, y: &DVector<f64>, max_cond: f64) -> Result<DVector<f64>> {
    let (n, k) = a.shape();
    if k == 0 {
        return Ok(DVector::zeros(0));
    }
    if n < k {
        return Err(SlopeError::Singular(format!(
            "{k} columns but only {n} rows"
        )));
    }
    let qr = a.clone().qr();
    let r = qr.r();
    let diag = r.diagonal().map(f64::abs);
    let (dmax, dmin) = (diag.max(), diag.min());
    if dmin == 0.0 || dmax / dmin > max_cond {
        return Err(SlopeError::Singular(format!(
            "triangular factor condition estimate {:.3e}",
            if dmin == 0.0 { f64::INFINITY } else { dmax / dmin }
        )));
    }
    let qty = qr.q().tr_mul(y);
    r.solve_upper_triangular(&qty)
        .ok_or_else(|| SlopeError::Singular("triangular solve failed".into()))
}

/// Rows of the orthonormal DCT-II matrix of size `p`, scaled by `scale`.
///
/// Applied with FFTs in `O(p log p)`; the transpose is the matching DCT-III.
pub struct RestrictedDct {
    p: usize,
    rows: Vec<usize>,
    scale: f64,
    forward: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for RestrictedDct {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("RestrictedDct")
            .field("p", &self.p)
            .field("rows", &self.rows.len())
            .field("scale", &self.scale)
            .finish()
    }
}

impl RestrictedDct {
    pub fn new(p: usize, rows: Vec<usize>, scale: f64) -> Result<Self> {
        if p == 0 || rows.is_empty() || rows.iter().any(|&r| r >= p) {
            return Err(SlopeError::Config("invalid restricted DCT rows".into()));
        }
        let forward = FftPlanner::new().plan_fft_forward(2 * p);
        Ok(Self {
            p,
            rows,
            scale,
            forward,
        })
    }

    pub fn rows(&self) -> &[usize] {
        &self.rows
    }

    /// Full orthonormal DCT-II of `x`.
    fn dct2(&self, x: &[f64]) -> Vec<f64> {
        let p = self.p;
        let mut buf: Vec<Complex64> = Vec::with_capacity(2 * p);
        buf.extend(x.iter().map(|&v| Complex64::new(v, 0.0)));
        buf.extend(x.iter().rev().map(|&v| Complex64::new(v, 0.0)));
        self.forward.process(&mut buf);
        let pf = p as f64;
        (0..p)
            .map(|k| {
                let angle = -std::f64::consts::PI * k as f64 / (2.0 * pf);
                let tw = Complex64::new(angle.cos(), angle.sin());
                let c = 0.5 * (tw * buf[k]).re;
                let norm = if k == 0 { (1.0 / pf).sqrt() } else { (2.0 / pf).sqrt() };
                c * norm
            })
            .collect()
    }

    /// Inverse of [`Self::dct2`] (orthonormal DCT-III):
    /// `x_n = Re sum_k s_k c_k e^{i pi k / 2p} e^{2 pi i n k / 2p}`, evaluated
    /// with the forward plan by conjugating the input.
    fn dct3(&self, c: &[f64]) -> Vec<f64> {
        let p = self.p;
        let pf = p as f64;
        let mut buf = vec![Complex64::new(0.0, 0.0); 2 * p];
        for k in 0..p {
            let norm = if k == 0 { (1.0 / pf).sqrt() } else { (2.0 / pf).sqrt() };
            let angle = std::f64::consts::PI * k as f64 / (2.0 * pf);
            buf[k] = Complex64::new(angle.cos(), -angle.sin()) * (c[k] * norm);
        }
        self.forward.process(&mut buf);
        buf[..p].iter().map(|v| v.re).collect()
    }
}

impl LinearOperator for RestrictedDct {
    fn nrows(&self) -> usize {
        self.rows.len()
    }

    fn ncols(&self) -> usize {
        self.p
    }

    fn apply(&self, x: &[f64], out: &mut [f64]) {
        let full = self.dct2(x);
        for (o, &r) in out.iter_mut().zip(&self.rows) {
            *o = self.scale * full[r];
        }
    }

    fn apply_transpose(&self, y: &[f64], out: &mut [f64]) {
        let mut coeffs = vec![0.0; self.p];
        for (&v, &r) in y.iter().zip(&self.rows) {
            coeffs[r] = self.scale * v;
        }
        let x = self.dct3(&coeffs);
        out.copy_from_slice(&x);
    }
}

/// Dense orthonormal DCT-II matrix, `C[k, n] = s_k cos(pi (n + 1/2) k / p)`.
pub fn dct2_matrix(p: usize) -> DMatrix<f64> {
    let pf = p as f64;
    DMatrix::from_fn(p, p, |k, n| {
        let s = if k == 0 { (1.0 / pf).sqrt() } else { (2.0 / pf).sqrt() };
        s * (std::f64::consts::PI * (n as f64 + 0.5) * k as f64 / pf).cos()
    })
}
