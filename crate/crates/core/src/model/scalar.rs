use std::fmt::Debug;
use std::ops::{Add, AddAssign, Mul, Sub};

use num_complex::Complex64;
use rand::Rng;

use crate::features::{FeatureBank, FeatureKind};

/// Lower clamp for `log|h|`; keeps losses finite on the zero set of `h`.
pub const LOG_MAGNITUDE_FLOOR: f64 = -30.0;

/// Coefficient field of a classifier: `f64` for cosine banks, `Complex64`
/// for exponential banks.
///
/// Gradients use the real-pair convention: for a complex parameter `w`
/// the gradient is `dL/dRe(w) + i dL/dIm(w)`.
pub trait Scalar:
    Copy
    + Default
    + Debug
    + PartialEq
    + Send
    + Sync
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + AddAssign
{
    const KIND: FeatureKind;

    fn from_re(v: f64) -> Self;
    fn conj(self) -> Self;
    fn norm_sqr(self) -> f64;
    fn scale(self, s: f64) -> Self;
    fn is_finite(self) -> bool;
    fn parts(self) -> (f64, f64);
    fn from_parts(re: f64, im: f64) -> Self;
    fn to_complex(self) -> Complex64 {
        let (re, im) = self.parts();
        Complex64::new(re, im)
    }

    /// Uniform in `[-s, s]` (independently per real component).
    fn sample_uniform<R: Rng>(rng: &mut R, s: f64) -> Self;

    fn features(bank: &FeatureBank, theta: &[f64], out: &mut [Self]);

    /// `out[p] += Re sum_k u[k] dF_k/dtheta_p`.
    fn input_grad(bank: &FeatureBank, theta: &[f64], feats: &[Self], u: &[Self], out: &mut [f64]);

    /// Class score handed to the softmax.
    fn logit(h: Self) -> f64;

    /// Real-pair cotangent of `h` given `dL/dlogit`.
    fn cotangent(h: Self, dlogit: f64) -> Self;
}

impl Scalar for f64 {
    const KIND: FeatureKind = FeatureKind::Cosine;

    fn from_re(v: f64) -> Self {
        v
    }
    fn conj(self) -> Self {
        self
    }
    fn norm_sqr(self) -> f64 {
        self * self
    }
    fn scale(self, s: f64) -> Self {
        self * s
    }
    fn is_finite(self) -> bool {
        f64::is_finite(self)
    }
    fn parts(self) -> (f64, f64) {
        (self, 0.0)
    }
    fn from_parts(re: f64, _im: f64) -> Self {
        re
    }
    fn sample_uniform<R: Rng>(rng: &mut R, s: f64) -> Self {
        rng.gen_range(-s..=s)
    }
    fn features(bank: &FeatureBank, theta: &[f64], out: &mut [Self]) {
        bank.eval_real(theta, out)
    }
    fn input_grad(bank: &FeatureBank, theta: &[f64], _feats: &[Self], u: &[Self], out: &mut [f64]) {
        bank.input_grad_real(theta, u, out)
    }
    fn logit(h: Self) -> f64 {
        h
    }
    fn cotangent(_h: Self, dlogit: f64) -> Self {
        dlogit
    }
}

impl Scalar for Complex64 {
    const KIND: FeatureKind = FeatureKind::Holomorphic;

    fn from_re(v: f64) -> Self {
        Complex64::new(v, 0.0)
    }
    fn conj(self) -> Self {
        Complex64::conj(&self)
    }
    fn norm_sqr(self) -> f64 {
        Complex64::norm_sqr(&self)
    }
    fn scale(self, s: f64) -> Self {
        self * s
    }
    fn is_finite(self) -> bool {
        Complex64::is_finite(self)
    }
    fn parts(self) -> (f64, f64) {
        (self.re, self.im)
    }
    fn from_parts(re: f64, im: f64) -> Self {
        Complex64::new(re, im)
    }
    fn sample_uniform<R: Rng>(rng: &mut R, s: f64) -> Self {
        Complex64::new(rng.gen_range(-s..=s), rng.gen_range(-s..=s))
    }
    fn features(bank: &FeatureBank, theta: &[f64], out: &mut [Self]) {
        bank.eval_complex(theta, out)
    }
    fn input_grad(bank: &FeatureBank, _theta: &[f64], feats: &[Self], u: &[Self], out: &mut [f64]) {
        bank.input_grad_complex(feats, u, out)
    }
    fn logit(h: Self) -> f64 {
        // log|h| is the real part of the complex logarithm
        let l = 0.5 * h.norm_sqr().ln();
        if l > LOG_MAGNITUDE_FLOOR {
            l
        } else {
            LOG_MAGNITUDE_FLOOR
        }
    }
    fn cotangent(h: Self, dlogit: f64) -> Self {
        let n2 = h.norm_sqr();
        if 0.5 * n2.ln() > LOG_MAGNITUDE_FLOOR {
            h * (dlogit / n2)
        } else {
            Complex64::default()
        }
    }
}

/// `sum_k a[k] * b[k]` with four interleaved partial sums.
#[inline]
pub(crate) fn dot<S: Scalar>(a: &[S], b: &[S]) -> S {
    let mut acc = [S::default(); 4];
    let ca = a.chunks_exact(4);
    let cb = b.chunks_exact(4);
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        acc[0] += x[0] * y[0];
        acc[1] += x[1] * y[1];
        acc[2] += x[2] * y[2];
        acc[3] += x[3] * y[3];
    }
    let mut tail = S::default();
    for (&x, &y) in ra.iter().zip(rb) {
        tail += x * y;
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

/// `out[k] += g * x[k]`.
#[inline]
pub(crate) fn axpy<S: Scalar>(g: S, x: &[S], out: &mut [S]) {
    for (o, &v) in out.iter_mut().zip(x) {
        *o += g * v;
    }
}

/// `out[k] += g * conj(x[k])`.
#[inline]
pub(crate) fn axpy_conj<S: Scalar>(g: S, x: &[S], out: &mut [S]) {
    for (o, &v) in out.iter_mut().zip(x) {
        *o += g * v.conj();
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn complex_logit_is_log_magnitude_with_floor() {
        assert_eq!(Complex64::logit(Complex64::new(0.0, 1.0)), 0.0);
        assert!((Complex64::logit(Complex64::new(3.0, 4.0)) - 5f64.ln()).abs() < 1e-15);
        assert_eq!(Complex64::logit(Complex64::default()), LOG_MAGNITUDE_FLOOR);
        assert_eq!(Complex64::cotangent(Complex64::default(), 1.0), Complex64::default());
    }

    #[test]
    fn dot_matches_naive_sum() {
        let a: Vec<f64> = (0..11).map(|i| i as f64 * 0.5).collect();
        let b: Vec<f64> = (0..11).map(|i| 1.0 - i as f64).collect();
        let naive: f64 = a.iter().zip(&b).map(|(x, y)| x * y).sum();
        assert!((dot(&a, &b) - naive).abs() < 1e-12);
    }
}
