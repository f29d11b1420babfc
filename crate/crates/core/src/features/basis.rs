//! Pointwise evaluation of single basis functions.
//!
//! These take a sparse frequency support (`MultiIndex::support`); an empty
//! support is the constant function 1. Inputs live in the feature domain
//! `[0, pi]^n`.

use num_complex::Complex64;

use super::FeatureError;

/// Neumann eigenfunction of the Laplacian on `[0, pi]^n`:
/// the product of `cos(a_p x_p)` over the support.
pub fn cosine_feature(support: &[(usize, u32)], x: &[f64]) -> f64 {
    support.iter().map(|&(p, a)| (a as f64 * x[p]).cos()).product()
}

/// The same eigenfunction written as an average of plane-wave cosines over
/// all sign patterns of the support.
///
/// Positions outside the support contribute a factor of one, so only
/// `2^|support|` terms are summed.
pub fn cosine_sum_expansion(support: &[(usize, u32)], x: &[f64]) -> f64 {
    let s = support.len();
    assert!(s < 32, "support too large for sign enumeration");
    let terms = 1u64 << s;
    let mut acc = 0.0;
    for signs in 0..terms {
        let phase: f64 = support
            .iter()
            .enumerate()
            .map(|(bit, &(p, a))| {
                let v = a as f64 * x[p];
                if signs >> bit & 1 == 1 {
                    -v
                } else {
                    v
                }
            })
            .sum();
        acc += phase.cos();
    }
    acc / terms as f64
}

/// Complex exponential feature `exp(i a.z)`.
pub fn holo_feature(support: &[(usize, u32)], z: &[Complex64]) -> Complex64 {
    let phase: Complex64 = support.iter().map(|&(p, a)| z[p] * a as f64).sum();
    cis(phase.re) * (-phase.im).exp()
}

/// `(sin x, cos x)` from separate libm calls. Left alone, the compiler may
/// fuse the pair into `sincos`, whose last bit differs from `sin`/`cos` on
/// some libms, so results would depend on the optimization level.
pub(crate) fn sin_cos(x: f64) -> (f64, f64) {
    (x.sin(), std::hint::black_box(x).cos())
}

/// `exp(i x)` for real `x`.
pub(crate) fn cis(x: f64) -> Complex64 {
    let (s, c) = sin_cos(x);
    Complex64::new(c, s)
}

/// Holomorphic extension of the cosine to `x + iy`:
/// `cos(x)cosh(y) - i sin(x)sinh(y)`.
///
/// The imaginary part carries a minus sign; with a plus sign the function is
/// the conjugate of `cos(z)` and fails the Cauchy-Riemann equations.
pub fn cos_complex(z: Complex64) -> Complex64 {
    let (s, c) = sin_cos(z.re);
    Complex64::new(c * z.im.cosh(), -(s * z.im.sinh()))
}

/// Diagonal whitening divisor `||a||_2` shared by both feature families.
pub fn whiten_scale(support: &[(usize, u32)]) -> Result<f64, FeatureError> {
    if support.is_empty() {
        return Err(FeatureError::ZeroIndex);
    }
    Ok(support.iter().map(|&(_, a)| (a as f64).powi(2)).sum::<f64>().sqrt())
}
