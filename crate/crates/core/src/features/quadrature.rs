//! Dense midpoint-rule quadrature of the tuning matrix, for verifying the
//! analytic whitening on tiny domains.

use num_complex::Complex64;

use super::basis::cis;
use super::{FeatureBank, FeatureError, FeatureKind};

/// Largest input dimension accepted by [`tuning_matrix_quadrature`].
pub const MAX_QUADRATURE_DIM: usize = 3;

/// Whether the features are divided by their whitening scale.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Whitening {
    Applied,
    Raw,
}

/// Hermitian `K x K` Gram matrix of feature gradients.
#[derive(Debug, Clone)]
pub struct TuningMatrix {
    size: usize,
    entries: Vec<Complex64>,
}

impl TuningMatrix {
    pub fn size(&self) -> usize {
        self.size
    }

    pub fn get(&self, i: usize, j: usize) -> Complex64 {
        self.entries[i * self.size + j]
    }

    /// Largest `|S_ij - I_ij|` over off-diagonal and diagonal entries.
    pub fn identity_error(&self) -> (f64, f64) {
        let mut off = 0.0f64;
        let mut diag = 0.0f64;
        for i in 0..self.size {
            for j in 0..self.size {
                let v = self.get(i, j);
                if i == j {
                    diag = diag.max((v - 1.0).norm());
                } else {
                    off = off.max(v.norm());
                }
            }
        }
        (off, diag)
    }
}

/// Approximates `S_ij = mean over the domain of conj(grad F_i) . grad F_j`.
///
/// Cosine features are integrated over `[0, pi]^n` and exponentials over a
/// full period `[-pi, pi]^n`, both with the normalized (unit-mass) measure,
/// using a tensor midpoint rule with `points_per_dim` nodes per axis.
/// Gradients come from the closed-form partial derivatives of each basis
/// function.
pub fn tuning_matrix_quadrature(
    bank: &FeatureBank,
    points_per_dim: usize,
    whitening: Whitening,
) -> Result<TuningMatrix, FeatureError> {
    let n = bank.dim();
    if n > MAX_QUADRATURE_DIM {
        return Err(FeatureError::QuadratureTooLarge { dim: n, max: MAX_QUADRATURE_DIM });
    }
    if points_per_dim == 0 {
        return Err(FeatureError::Config("quadrature needs at least one point".into()));
    }
    let k = bank.len();
    let (lo, width) = match bank.kind() {
        FeatureKind::Cosine => (0.0, std::f64::consts::PI),
        FeatureKind::Holomorphic => (-std::f64::consts::PI, 2.0 * std::f64::consts::PI),
    };
    let nodes: Vec<f64> = (0..points_per_dim).map(|i| lo + (i as f64 + 0.5) * width / points_per_dim as f64).collect();
    let divisors: Vec<f64> = (0..k)
        .map(|i| match whitening {
            Whitening::Applied => bank.scales()[i],
            Whitening::Raw => 1.0,
        })
        .collect();

    let total = points_per_dim.pow(n as u32);
    let weight = 1.0 / total as f64;
    let mut acc = vec![Complex64::default(); k * k];
    let mut grads = vec![Complex64::default(); k * n];
    let mut theta = vec![0.0; n];
    for flat in 0..total {
        let mut rem = flat;
        for t in theta.iter_mut() {
            *t = nodes[rem % points_per_dim];
            rem /= points_per_dim;
        }
        for (i, a) in bank.indices().iter().enumerate() {
            let amp = bank.amplitude(i) / divisors[i];
            let g = &mut grads[i * n..(i + 1) * n];
            g.iter_mut().for_each(|v| *v = Complex64::default());
            match bank.kind() {
                FeatureKind::Cosine => {
                    for &(p, f) in a.support() {
                        let mut d = -amp * f as f64 * (f as f64 * theta[p]).sin();
                        for &(q, fq) in a.support() {
                            if q != p {
                                d *= (fq as f64 * theta[q]).cos();
                            }
                        }
                        g[p] = Complex64::new(d, 0.0);
                    }
                }
                FeatureKind::Holomorphic => {
                    let phase: f64 = a.support().iter().map(|&(p, f)| f as f64 * theta[p]).sum();
                    let psi = cis(phase) * amp;
                    for &(p, f) in a.support() {
                        g[p] = Complex64::i() * f as f64 * psi;
                    }
                }
            }
        }
        for i in 0..k {
            for j in i..k {
                let s: Complex64 = (0..n).map(|p| grads[i * n + p].conj() * grads[j * n + p]).sum();
                acc[i * k + j] += s * weight;
            }
        }
    }
    for i in 0..k {
        for j in 0..i {
            acc[i * k + j] = acc[j * k + i].conj();
        }
    }
    Ok(TuningMatrix { size: k, entries: acc })
}
