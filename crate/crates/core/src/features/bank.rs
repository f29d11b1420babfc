use std::collections::HashSet;

use num_complex::Complex64;

use super::basis::sin_cos;
use super::{whiten_scale, FeatureError, FeatureKind, MultiIndex, TemplateConfig};

/// An ordered, deduplicated set of multi-indices with whitening scales.
///
/// Feature `k` evaluated at `theta` in `[0, pi]^n` is
///
/// * Cosine: `2^(s/2) * prod_p cos(a_p theta_p) / ||a||_2`,
/// * Holomorphic: `exp(i a.theta) / ||a||_2`,
///
/// where `s` is the support size of `a`. The `2^(s/2)` amplitude makes each
/// cosine eigenfunction unit mean-square on `[0, pi]^n`, so the whitened
/// cosine bank has identity tuning matrix under the normalized measure.
#[derive(Debug, Clone)]
pub struct FeatureBank {
    kind: FeatureKind,
    dim: usize,
    indices: Vec<MultiIndex>,
    scales: Vec<f64>,
    gains: Vec<f64>,
    offsets: Vec<usize>,
    positions: Vec<usize>,
    freqs: Vec<u32>,
    max_freq: u32,
}

/// Per-pixel `cos(f theta_p)` and `sin(f theta_p)` for `f = 1..=max_freq`.
pub struct PhaseTable {
    cos: Vec<f64>,
    sin: Vec<f64>,
    stride: usize,
}

impl PhaseTable {
    #[inline]
    fn at(&self, p: usize, f: u32) -> (f64, f64) {
        let i = p * self.stride + (f as usize - 1);
        (self.cos[i], self.sin[i])
    }
}

impl FeatureBank {
    pub fn new(kind: FeatureKind, dim: usize, indices: Vec<MultiIndex>) -> Result<Self, FeatureError> {
        if indices.is_empty() {
            return Err(FeatureError::EmptyBank);
        }
        let mut seen = HashSet::with_capacity(indices.len());
        for a in &indices {
            if a.dim() != dim {
                return Err(FeatureError::DimensionMismatch { expected: dim, got: a.dim() });
            }
            if !seen.insert(a) {
                return Err(FeatureError::DuplicateIndex(a.to_string()));
            }
        }
        let mut scales = Vec::with_capacity(indices.len());
        let mut gains = Vec::with_capacity(indices.len());
        let mut offsets = Vec::with_capacity(indices.len() + 1);
        let mut positions = Vec::new();
        let mut freqs = Vec::new();
        offsets.push(0);
        for a in &indices {
            let scale = whiten_scale(a.support())?;
            scales.push(scale);
            gains.push(amplitude(kind, a) / scale);
            for &(p, f) in a.support() {
                positions.push(p);
                freqs.push(f);
            }
            offsets.push(positions.len());
        }
        let max_freq = freqs.iter().copied().max().unwrap_or(1);
        Ok(Self { kind, dim, indices, scales, gains, offsets, positions, freqs, max_freq })
    }

    /// Enumerates the template family over a `rows x cols` image.
    pub fn from_templates(shape: (usize, usize), config: &TemplateConfig) -> Result<Self, FeatureError> {
        let indices = config.enumerate(shape.0, shape.1)?;
        Self::new(config.kind, shape.0 * shape.1, indices)
    }

    pub fn kind(&self) -> FeatureKind {
        self.kind
    }

    /// Input dimension `n`.
    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Number of features `K`.
    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn indices(&self) -> &[MultiIndex] {
        &self.indices
    }

    /// Whitening divisors, `||a_k||_2`.
    pub fn scales(&self) -> &[f64] {
        &self.scales
    }

    /// Normalization amplitude of feature `k` before whitening.
    pub fn amplitude(&self, k: usize) -> f64 {
        amplitude(self.kind, &self.indices[k])
    }

    /// Same indices and kind, different family. Used to evaluate a complex
    /// bank's templates as real cosine features.
    pub fn with_kind(&self, kind: FeatureKind) -> Self {
        Self::new(kind, self.dim, self.indices.clone()).expect("indices already validated")
    }

    fn phases(&self, theta: &[f64]) -> PhaseTable {
        assert_eq!(theta.len(), self.dim, "input dimension does not match bank");
        let stride = self.max_freq as usize;
        let mut cos = Vec::with_capacity(self.dim * stride);
        let mut sin = Vec::with_capacity(self.dim * stride);
        for &t in theta {
            for f in 1..=self.max_freq {
                let (s, c) = sin_cos(f as f64 * t);
                cos.push(c);
                sin.push(s);
            }
        }
        PhaseTable { cos, sin, stride }
    }

    /// Whitened cosine features at `theta`.
    pub fn eval_real(&self, theta: &[f64], out: &mut [f64]) {
        debug_assert_eq!(self.kind, FeatureKind::Cosine);
        let table = self.phases(theta);
        for (k, o) in out.iter_mut().enumerate().take(self.len()) {
            let mut v = self.gains[k];
            for e in self.offsets[k]..self.offsets[k + 1] {
                v *= table.at(self.positions[e], self.freqs[e]).0;
            }
            *o = v;
        }
    }

    /// Whitened complex exponential features at `theta`.
    pub fn eval_complex(&self, theta: &[f64], out: &mut [Complex64]) {
        debug_assert_eq!(self.kind, FeatureKind::Holomorphic);
        let table = self.phases(theta);
        for (k, o) in out.iter_mut().enumerate().take(self.len()) {
            let mut v = Complex64::new(self.gains[k], 0.0);
            for e in self.offsets[k]..self.offsets[k + 1] {
                let (c, s) = table.at(self.positions[e], self.freqs[e]);
                v *= Complex64::new(c, s);
            }
            *o = v;
        }
    }

    /// `out[p] += sum_k u[k] dF_k/dtheta_p` for the cosine family.
    pub fn input_grad_real(&self, theta: &[f64], u: &[f64], out: &mut [f64]) {
        let table = self.phases(theta);
        for (k, &uk) in u.iter().enumerate().take(self.len()) {
            if uk == 0.0 {
                continue;
            }
            let (lo, hi) = (self.offsets[k], self.offsets[k + 1]);
            let scale = uk * self.gains[k];
            for e in lo..hi {
                let (_, s) = table.at(self.positions[e], self.freqs[e]);
                let mut d = -(self.freqs[e] as f64) * s * scale;
                for o in lo..hi {
                    if o != e {
                        d *= table.at(self.positions[o], self.freqs[o]).0;
                    }
                }
                out[self.positions[e]] += d;
            }
        }
    }

    /// `out[p] += Re sum_k u[k] dF_k/dtheta_p` for the exponential family,
    /// given the feature values `feats` at the same `theta`.
    pub fn input_grad_complex(&self, feats: &[Complex64], u: &[Complex64], out: &mut [f64]) {
        for k in 0..self.len() {
            // dF/dtheta_p = i f_p F, so Re(u i f F) = -f Im(u F)
            let im = (u[k] * feats[k]).im;
            if im == 0.0 {
                continue;
            }
            for e in self.offsets[k]..self.offsets[k + 1] {
                out[self.positions[e]] -= self.freqs[e] as f64 * im;
            }
        }
    }
}

fn amplitude(kind: FeatureKind, a: &MultiIndex) -> f64 {
    match kind {
        // 2^(|supp|/2), built exactly: `powi` rounds differently across
        // optimization levels.
        FeatureKind::Cosine => {
            let n = a.support().len() as i32;
            let half = 2f64.powi(n / 2);
            if n % 2 == 0 {
                half
            } else {
                half * std::f64::consts::SQRT_2
            }
        }
        FeatureKind::Holomorphic => 1.0,
    }
}
