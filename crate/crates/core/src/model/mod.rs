//! Linear classifiers over a fixed feature bank.
//!
//! Class `j` computes `h_j(x) = b_j + sum_k w_jk F_k(pi x)` for pixels `x` in
//! `[0, 1]^n`. Cosine classifiers use `h_j` as the logit; holomorphic ones
//! use `log|h_j|`, so the softmax assigns probabilities proportional to
//! `|h_j|`. An attached zero-class contributes a constant logit of 0 and has
//! no parameters: it wins exactly on the analytic polyhedron
//! `{ max_j |h_j| < 1 }`.

mod checkpoint;
mod scalar;

use std::sync::Arc;

use num_complex::Complex64;
use rayon::prelude::*;
use thiserror::Error;

use crate::features::{FeatureBank, FeatureKind};
use crate::seed;

pub(crate) use scalar::{axpy, axpy_conj, dot};
pub use scalar::{Scalar, LOG_MAGNITUDE_FLOOR};

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("label {label} out of range for {num_labels} labels")]
    LabelOutOfRange { label: usize, num_labels: usize },
    #[error("zero-class already attached")]
    ZeroClassAttached,
    #[error("operation needs a zero-class")]
    NoZeroClass,
    #[error("operation needs a {expected} classifier, got {got}")]
    KindMismatch { expected: FeatureKind, got: FeatureKind },
    #[error("classifiers use different feature banks")]
    BankMismatch,
    #[error("input has {got} pixels, bank expects {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("parameter shape mismatch: {0}")]
    Shape(String),
    #[error("non-finite parameter")]
    NonFinite,
    #[error("squared-error objective needs a single-output cosine classifier")]
    NotRegression,
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Per-class coefficients, weights stored row-major `(class, feature)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Coefficients<S> {
    pub weights: Vec<S>,
    pub bias: Vec<S>,
}

impl<S: Scalar> Coefficients<S> {
    fn zeros(num_labels: usize, k: usize) -> Self {
        Self { weights: vec![S::default(); num_labels * k], bias: vec![S::default(); num_labels] }
    }

    fn row(&self, j: usize, k: usize) -> &[S] {
        &self.weights[j * k..(j + 1) * k]
    }
}

/// Classifier parameters (or a gradient with the same shape).
#[derive(Debug, Clone, PartialEq)]
pub enum Params {
    Real(Coefficients<f64>),
    Complex(Coefficients<Complex64>),
}

impl Params {
    pub fn zeros(kind: FeatureKind, num_labels: usize, k: usize) -> Self {
        match kind {
            FeatureKind::Cosine => Params::Real(Coefficients::zeros(num_labels, k)),
            FeatureKind::Holomorphic => Params::Complex(Coefficients::zeros(num_labels, k)),
        }
    }

    pub fn kind(&self) -> FeatureKind {
        match self {
            Params::Real(_) => FeatureKind::Cosine,
            Params::Complex(_) => FeatureKind::Holomorphic,
        }
    }

    /// Number of weights (bias excluded).
    pub fn num_weights(&self) -> usize {
        match self {
            Params::Real(c) => c.weights.len(),
            Params::Complex(c) => c.weights.len(),
        }
    }

    pub fn num_bias(&self) -> usize {
        match self {
            Params::Real(c) => c.bias.len(),
            Params::Complex(c) => c.bias.len(),
        }
    }

    /// Weight `i` as a complex number (imaginary part 0 for real params).
    pub fn weight(&self, i: usize) -> Complex64 {
        match self {
            Params::Real(c) => c.weights[i].to_complex(),
            Params::Complex(c) => c.weights[i],
        }
    }

    pub fn bias(&self, j: usize) -> Complex64 {
        match self {
            Params::Real(c) => c.bias[j].to_complex(),
            Params::Complex(c) => c.bias[j],
        }
    }

    /// Sum of `|w|^2` over weights.
    pub fn weight_norm_sqr(&self) -> f64 {
        match self {
            Params::Real(c) => c.weights.iter().map(|w| w * w).sum(),
            Params::Complex(c) => c.weights.iter().map(|w| w.norm_sqr()).sum(),
        }
    }

    pub fn is_finite(&self) -> bool {
        match self {
            Params::Real(c) => c.weights.iter().chain(&c.bias).all(|v| v.is_finite()),
            Params::Complex(c) => c.weights.iter().chain(&c.bias).all(|v| v.is_finite()),
        }
    }
}

/// Softmax inputs of one sample. The zero-class logit, when present, is the
/// last entry and is exactly 0.
#[derive(Debug, Clone, PartialEq)]
pub struct Logits {
    pub values: Vec<f64>,
    pub has_zero_class: bool,
}

impl Logits {
    /// Logits of the true labels only.
    pub fn true_logits(&self) -> &[f64] {
        if self.has_zero_class {
            &self.values[..self.values.len() - 1]
        } else {
            &self.values
        }
    }

    /// Predicted label. Ties go to the lowest true-class index, and the
    /// zero-class (label `num_labels`) wins only when every true logit is
    /// strictly below 0.
    pub fn argmax(&self) -> usize {
        let t = self.true_logits();
        let mut best = 0;
        for (j, &v) in t.iter().enumerate().skip(1) {
            if v > t[best] {
                best = j;
            }
        }
        if self.has_zero_class && t[best] < 0.0 {
            t.len()
        } else {
            best
        }
    }
}

/// Numerically stable softmax.
pub fn probabilities(logits: &[f64]) -> Vec<f64> {
    let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = logits.iter().map(|&l| (l - m).exp()).collect();
    let z: f64 = e.iter().sum();
    e.into_iter().map(|v| v / z).collect()
}

fn log_softmax(logits: &[f64]) -> Vec<f64> {
    let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = m + logits.iter().map(|&l| (l - m).exp()).sum::<f64>().ln();
    logits.iter().map(|&l| l - lse).collect()
}

/// Per-sample training or attack objective.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Objective {
    /// Cross-entropy against `label`; `include_zero_class` adds the
    /// zero-class logit to the softmax when one is attached.
    CrossEntropy { label: usize, include_zero_class: bool },
    /// `(h_0(x) - target)^2` for single-output cosine classifiers.
    SquaredError { target: f64 },
}

/// Forward and backward state of one sample.
pub(crate) struct Pass<S> {
    pub theta: Vec<f64>,
    pub feats: Vec<S>,
    /// `dL/dh_j` in the real-pair convention.
    pub cot: Vec<S>,
    pub loss: f64,
}

#[derive(Debug, Clone)]
pub struct Classifier {
    bank: Arc<FeatureBank>,
    params: Params,
    num_labels: usize,
    has_zero_class: bool,
}

impl Classifier {
    /// All weights and biases zero.
    pub fn zeros(bank: Arc<FeatureBank>, num_labels: usize) -> Self {
        let params = Params::zeros(bank.kind(), num_labels, bank.len());
        Self { bank, params, num_labels, has_zero_class: false }
    }

    /// Weights uniform in `[-1/sqrt(K), 1/sqrt(K)]` (each real component for
    /// complex weights), biases zero.
    pub fn init_uniform(bank: Arc<FeatureBank>, num_labels: usize, seed: u64) -> Self {
        let mut c = Self::zeros(bank, num_labels);
        let s = 1.0 / (c.bank.len() as f64).sqrt();
        let mut rng = seed::rng(seed, &[0x1417]);
        match &mut c.params {
            Params::Real(p) => p.weights.iter_mut().for_each(|w| *w = f64::sample_uniform(&mut rng, s)),
            Params::Complex(p) => p.weights.iter_mut().for_each(|w| *w = Complex64::sample_uniform(&mut rng, s)),
        }
        c
    }

    pub fn from_params(
        bank: Arc<FeatureBank>,
        num_labels: usize,
        params: Params,
        has_zero_class: bool,
    ) -> Result<Self, ModelError> {
        if num_labels == 0 {
            return Err(ModelError::Shape("no labels".into()));
        }
        if params.kind() != bank.kind() {
            return Err(ModelError::KindMismatch { expected: bank.kind(), got: params.kind() });
        }
        if params.num_weights() != num_labels * bank.len() || params.num_bias() != num_labels {
            return Err(ModelError::Shape(format!(
                "expected {} weights and {} biases, got {} and {}",
                num_labels * bank.len(),
                num_labels,
                params.num_weights(),
                params.num_bias()
            )));
        }
        if !params.is_finite() {
            return Err(ModelError::NonFinite);
        }
        Ok(Self { bank, params, num_labels, has_zero_class })
    }

    pub fn bank(&self) -> &Arc<FeatureBank> {
        &self.bank
    }

    pub fn kind(&self) -> FeatureKind {
        self.bank.kind()
    }

    pub fn params(&self) -> &Params {
        &self.params
    }

    pub(crate) fn params_mut(&mut self) -> &mut Params {
        &mut self.params
    }

    /// Number of true labels (the zero-class excluded).
    pub fn num_labels(&self) -> usize {
        self.num_labels
    }

    pub fn has_zero_class(&self) -> bool {
        self.has_zero_class
    }

    /// Label reported when the zero-class wins.
    pub fn zero_class_label(&self) -> Option<usize> {
        self.has_zero_class.then_some(self.num_labels)
    }

    pub fn shares_bank(&self, other: &Classifier) -> bool {
        Arc::ptr_eq(&self.bank, &other.bank) || self.bank.indices() == other.bank.indices()
    }

    /// Attaches the parameter-free constant zero hypothesis.
    pub fn attach_zero_class(mut self) -> Result<Self, ModelError> {
        if self.has_zero_class {
            return Err(ModelError::ZeroClassAttached);
        }
        self.has_zero_class = true;
        Ok(self)
    }

    fn check_input(&self, pixels: &[f64]) -> Result<(), ModelError> {
        if pixels.len() != self.bank.dim() {
            return Err(ModelError::DimensionMismatch { expected: self.bank.dim(), got: pixels.len() });
        }
        Ok(())
    }

    /// Raw class functions `h_j(x)` (imaginary part 0 for cosine classifiers).
    pub fn hypothesis(&self, pixels: &[f64]) -> Result<Vec<Complex64>, ModelError> {
        self.check_input(pixels)?;
        Ok(match &self.params {
            Params::Real(p) => self.raw_scores(p, pixels).into_iter().map(|v| v.to_complex()).collect(),
            Params::Complex(p) => self.raw_scores(p, pixels),
        })
    }

    fn raw_scores<S: Scalar>(&self, p: &Coefficients<S>, pixels: &[f64]) -> Vec<S> {
        let theta = to_theta(pixels);
        let mut feats = vec![S::default(); self.bank.len()];
        S::features(&self.bank, &theta, &mut feats);
        (0..self.num_labels).map(|j| p.bias[j] + dot(p.row(j, self.bank.len()), &feats)).collect()
    }

    pub fn forward(&self, pixels: &[f64]) -> Result<Logits, ModelError> {
        self.check_input(pixels)?;
        let mut values: Vec<f64> = match &self.params {
            Params::Real(p) => self.raw_scores(p, pixels).into_iter().map(f64::logit).collect(),
            Params::Complex(p) => self.raw_scores(p, pixels).into_iter().map(Complex64::logit).collect(),
        };
        if self.has_zero_class {
            values.push(0.0);
        }
        Ok(Logits { values, has_zero_class: self.has_zero_class })
    }

    pub fn predict(&self, pixels: &[f64]) -> Result<usize, ModelError> {
        Ok(self.forward(pixels)?.argmax())
    }

    /// `-log p(label)` with the zero-class (if any) in the softmax.
    pub fn cross_entropy(&self, pixels: &[f64], label: usize) -> Result<f64, ModelError> {
        self.check_label(label)?;
        let logits = self.forward(pixels)?;
        Ok(-log_softmax(&logits.values)[label])
    }

    fn check_label(&self, label: usize) -> Result<(), ModelError> {
        if label >= self.num_labels {
            return Err(ModelError::LabelOutOfRange { label, num_labels: self.num_labels });
        }
        Ok(())
    }

    fn check_objective(&self, obj: &Objective) -> Result<(), ModelError> {
        match *obj {
            Objective::CrossEntropy { label, .. } => self.check_label(label),
            Objective::SquaredError { .. } => {
                if self.num_labels != 1 || self.kind() != FeatureKind::Cosine || self.has_zero_class {
                    Err(ModelError::NotRegression)
                } else {
                    Ok(())
                }
            }
        }
    }

    pub(crate) fn pass<S: Scalar>(&self, p: &Coefficients<S>, pixels: &[f64], obj: Objective) -> Pass<S> {
        let k = self.bank.len();
        let theta = to_theta(pixels);
        let mut feats = vec![S::default(); k];
        S::features(&self.bank, &theta, &mut feats);
        let h: Vec<S> = (0..self.num_labels).map(|j| p.bias[j] + dot(p.row(j, k), &feats)).collect();
        let (loss, dlogits) = match obj {
            Objective::CrossEntropy { label, include_zero_class } => {
                let mut logits: Vec<f64> = h.iter().map(|&v| S::logit(v)).collect();
                if include_zero_class && self.has_zero_class {
                    logits.push(0.0);
                }
                let ls = log_softmax(&logits);
                let mut d: Vec<f64> = ls.iter().map(|l| l.exp()).collect();
                d[label] -= 1.0;
                (-ls[label], d)
            }
            Objective::SquaredError { target } => {
                let r = S::logit(h[0]) - target;
                (r * r, vec![2.0 * r])
            }
        };
        let cot = (0..self.num_labels).map(|j| S::cotangent(h[j], dlogits[j])).collect();
        Pass { theta, feats, cot, loss }
    }

    /// Loss and its gradient with respect to the pixels.
    pub fn input_gradient(&self, pixels: &[f64], obj: Objective) -> Result<(f64, Vec<f64>), ModelError> {
        self.check_input(pixels)?;
        self.check_objective(&obj)?;
        Ok(match &self.params {
            Params::Real(p) => self.input_gradient_impl(p, pixels, obj),
            Params::Complex(p) => self.input_gradient_impl(p, pixels, obj),
        })
    }

    fn input_gradient_impl<S: Scalar>(&self, p: &Coefficients<S>, pixels: &[f64], obj: Objective) -> (f64, Vec<f64>) {
        let k = self.bank.len();
        let pass = self.pass(p, pixels, obj);
        // u_k = sum_j conj(G_j) w_jk
        let mut u = vec![S::default(); k];
        for (j, &g) in pass.cot.iter().enumerate() {
            if g != S::default() {
                axpy(g.conj(), p.row(j, k), &mut u);
            }
        }
        let mut grad = vec![0.0; pixels.len()];
        S::input_grad(&self.bank, &pass.theta, &pass.feats, &u, &mut grad);
        grad.iter_mut().for_each(|g| *g *= std::f64::consts::PI);
        (pass.loss, grad)
    }

    /// Mean cross-entropy gradient over `(pixels, label)` pairs, with the
    /// zero-class (if any) in the softmax.
    pub fn gradient(&self, batch: &[(&[f64], usize)]) -> Result<Params, ModelError> {
        let samples: Vec<(&[f64], Objective)> =
            batch.iter().map(|&(x, label)| (x, Objective::CrossEntropy { label, include_zero_class: true })).collect();
        Ok(self.objective_gradient(&samples)?.1)
    }

    /// Mean loss and mean parameter gradient over a batch.
    pub fn objective_gradient(&self, samples: &[(&[f64], Objective)]) -> Result<(f64, Params), ModelError> {
        if samples.is_empty() {
            return Err(ModelError::Shape("empty batch".into()));
        }
        for (x, obj) in samples {
            self.check_input(x)?;
            self.check_objective(obj)?;
        }
        Ok(match &self.params {
            Params::Real(p) => {
                let (l, g) = self.batch_gradient(p, samples);
                (l, Params::Real(g))
            }
            Params::Complex(p) => {
                let (l, g) = self.batch_gradient(p, samples);
                (l, Params::Complex(g))
            }
        })
    }

    fn batch_gradient<S: Scalar>(
        &self,
        p: &Coefficients<S>,
        samples: &[(&[f64], Objective)],
    ) -> (f64, Coefficients<S>) {
        let k = self.bank.len();
        let passes: Vec<Pass<S>> = samples.par_iter().map(|&(x, obj)| self.pass(p, x, obj)).collect();
        let inv = 1.0 / samples.len() as f64;
        let mut grad = Coefficients::zeros(self.num_labels, k);
        grad.weights.par_chunks_mut(k).enumerate().for_each(|(j, row)| {
            for pass in &passes {
                let g = pass.cot[j].scale(inv);
                if g != S::default() {
                    axpy_conj(g, &pass.feats, row);
                }
            }
        });
        for pass in &passes {
            for (b, &g) in grad.bias.iter_mut().zip(&pass.cot) {
                *b += g.scale(inv);
            }
        }
        let loss = passes.iter().map(|p| p.loss).sum::<f64>() * inv;
        (loss, grad)
    }

    /// Dirichlet energy of the realized hypothesis: `sum |w|^2` over all
    /// classes and features. Biases do not contribute.
    pub fn dirichlet_energy(&self) -> f64 {
        self.params.weight_norm_sqr()
    }
}

/// Maps pixels in `[0, 1]` onto the feature domain `[0, pi]`.
pub(crate) fn to_theta(pixels: &[f64]) -> Vec<f64> {
    pixels.iter().map(|&v| v * std::f64::consts::PI).collect()
}

/// Root seed helper for callers that initialise several classifiers.
pub fn init_seed(root: u64, tag: u64) -> u64 {
    seed::derive(root, &[0xc1a5, tag])
}
