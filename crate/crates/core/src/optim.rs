//! Mini-batch SGD with momentum and L2-coupled weight decay.
//!
//! With whitened features `sum |w|^2` is the Dirichlet energy of the
//! hypothesis, so weight decay `lambda` minimises
//! `lambda/2 * E[h] + mean loss`. The decay term is added to the gradient
//! before the momentum update:
//!
//! ```text
//! v <- momentum * v + (grad + weight_decay * w)
//! w <- w - lr * v
//! ```
//!
//! Biases get the same update without decay.

use std::io::Write;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::LabeledSet;
use crate::model::{Classifier, Coefficients, ModelError, Objective, Params, Scalar};
use crate::seed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self { learning_rate: 0.001, momentum: 0.9, weight_decay: 1.0, batch_size: 32, epochs: 5, seed: 0 }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        let ok = self.learning_rate > 0.0
            && self.learning_rate.is_finite()
            && (0.0..1.0).contains(&self.momentum)
            && self.weight_decay >= 0.0
            && self.weight_decay.is_finite()
            && self.batch_size >= 1
            && self.epochs >= 1;
        if ok {
            Ok(())
        } else {
            Err(TrainError::Config(format!("{self:?}")))
        }
    }
}

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("invalid training config: {0}")]
    Config(String),
    #[error("training set is empty")]
    EmptyData,
    #[error("{targets} regression targets for {samples} samples")]
    TargetCount { samples: usize, targets: usize },
    #[error("non-finite loss at epoch {epoch}, step {step}")]
    NonFiniteLoss { epoch: usize, step: usize },
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRow {
    pub epoch: usize,
    /// Global step index, counted from 0.
    pub step: usize,
    /// Mean batch loss before the update.
    pub loss: f64,
    /// Dirichlet energy after the update.
    pub energy: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainTrace {
    pub rows: Vec<TraceRow>,
    /// Sample-weighted mean batch loss per epoch.
    pub epoch_loss: Vec<f64>,
}

impl TrainTrace {
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "epoch,step,loss,energy")?;
        for r in &self.rows {
            writeln!(out, "{},{},{:.17e},{:.17e}", r.epoch, r.step, r.loss, r.energy)?;
        }
        Ok(())
    }
}

/// Trains `c` with cross-entropy on `data` (zero-class included in the
/// softmax when attached).
pub fn train(c: Classifier, data: &LabeledSet, cfg: &TrainConfig) -> Result<(Classifier, TrainTrace), TrainError> {
    let labels = data.labels();
    run(c, data, cfg, |i| Objective::CrossEntropy { label: labels[i], include_zero_class: true })
}

/// Trains a single-output cosine classifier on squared error against
/// per-sample `targets`.
pub fn train_regression(
    c: Classifier,
    data: &LabeledSet,
    targets: &[f64],
    cfg: &TrainConfig,
) -> Result<(Classifier, TrainTrace), TrainError> {
    if targets.len() != data.len() {
        return Err(TrainError::TargetCount { samples: data.len(), targets: targets.len() });
    }
    run(c, data, cfg, |i| Objective::SquaredError { target: targets[i] })
}

fn run(
    mut c: Classifier,
    data: &LabeledSet,
    cfg: &TrainConfig,
    objective: impl Fn(usize) -> Objective,
) -> Result<(Classifier, TrainTrace), TrainError> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(TrainError::EmptyData);
    }
    let mut velocity = Params::zeros(c.kind(), c.num_labels(), c.bank().len());
    let mut trace = TrainTrace::default();
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut step = 0;
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut seed::rng(cfg.seed, &[0x7a1, epoch as u64]));
        let mut total = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            let samples: Vec<(&[f64], Objective)> = batch.iter().map(|&i| (data.image(i), objective(i))).collect();
            let (loss, grad) = c.objective_gradient(&samples)?;
            if !loss.is_finite() {
                return Err(TrainError::NonFiniteLoss { epoch, step });
            }
            apply(c.params_mut(), &mut velocity, &grad, cfg);
            total += loss * batch.len() as f64;
            trace.rows.push(TraceRow { epoch, step, loss, energy: c.dirichlet_energy() });
            step += 1;
        }
        trace.epoch_loss.push(total / data.len() as f64);
    }
    Ok((c, trace))
}

/// One momentum step on every parameter.
pub(crate) fn apply(params: &mut Params, velocity: &mut Params, grad: &Params, cfg: &TrainConfig) {
    match (params, velocity, grad) {
        (Params::Real(p), Params::Real(v), Params::Real(g)) => step(p, v, g, cfg),
        (Params::Complex(p), Params::Complex(v), Params::Complex(g)) => step(p, v, g, cfg),
        _ => unreachable!("parameter kinds are fixed by the bank"),
    }
}

fn step<S: Scalar>(p: &mut Coefficients<S>, v: &mut Coefficients<S>, g: &Coefficients<S>, cfg: &TrainConfig) {
    for ((w, vel), &gr) in p.weights.iter_mut().zip(&mut v.weights).zip(&g.weights) {
        *vel = vel.scale(cfg.momentum) + gr + w.scale(cfg.weight_decay);
        *w = *w - vel.scale(cfg.learning_rate);
    }
    for ((b, vel), &gr) in p.bias.iter_mut().zip(&mut v.bias).zip(&g.bias) {
        *vel = vel.scale(cfg.momentum) + gr;
        *b = *b - vel.scale(cfg.learning_rate);
    }
}
