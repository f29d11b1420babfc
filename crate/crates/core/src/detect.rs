//! Analytic-polyhedron membership as an adversarial detector.
//!
//! For a holomorphic classifier `h = (h_1, ..., h_m)` the polyhedron
//! `{ x : max_j |h_j(x)| < 1 }` is exactly where the attached zero-class
//! wins. A sample is flagged as adversarial when it falls inside.

use rayon::prelude::*;
use thiserror::Error;

use crate::attack::{pgd, AttackConfig, AttackError};
use crate::data::{DataError, LabeledSet, Origin};
use crate::features::FeatureKind;
use crate::model::{Classifier, ModelError};
use crate::seed;

#[derive(Debug, Error)]
pub enum DetectError {
    #[error("polyhedron membership needs a holomorphic classifier")]
    NotHolomorphic,
    #[error("detection needs an attached zero-class")]
    NoZeroClass,
    #[error("benign set is empty")]
    EmptyBenign,
    #[error("no adversarial example fell inside the polyhedron")]
    EmptyAdversarial,
    #[error(transparent)]
    Attack(#[from] AttackError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Data(#[from] DataError),
}

fn check(c: &Classifier) -> Result<(), DetectError> {
    if c.kind() != FeatureKind::Holomorphic {
        return Err(DetectError::NotHolomorphic);
    }
    if !c.has_zero_class() {
        return Err(DetectError::NoZeroClass);
    }
    Ok(())
}

/// Whether `max_j |h_j(x)| < 1`.
pub fn in_polyhedron(c: &Classifier, x: &[f64]) -> Result<bool, DetectError> {
    check(c)?;
    Ok(c.hypothesis(x)?.iter().all(|h| h.norm_sqr() < 1.0))
}

/// Confusion counts and rates; adversarial is the positive class.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetectionReport {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
    pub tn: usize,
    /// Nothing was flagged, so precision is undefined and reported as 0.
    pub degenerate: bool,
}

impl DetectionReport {
    pub fn from_counts(tp: usize, fp: usize, fn_: usize, tn: usize) -> Self {
        let flagged = tp + fp;
        let degenerate = flagged == 0;
        let precision = if degenerate { 0.0 } else { tp as f64 / flagged as f64 };
        let recall = if tp + fn_ == 0 { 0.0 } else { tp as f64 / (tp + fn_) as f64 };
        let f1 = if precision + recall > 0.0 { 2.0 * precision * recall / (precision + recall) } else { 0.0 };
        Self { precision, recall, f1, tp, fp, fn_, tn, degenerate }
    }

    pub fn total(&self) -> usize {
        self.tp + self.fp + self.fn_ + self.tn
    }
}

/// Per-sample attack seed, stable under reordering of the work.
fn sample_seed(cfg: &AttackConfig, i: usize) -> AttackConfig {
    AttackConfig { seed: seed::derive(cfg.seed, &[0xde7, i as u64]), ..cfg.clone() }
}

/// Attacks every benign sample whose label differs from the attack target
/// and returns `(index, adversarial image)` pairs in input order.
pub fn attack_all(
    c: &Classifier,
    benign: &LabeledSet,
    cfg: &AttackConfig,
) -> Result<Vec<(usize, Vec<f64>)>, DetectError> {
    let idx: Vec<usize> = (0..benign.len()).filter(|&i| cfg.target != Some(benign.label(i))).collect();
    idx.into_par_iter().map(|i| Ok((i, pgd(c, benign.image(i), benign.label(i), &sample_seed(cfg, i))?))).collect()
}

/// Attacks each benign sample once and scores the detector on the pooled
/// benign and adversarial sets. Targeted runs skip samples already carrying
/// the target label, on both sides of the pool.
pub fn detect_run(c: &Classifier, benign: &LabeledSet, cfg: &AttackConfig) -> Result<DetectionReport, DetectError> {
    check(c)?;
    if benign.is_empty() {
        return Err(DetectError::EmptyBenign);
    }
    let advs = attack_all(c, benign, cfg)?;
    let flags: Vec<(bool, bool)> = advs
        .par_iter()
        .map(|(i, adv)| Ok((in_polyhedron(c, benign.image(*i))?, in_polyhedron(c, adv)?)))
        .collect::<Result<_, DetectError>>()?;
    let (mut tp, mut fp) = (0, 0);
    for &(nat, adv) in &flags {
        fp += usize::from(nat);
        tp += usize::from(adv);
    }
    let n = flags.len();
    Ok(DetectionReport::from_counts(tp, fp, n - tp, n - fp))
}

/// Natural samples, adversarial samples inside the polyhedron, and their
/// union, all origin-tagged.
#[derive(Debug, Clone, PartialEq)]
pub struct Partition {
    pub s_nat: LabeledSet,
    pub s_adv: LabeledSet,
    pub s_union: LabeledSet,
}

impl Partition {
    pub fn new(s_nat: LabeledSet, s_adv: LabeledSet) -> Result<Self, DataError> {
        let s_union = s_nat.concat(&s_adv)?;
        Ok(Self { s_nat, s_adv, s_union })
    }
}

/// Attacks every benign sample and keeps the adversarial examples that land
/// inside the polyhedron, labelled with their source label. The attack
/// configuration is recorded in the provenance of every set.
pub fn build_partition(c: &Classifier, benign: &LabeledSet, cfg: &AttackConfig) -> Result<Partition, DetectError> {
    check(c)?;
    if benign.is_empty() {
        return Err(DetectError::EmptyBenign);
    }
    let advs = attack_all(c, benign, cfg)?;
    let inside: Vec<bool> = advs.par_iter().map(|(_, a)| in_polyhedron(c, a)).collect::<Result<_, _>>()?;
    let mut s_adv = LabeledSet::empty(benign.dim());
    for ((i, adv), keep) in advs.iter().zip(inside) {
        if keep {
            s_adv.push(adv, benign.label(*i), Some(Origin::Adversarial))?;
        }
    }
    if s_adv.is_empty() {
        return Err(DetectError::EmptyAdversarial);
    }
    let mut s_nat = benign.clone().with_origin(Origin::Natural);
    let prov = [
        ("attack.radius", cfg.radius.to_string()),
        ("attack.steps", cfg.steps.to_string()),
        ("attack.step_size", cfg.step_size.to_string()),
        ("attack.target", cfg.target.map_or("none".into(), |t| t.to_string())),
        ("attack.aware_extra", cfg.aware_extra.to_string()),
        ("attack.seed", cfg.seed.to_string()),
    ];
    for (k, v) in prov {
        s_nat.provenance.insert(k.into(), v.clone());
        s_adv.provenance.insert(k.into(), v);
    }
    Ok(Partition::new(s_nat, s_adv)?)
}
