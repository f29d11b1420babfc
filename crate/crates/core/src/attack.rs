//! l-infinity PGD where the final clip to `[0, 1]` is replaced by a mirror
//! reflection at the domain boundary.

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{Classifier, ModelError, Objective};
use crate::seed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AttackConfig {
    /// l-infinity radius in pixel units.
    pub radius: f64,
    pub steps: usize,
    pub step_size: f64,
    /// Targeted attacks descend the loss of this label.
    pub target: Option<usize>,
    /// Include the zero-class in the softmax the attacker differentiates.
    pub aware_extra: bool,
    pub seed: u64,
}

impl Default for AttackConfig {
    fn default() -> Self {
        Self { radius: 0.3, steps: 40, step_size: 0.01, target: None, aware_extra: true, seed: 0 }
    }
}

#[derive(Debug, Error)]
pub enum AttackError {
    #[error("invalid attack config: {0}")]
    Config(String),
    #[error("input pixel {index} = {value} outside [0, 1]")]
    OutOfRange { index: usize, value: f64 },
    #[error(transparent)]
    Model(#[from] ModelError),
}

impl AttackConfig {
    pub fn validate(&self) -> Result<(), AttackError> {
        if !(self.radius > 0.0 && self.radius.is_finite()) {
            return Err(AttackError::Config(format!("radius must be positive, got {}", self.radius)));
        }
        if self.steps == 0 {
            return Err(AttackError::Config("steps must be at least 1".into()));
        }
        if !(self.step_size > 0.0 && self.step_size.is_finite()) {
            return Err(AttackError::Config(format!("step_size must be positive, got {}", self.step_size)));
        }
        Ok(())
    }
}

/// Folds `x` into `[0, 1]` by reflecting at both boundaries: a triangle wave
/// of period 2. The integer part is taken toward zero, so `-0.2 -> 0.2`,
/// `1.3 -> 0.7` and `2.3 -> 0.3`.
pub fn reflect_project(x: f64) -> f64 {
    if (0.0..=1.0).contains(&x) {
        return x;
    }
    let a = x.abs();
    let whole = a.trunc();
    let frac = a - whole;
    if (whole as u64) & 1 == 0 {
        frac
    } else {
        1.0 - frac
    }
}

/// Runs PGD from a seeded uniform start in the ball around `x`.
///
/// Untargeted attacks ascend the cross-entropy of `label`; targeted ones
/// descend that of `cfg.target`. Each step moves by `step_size * sign(grad)`,
/// clamps the deviation from `x` to the radius, then reflects every
/// coordinate into `[0, 1]`.
pub fn pgd(c: &Classifier, x: &[f64], label: usize, cfg: &AttackConfig) -> Result<Vec<f64>, AttackError> {
    cfg.validate()?;
    if let Some(index) = x.iter().position(|v| !(0.0..=1.0).contains(v)) {
        return Err(AttackError::OutOfRange { index, value: x[index] });
    }
    let (attack_label, direction) = match cfg.target {
        Some(t) => (t, -1.0),
        None => (label, 1.0),
    };
    let obj = Objective::CrossEntropy { label: attack_label, include_zero_class: cfg.aware_extra };
    let r = cfg.radius;
    let mut rng = seed::rng(cfg.seed, &[0xa77ac]);
    let mut adv: Vec<f64> = x.iter().map(|&v| reflect_project(v + rng.gen_range(-r..=r))).collect();
    for _ in 0..cfg.steps {
        let (_, grad) = c.input_gradient(&adv, obj)?;
        for ((a, &g), &orig) in adv.iter_mut().zip(&grad).zip(x) {
            let stepped = *a + direction * cfg.step_size * sign(g);
            *a = reflect_project(orig + (stepped - orig).clamp(-r, r));
        }
    }
    Ok(adv)
}

fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hand_evaluated_reflections() {
        assert_eq!(reflect_project(0.5), 0.5);
        assert!((reflect_project(1.3) - 0.7).abs() < 1e-15);
        assert!((reflect_project(2.3) - 0.3).abs() < 1e-15);
        assert!((reflect_project(-0.2) - 0.2).abs() < 1e-15);
        assert_eq!(reflect_project(-1.0), 1.0);
        assert_eq!(reflect_project(2.0), 0.0);
    }

    #[test]
    fn config_validation() {
        assert!(AttackConfig::default().validate().is_ok());
        assert!(AttackConfig { radius: 0.0, ..Default::default() }.validate().is_err());
        assert!(AttackConfig { steps: 0, ..Default::default() }.validate().is_err());
    }
}
