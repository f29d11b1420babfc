//! Student-t quantiles and the continuity-bias test.
//!
//! A trial trains three real classifiers on the same task: `h` on the
//! natural pool, `f` on the adversarial pool and `g` on their union. Its
//! bias sample is `loss(g) - loss(switch)`, where the switching classifier
//! scores natural test samples with `h` and adversarial ones with `f`. Over
//! `n` trials, `T = mean / sd * sqrt(n)` is compared against the one-sided
//! Student-t critical value with `n - 1` degrees of freedom.

use std::f64::consts::PI;
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand_distr::{Distribution, Normal};
use thiserror::Error;

use crate::data::{LabeledSet, Origin};
use crate::detect::Partition;
use crate::features::{FeatureBank, FeatureKind};
use crate::model::{Classifier, Coefficients, ModelError, Params};
use crate::optim::{train, train_regression, TrainConfig, TrainError};
use crate::seed;

#[derive(Debug, Error)]
pub enum StatsError {
    #[error("probability {0} outside (0, 1)")]
    Probability(f64),
    #[error("degrees of freedom must be at least 1")]
    DegreesOfFreedom,
    #[error("need at least 2 samples, got {0}")]
    TooFewSamples(usize),
    #[error("samples have zero standard deviation")]
    ZeroSpread,
    #[error("non-finite sample")]
    NonFinite,
    #[error("classifiers must share a feature bank")]
    BankMismatch,
    #[error("test set has no origin tags")]
    Untagged,
    #[error("continuity-bias trials need a cosine bank")]
    NotCosine,
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Train(#[from] TrainError),
}

/// `ln Gamma(x)` for `x > 0` (Lanczos, g = 7).
pub fn ln_gamma(x: f64) -> f64 {
    const G: f64 = 7.0;
    const C: [f64; 9] = [
        0.999_999_999_999_809_9,
        676.520_368_121_885_1,
        -1_259.139_216_722_402_8,
        771.323_428_777_653_1,
        -176.615_029_162_140_6,
        12.507_343_278_686_905,
        -0.138_571_095_265_720_12,
        9.984_369_578_019_572e-6,
        1.505_632_735_149_311_6e-7,
    ];
    if x < 0.5 {
        // reflection
        return (PI / (PI * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut a = C[0];
    let t = x + G + 0.5;
    for (i, &c) in C.iter().enumerate().skip(1) {
        a += c / (x + i as f64);
    }
    0.5 * (2.0 * PI).ln() + (x + 0.5) * t.ln() - t + a.ln()
}

/// Continued fraction for the incomplete beta function (modified Lentz).
fn beta_cf(a: f64, b: f64, x: f64) -> f64 {
    const TINY: f64 = 1e-300;
    let (qab, qap, qam) = (a + b, a + 1.0, a - 1.0);
    let mut c = 1.0;
    let mut d = 1.0 - qab * x / qap;
    if d.abs() < TINY {
        d = TINY;
    }
    d = 1.0 / d;
    let mut h = d;
    for m in 1..=1000 {
        let m = m as f64;
        let m2 = 2.0 * m;
        let aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        h *= d * c;
        let aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let del = d * c;
        h *= del;
        if (del - 1.0).abs() < 1e-16 {
            break;
        }
    }
    h
}

/// Regularized incomplete beta `I_x(a, b)`.
pub fn inc_beta(a: f64, b: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x >= 1.0 {
        return 1.0;
    }
    let ln_front = ln_gamma(a + b) - ln_gamma(a) - ln_gamma(b) + a * x.ln() + b * (1.0 - x).ln();
    if x < (a + 1.0) / (a + b + 2.0) {
        ln_front.exp() * beta_cf(a, b, x) / a
    } else {
        1.0 - ln_front.exp() * beta_cf(b, a, 1.0 - x) / b
    }
}

/// Student-t CDF with `nu` degrees of freedom.
pub fn t_cdf(nu: f64, t: f64) -> f64 {
    let tail = 0.5 * inc_beta(0.5 * nu, 0.5, nu / (nu + t * t));
    if t > 0.0 {
        1.0 - tail
    } else {
        tail
    }
}

/// Student-t density.
pub fn t_pdf(nu: f64, t: f64) -> f64 {
    let ln_norm = ln_gamma(0.5 * (nu + 1.0)) - ln_gamma(0.5 * nu) - 0.5 * (nu * PI).ln();
    (ln_norm - 0.5 * (nu + 1.0) * (t * t / nu).ln_1p()).exp()
}

/// Quantile of the Student-t distribution, by safeguarded Newton iteration
/// on the CDF.
pub fn t_inverse_cdf(nu: u32, p: f64) -> Result<f64, StatsError> {
    if nu == 0 {
        return Err(StatsError::DegreesOfFreedom);
    }
    if !(p > 0.0 && p < 1.0) {
        return Err(StatsError::Probability(p));
    }
    if p == 0.5 {
        return Ok(0.0);
    }
    let nu = nu as f64;
    // solve in the upper half and mirror
    let q = p.max(1.0 - p);
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    while t_cdf(nu, hi) < q {
        lo = hi;
        hi *= 2.0;
        if !hi.is_finite() {
            return Err(StatsError::Probability(p));
        }
    }
    let mut t = 0.5 * (lo + hi);
    for _ in 0..200 {
        let f = t_cdf(nu, t) - q;
        if f == 0.0 {
            break;
        }
        if f < 0.0 {
            lo = t;
        } else {
            hi = t;
        }
        let newton = t - f / t_pdf(nu, t);
        let next = if newton > lo && newton < hi { newton } else { 0.5 * (lo + hi) };
        if (next - t).abs() <= 1e-14 * t.abs().max(1.0) {
            t = next;
            break;
        }
        t = next;
    }
    Ok(if p < 0.5 { -t } else { t })
}

/// Sample mean and unbiased standard deviation.
pub fn mean_sd(samples: &[f64]) -> (f64, f64) {
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    let var = samples.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// `mean / sd * sqrt(n)`.
pub fn t_statistic(samples: &[f64]) -> Result<f64, StatsError> {
    if samples.len() < 2 {
        return Err(StatsError::TooFewSamples(samples.len()));
    }
    if samples.iter().any(|v| !v.is_finite()) {
        return Err(StatsError::NonFinite);
    }
    let (mean, sd) = mean_sd(samples);
    if sd == 0.0 {
        return Err(StatsError::ZeroSpread);
    }
    Ok(mean / sd * (samples.len() as f64).sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Decision {
    AcceptH1,
    RejectH1,
}

impl std::fmt::Display for Decision {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Decision::AcceptH1 => "accepted",
            Decision::RejectH1 => "rejected",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BiasTestReport {
    pub samples: Vec<f64>,
    pub mean: f64,
    pub sd: f64,
    pub t: f64,
    pub critical: f64,
    pub confidence: f64,
    pub decision: Decision,
    /// Every sample was identical: `T` is set to 0 for a zero mean and to an
    /// infinity of the mean's sign otherwise.
    pub degenerate: bool,
}

impl BiasTestReport {
    pub fn from_samples(samples: Vec<f64>, confidence: f64) -> Result<Self, StatsError> {
        if samples.len() < 2 {
            return Err(StatsError::TooFewSamples(samples.len()));
        }
        if samples.iter().any(|v| !v.is_finite()) {
            return Err(StatsError::NonFinite);
        }
        let critical = t_inverse_cdf(samples.len() as u32 - 1, 1.0 - confidence)?;
        let (mean, sd) = mean_sd(&samples);
        let (t, degenerate) = match t_statistic(&samples) {
            Ok(t) => (t, false),
            Err(StatsError::ZeroSpread) if mean == 0.0 => (0.0, true),
            Err(StatsError::ZeroSpread) => (f64::INFINITY.copysign(mean), true),
            Err(e) => return Err(e),
        };
        let decision = if t > critical { Decision::AcceptH1 } else { Decision::RejectH1 };
        Ok(Self { samples, mean, sd, t, critical, confidence, decision, degenerate })
    }
}

/// Collects `trials` bias samples and tests them at `confidence`.
pub fn run_bias_test<E>(
    trials: usize,
    confidence: f64,
    mut trial: impl FnMut(usize) -> Result<f64, E>,
) -> Result<BiasTestReport, E>
where
    E: From<StatsError>,
{
    if trials < 2 {
        return Err(StatsError::TooFewSamples(trials).into());
    }
    let samples = (0..trials).map(&mut trial).collect::<Result<Vec<_>, E>>()?;
    Ok(BiasTestReport::from_samples(samples, confidence)?)
}

/// Fraction of misclassified samples (zero-class predictions count as
/// errors).
pub fn zero_one_loss(c: &Classifier, set: &LabeledSet) -> Result<f64, StatsError> {
    Ok(wrong(c, set, |_| true)? as f64 / set.len() as f64)
}

fn wrong(c: &Classifier, set: &LabeledSet, keep: impl Fn(usize) -> bool + Sync) -> Result<usize, StatsError> {
    use rayon::prelude::*;
    let keep = &keep;
    (0..set.len())
        .into_par_iter()
        .filter(|&i| keep(i))
        .map(|i| Ok(usize::from(c.predict(set.image(i))? != set.label(i))))
        .sum()
}

/// 0-1 loss of the classifier that routes natural samples to `h` and
/// adversarial samples to `f` by their origin tag.
pub fn switching_loss(h: &Classifier, f: &Classifier, test: &LabeledSet) -> Result<f64, StatsError> {
    if !h.shares_bank(f) {
        return Err(StatsError::BankMismatch);
    }
    let origin = test.origins().ok_or(StatsError::Untagged)?;
    let nat = wrong(h, test, |i| origin[i] == Origin::Natural)?;
    let adv = wrong(f, test, |i| origin[i] == Origin::Adversarial)?;
    Ok((nat + adv) as f64 / test.len() as f64)
}

fn squared_errors(
    c: &Classifier,
    set: &LabeledSet,
    targets: &[f64],
    keep: impl Fn(usize) -> bool,
) -> Result<f64, StatsError> {
    let mut total = 0.0;
    for i in (0..set.len()).filter(|&i| keep(i)) {
        let r = c.hypothesis(set.image(i))?[0].re - targets[i];
        total += r * r;
    }
    Ok(total)
}

/// A continuous target `t(x) = sum_k w_k F_k(pi x)` on a whitened cosine
/// bank with `w_k ~ N(0, 1 / (1 + ||a_k||^2)^2)`.
#[derive(Debug, Clone)]
pub struct HarmonicTarget {
    model: Classifier,
}

impl HarmonicTarget {
    pub fn eval(&self, pixels: &[f64]) -> Result<f64, StatsError> {
        Ok(self.model.hypothesis(pixels)?[0].re)
    }

    pub fn eval_set(&self, set: &LabeledSet) -> Result<Vec<f64>, StatsError> {
        use rayon::prelude::*;
        (0..set.len()).into_par_iter().map(|i| self.eval(set.image(i))).collect()
    }

    /// `sum |w|^2`.
    pub fn energy(&self) -> f64 {
        self.model.dirichlet_energy()
    }

    pub fn coefficients(&self) -> Vec<f64> {
        match self.model.params() {
            Params::Real(p) => p.weights.clone(),
            Params::Complex(_) => unreachable!("targets are real"),
        }
    }
}

pub fn random_harmonic_target(bank: Arc<FeatureBank>, seed: u64) -> Result<HarmonicTarget, StatsError> {
    if bank.kind() != FeatureKind::Cosine {
        return Err(StatsError::NotCosine);
    }
    let mut rng = seed::rng(seed, &[0x7a29e7]);
    let weights = bank
        .indices()
        .iter()
        .map(|a| {
            let a2 = a.l2() * a.l2();
            Normal::new(0.0, 1.0 / (1.0 + a2)).expect("positive sd").sample(&mut rng)
        })
        .collect();
    let params = Params::Real(Coefficients { weights, bias: vec![0.0] });
    Ok(HarmonicTarget { model: Classifier::from_params(bank, 1, params, false)? })
}

/// Task of one bias trial.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Task {
    /// Binary task from a seeded balanced split of `num_labels` labels.
    Classification { num_labels: usize, split_seed: u64 },
    /// Squared-error regression onto a random harmonic target.
    Regression { target_seed: u64 },
}

/// Superclass (0 or 1) of every original label for a balanced split.
pub fn balanced_bipartition(num_labels: usize, seed: u64) -> Vec<usize> {
    let mut labels: Vec<usize> = (0..num_labels).collect();
    labels.shuffle(&mut seed::rng(seed, &[0xb1]));
    let mut side = vec![0; num_labels];
    for &l in &labels[..num_labels / 2] {
        side[l] = 1;
    }
    side
}

/// One bias sample: `loss(g) - loss(switch)` on the test partition, with
/// `h`, `f`, `g` trained on the natural, adversarial and union pools of
/// `train_part`. Classification uses 0-1 loss, regression mean squared
/// error.
pub fn continuity_bias_trial(
    bank: &Arc<FeatureBank>,
    train_part: &Partition,
    test_part: &Partition,
    task: Task,
    cfg: &TrainConfig,
    seed: u64,
) -> Result<f64, StatsError> {
    if bank.kind() != FeatureKind::Cosine {
        return Err(StatsError::NotCosine);
    }
    let sub = |tag: u64| TrainConfig { seed: seed::derive(seed, &[tag]), ..cfg.clone() };
    let init_seed = |tag: u64| seed::derive(seed, &[tag, 0x1417]);
    let test = &test_part.s_union;
    match task {
        Task::Classification { num_labels, split_seed } => {
            let side = balanced_bipartition(num_labels, split_seed);
            let relabel = |s: &LabeledSet| s.relabel(|l| side[l]);
            let fit = |set: &LabeledSet, tag: u64| -> Result<Classifier, StatsError> {
                let c = Classifier::init_uniform(bank.clone(), 2, init_seed(tag));
                Ok(train(c, &relabel(set), &sub(tag))?.0)
            };
            let h = fit(&train_part.s_nat, 1)?;
            let f = fit(&train_part.s_adv, 2)?;
            let g = fit(&train_part.s_union, 3)?;
            let test = relabel(test);
            Ok(zero_one_loss(&g, &test)? - switching_loss(&h, &f, &test)?)
        }
        Task::Regression { target_seed } => {
            let target = random_harmonic_target(bank.clone(), target_seed)?;
            let fit = |set: &LabeledSet, tag: u64| -> Result<Classifier, StatsError> {
                let c = Classifier::init_uniform(bank.clone(), 1, init_seed(tag));
                Ok(train_regression(c, set, &target.eval_set(set)?, &sub(tag))?.0)
            };
            let h = fit(&train_part.s_nat, 1)?;
            let f = fit(&train_part.s_adv, 2)?;
            let g = fit(&train_part.s_union, 3)?;
            let y = target.eval_set(test)?;
            let origin = test.origins().ok_or(StatsError::Untagged)?;
            let n = test.len() as f64;
            let plain = squared_errors(&g, test, &y, |_| true)? / n;
            let switched = (squared_errors(&h, test, &y, |i| origin[i] == Origin::Natural)?
                + squared_errors(&f, test, &y, |i| origin[i] == Origin::Adversarial)?)
                / n;
            Ok(plain - switched)
        }
    }
}
