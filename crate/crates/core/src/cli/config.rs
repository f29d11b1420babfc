use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::CliError;
use crate::attack::AttackConfig;
use crate::optim::TrainConfig;

/// Experiment description loaded from TOML. Relative paths are resolved
/// against the directory of the config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Dataset label used in the emitted tables.
    pub name: String,
    /// Root seed; every stochastic step derives its own stream from it.
    pub seed: u64,
    pub output_dir: PathBuf,
    /// Template file; the built-in family is used when absent.
    #[serde(default)]
    pub templates: Option<PathBuf>,
    pub dataset: DatasetConfig,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default)]
    pub attack: AttackConfig,
    #[serde(default)]
    pub detect: DetectConfig,
    #[serde(default)]
    pub bias: BiasConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetConfig {
    pub train_images: PathBuf,
    pub train_labels: PathBuf,
    pub test_images: PathBuf,
    pub test_labels: PathBuf,
    #[serde(default = "default_shape")]
    pub shape: [usize; 2],
    #[serde(default = "default_train_subset")]
    pub train_subset: usize,
    #[serde(default = "default_test_subset")]
    pub test_subset: usize,
    /// Use every sample instead of the seeded subsets.
    #[serde(default)]
    pub full_scale: bool,
    #[serde(default = "default_num_labels")]
    pub num_labels: usize,
}

fn default_shape() -> [usize; 2] {
    [28, 28]
}
fn default_train_subset() -> usize {
    10_000
}
fn default_test_subset() -> usize {
    2_000
}
fn default_num_labels() -> usize {
    10
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DetectConfig {
    /// Independent runs averaged per table row.
    pub repeats: usize,
    /// Benign test samples drawn per run.
    pub samples_per_run: usize,
    /// Also sweep the targeted attacks, one row per target label.
    pub targeted: bool,
}

impl Default for DetectConfig {
    fn default() -> Self {
        Self { repeats: 10, samples_per_run: 50, targeted: true }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BiasConfig {
    pub trials: usize,
    pub confidence: f64,
    /// Caps each training pool (natural, adversarial) per trial; the union
    /// is built from the capped pools.
    pub pool_cap: Option<usize>,
    /// Caps each test pool.
    pub test_cap: Option<usize>,
}

impl Default for BiasConfig {
    fn default() -> Self {
        Self { trials: 20, confidence: 0.01, pool_cap: None, test_cap: None }
    }
}

impl ExperimentConfig {
    pub fn parse(text: &str, base: &Path) -> Result<Self, CliError> {
        let mut cfg: ExperimentConfig = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        cfg.resolve(base);
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::parse(&text, base)
    }

    fn resolve(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.output_dir);
        if let Some(t) = &mut self.templates {
            fix(t);
        }
        let d = &mut self.dataset;
        for p in [&mut d.train_images, &mut d.train_labels, &mut d.test_images, &mut d.test_labels] {
            fix(p);
        }
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let d = &self.dataset;
        let mut files = vec![&d.train_images, &d.train_labels, &d.test_images, &d.test_labels];
        if let Some(t) = &self.templates {
            files.push(t);
        }
        for f in files {
            if !f.is_file() {
                return Err(CliError::Config(format!("missing file {}", f.display())));
            }
        }
        if d.shape[0] == 0 || d.shape[1] == 0 || d.num_labels < 2 {
            return Err(CliError::Config("dataset shape and label count must be positive".into()));
        }
        if !d.full_scale && (d.train_subset == 0 || d.test_subset == 0) {
            return Err(CliError::Config("subset sizes must be positive".into()));
        }
        self.train.validate().map_err(|e| CliError::Config(e.to_string()))?;
        self.attack.validate().map_err(|e| CliError::Config(e.to_string()))?;
        if self.detect.repeats == 0 || self.detect.samples_per_run == 0 {
            return Err(CliError::Config("detect.repeats and detect.samples_per_run must be positive".into()));
        }
        if self.bias.trials < 2 || !(self.bias.confidence > 0.0 && self.bias.confidence < 1.0) {
            return Err(CliError::Config("bias.trials must be >= 2 and bias.confidence in (0, 1)".into()));
        }
        Ok(())
    }

    /// SHA-256 of the canonical serialization.
    pub fn hash(&self) -> String {
        let canon = toml::to_string(self).expect("config serializes");
        hex::encode(Sha256::digest(canon.as_bytes()))
    }
}
