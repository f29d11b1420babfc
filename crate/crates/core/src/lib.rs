//! Weakly-harmonic and holomorphic image classifiers.
//!
//! The crate is organised bottom-up:
//!
//! * [`features`]: multi-indices, template banks, cosine eigenfunction and
//!   complex exponential features with analytic whitening.
//! * [`model`]: linear classifiers over a bank, magnitude softmax, the
//!   attached zero-class, analytic gradients and Dirichlet energy.
//! * [`optim`]: SGD with momentum where weight decay is the Dirichlet
//!   energy penalty.
//! * [`attack`]: l-infinity PGD with reflective projection.
//! * [`detect`]: analytic-polyhedron membership as an adversarial detector.
//! * [`stats`]: Student-t machinery and the continuity-bias test.
//! * [`data`]: IDX ingestion and the persisted sample-set container.
//! * [`cli`]: experiment orchestration behind the `holoclass` binary.

pub mod attack;
pub mod cli;
pub mod data;
pub mod detect;
pub mod features;
pub mod model;
pub mod optim;
pub mod seed;
pub mod stats;

pub use attack::{pgd, reflect_project, AttackConfig};
pub use data::{LabeledSet, Origin};
pub use detect::{DetectionReport, Partition};
pub use features::{FeatureBank, FeatureKind, MultiIndex, TemplateConfig};
pub use model::{Classifier, Logits};
pub use optim::{train, TrainConfig};
pub use stats::{BiasTestReport, Decision};
