//! Multi-indices, template banks and the two feature families.
//!
//! Real features are products of cosines, the Neumann eigenfunctions of the
//! Laplacian on `[0, pi]^n`. Complex features are the exponentials
//! `exp(i a.x)`, which extend holomorphically to the upper tube. Both
//! families have a diagonal tuning matrix with entries `||a||_2^2`, so
//! dividing by `||a||_2` makes them weakly harmonic and the squared norm of
//! the coefficients equals the Dirichlet energy of the hypothesis.

mod bank;
mod basis;
mod index;
mod quadrature;
mod template;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use bank::{FeatureBank, PhaseTable};
pub use basis::{cos_complex, cosine_feature, cosine_sum_expansion, holo_feature, whiten_scale};
pub use index::MultiIndex;
pub use quadrature::{tuning_matrix_quadrature, TuningMatrix, Whitening, MAX_QUADRATURE_DIM};
pub use template::{Mask, Template, TemplateConfig, MAX_DILATION};

/// Feature family of a bank; also fixes the scalar field of a classifier.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum FeatureKind {
    /// Real cosine eigenfunctions (weakly-harmonic classifiers).
    Cosine,
    /// Complex exponentials (holomorphic classifiers).
    Holomorphic,
}

impl std::fmt::Display for FeatureKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            FeatureKind::Cosine => "Cosine",
            FeatureKind::Holomorphic => "Holomorphic",
        })
    }
}

impl std::str::FromStr for FeatureKind {
    type Err = FeatureError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "Cosine" => Ok(FeatureKind::Cosine),
            "Holomorphic" => Ok(FeatureKind::Holomorphic),
            other => Err(FeatureError::Config(format!("unknown feature kind {other:?}"))),
        }
    }
}

#[derive(Debug, Error)]
pub enum FeatureError {
    #[error("multi-index is identically zero")]
    ZeroIndex,
    #[error("multi-index repeats position {0}")]
    DuplicatePosition(usize),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("bank contains {0} twice")]
    DuplicateIndex(String),
    #[error("template configuration produced no features")]
    EmptyBank,
    #[error("template mask has no active cells")]
    EmptyMask,
    #[error("template mask contains {0:?}; only '0' and '1' are allowed")]
    BadMaskChar(char),
    #[error("quadrature over {dim} dimensions refused (max {max})")]
    QuadratureTooLarge { dim: usize, max: usize },
    #[error("template config: {0}")]
    Config(String),
}
