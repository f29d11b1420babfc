use std::fmt;

use super::FeatureError;

/// Sparse nonzero multi-index: a frequency per pixel of a flattened image.
///
/// Only the nonzero entries are stored, sorted by position. The all-zero
/// index is not representable; the constant feature belongs to the bias.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct MultiIndex {
    dim: usize,
    support: Vec<(usize, u32)>,
}

impl MultiIndex {
    /// Builds an index from dense entries.
    pub fn new(entries: &[u32]) -> Result<Self, FeatureError> {
        let support = entries.iter().enumerate().filter(|(_, &a)| a != 0).map(|(p, &a)| (p, a)).collect();
        Self::from_support(entries.len(), support)
    }

    /// Builds an index from `(position, frequency)` pairs. Zero frequencies
    /// are dropped; repeated positions are rejected.
    pub fn from_support(dim: usize, mut support: Vec<(usize, u32)>) -> Result<Self, FeatureError> {
        support.retain(|&(_, a)| a != 0);
        if support.is_empty() {
            return Err(FeatureError::ZeroIndex);
        }
        support.sort_unstable();
        for w in support.windows(2) {
            if w[0].0 == w[1].0 {
                return Err(FeatureError::DuplicatePosition(w[0].0));
            }
        }
        if let Some(&(p, _)) = support.last() {
            if p >= dim {
                return Err(FeatureError::DimensionMismatch { expected: dim, got: p + 1 });
            }
        }
        Ok(Self { dim, support })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Nonzero `(position, frequency)` pairs in position order.
    pub fn support(&self) -> &[(usize, u32)] {
        &self.support
    }

    /// Dense entries of length [`dim`](Self::dim).
    pub fn entries(&self) -> Vec<u32> {
        let mut out = vec![0; self.dim];
        for &(p, a) in &self.support {
            out[p] = a;
        }
        out
    }

    pub fn l1(&self) -> u64 {
        self.support.iter().map(|&(_, a)| a as u64).sum()
    }

    pub fn l2(&self) -> f64 {
        (self.support.iter().map(|&(_, a)| (a as f64) * (a as f64)).sum::<f64>()).sqrt()
    }

    pub fn linf(&self) -> u32 {
        self.support.iter().map(|&(_, a)| a).max().unwrap_or(0)
    }

    /// The index with the entry at `position` zeroed, or `None` when that
    /// leaves nothing (or `position` is not in the support).
    pub fn without(&self, position: usize) -> Option<MultiIndex> {
        if !self.support.iter().any(|&(p, _)| p == position) || self.support.len() == 1 {
            return None;
        }
        Some(MultiIndex {
            dim: self.dim,
            support: self.support.iter().copied().filter(|&(p, _)| p != position).collect(),
        })
    }
}

impl fmt::Display for MultiIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{{")?;
        for (i, (p, a)) in self.support.iter().enumerate() {
            if i > 0 {
                write!(f, ", ")?;
            }
            write!(f, "{p}:{a}")?;
        }
        write!(f, "}}")
    }
}
