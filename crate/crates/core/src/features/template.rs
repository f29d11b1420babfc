//! Binary template masks and the bank enumerator.
//!
//! A template is a small 0/1 grid. Each active cell of a placed (and
//! possibly dilated) template contributes frequency 1 at its pixel, so every
//! enumerated multi-index satisfies `||a||_inf <= 1`. The enumerator closes
//! the mask family under removal of single cells so that whenever a feature
//! is present, all overlapping features of lower degree are present too.

use std::collections::{BTreeSet, HashSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{FeatureError, FeatureKind, MultiIndex};

/// Largest dilation accepted in a template config.
pub const MAX_DILATION: usize = 5;

/// A set of active cells, normalized so the smallest row and column are 0.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Mask {
    cells: BTreeSet<(usize, usize)>,
}

impl Mask {
    pub fn from_cells<I: IntoIterator<Item = (usize, usize)>>(cells: I) -> Result<Self, FeatureError> {
        let cells: BTreeSet<_> = cells.into_iter().collect();
        if cells.is_empty() {
            return Err(FeatureError::EmptyMask);
        }
        let r0 = cells.iter().map(|c| c.0).min().unwrap_or(0);
        let c0 = cells.iter().map(|c| c.1).min().unwrap_or(0);
        Ok(Self { cells: cells.into_iter().map(|(r, c)| (r - r0, c - c0)).collect() })
    }

    /// Parses rows of `0`/`1` characters.
    pub fn from_rows<S: AsRef<str>>(rows: &[S]) -> Result<Self, FeatureError> {
        let mut cells = Vec::new();
        for (r, row) in rows.iter().enumerate() {
            for (c, ch) in row.as_ref().chars().enumerate() {
                match ch {
                    '1' => cells.push((r, c)),
                    '0' => {}
                    other => return Err(FeatureError::BadMaskChar(other)),
                }
            }
        }
        Self::from_cells(cells)
    }

    pub fn cells(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.cells.iter().copied()
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    /// `(rows, cols)` of the bounding box at the given dilation.
    pub fn extent(&self, dilation: usize) -> (usize, usize) {
        let rows = self.cells.iter().map(|c| c.0).max().unwrap_or(0);
        let cols = self.cells.iter().map(|c| c.1).max().unwrap_or(0);
        (rows * dilation + 1, cols * dilation + 1)
    }

    /// All masks obtained by removing exactly one cell.
    pub fn sub_masks(&self) -> Vec<Mask> {
        if self.cells.len() < 2 {
            return Vec::new();
        }
        self.cells
            .iter()
            .filter_map(|drop| Mask::from_cells(self.cells.iter().copied().filter(|c| c != drop)).ok())
            .collect()
    }
}

/// A placed template: mask, dilation and top-left anchor on the image grid.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Template {
    pub mask: Mask,
    pub dilation: usize,
    pub anchor: (usize, usize),
}

impl Template {
    /// Flattened pixel positions covered by the template, or `None` when the
    /// placement leaves a `rows x cols` grid.
    pub fn pixels(&self, rows: usize, cols: usize) -> Option<Vec<usize>> {
        let (h, w) = self.mask.extent(self.dilation);
        if self.anchor.0 + h > rows || self.anchor.1 + w > cols {
            return None;
        }
        Some(
            self.mask
                .cells()
                .map(|(r, c)| (self.anchor.0 + r * self.dilation) * cols + self.anchor.1 + c * self.dilation)
                .collect(),
        )
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
struct MaskSpec {
    rows: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
struct ConfigFile {
    kind: FeatureKind,
    dilations: Vec<usize>,
    #[serde(rename = "mask")]
    masks: Vec<MaskSpec>,
}

/// Template family: base masks, dilations and the feature kind.
///
/// On disk this is TOML:
///
/// ```toml
/// kind = "Holomorphic"
/// dilations = [1, 2, 3, 4, 5]
///
/// [[mask]]
/// rows = ["11"]
///
/// [[mask]]
/// rows = ["1", "1"]
/// ```
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TemplateConfig {
    pub kind: FeatureKind,
    pub dilations: Vec<usize>,
    pub masks: Vec<Mask>,
}

impl TemplateConfig {
    /// Singleton, horizontal pair, vertical pair, diagonal pair and 2x2 block,
    /// each with dilations 1 through 5.
    pub fn default_family(kind: FeatureKind) -> Self {
        let rows: [&[&str]; 5] = [&["1"], &["11"], &["1", "1"], &["10", "01"], &["11", "11"]];
        Self {
            kind,
            dilations: (1..=MAX_DILATION).collect(),
            masks: rows.iter().map(|r| Mask::from_rows(r).expect("built-in mask")).collect(),
        }
    }

    pub fn with_kind(&self, kind: FeatureKind) -> Self {
        Self { kind, ..self.clone() }
    }

    pub fn parse(text: &str) -> Result<Self, FeatureError> {
        let file: ConfigFile = toml::from_str(text).map_err(|e| FeatureError::Config(e.to_string()))?;
        let masks = file.masks.iter().map(|m| Mask::from_rows(&m.rows)).collect::<Result<Vec<_>, _>>()?;
        let cfg = Self { kind: file.kind, dilations: file.dilations, masks };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, FeatureError> {
        let path = path.as_ref();
        let text =
            std::fs::read_to_string(path).map_err(|e| FeatureError::Config(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn to_toml(&self) -> String {
        let file = ConfigFile {
            kind: self.kind,
            dilations: self.dilations.clone(),
            masks: self
                .masks
                .iter()
                .map(|m| {
                    let (h, w) = m.extent(1);
                    let rows = (0..h)
                        .map(|r| (0..w).map(|c| if m.cells.contains(&(r, c)) { '1' } else { '0' }).collect())
                        .collect();
                    MaskSpec { rows }
                })
                .collect(),
        };
        toml::to_string(&file).expect("template config serializes")
    }

    pub fn validate(&self) -> Result<(), FeatureError> {
        if self.masks.is_empty() {
            return Err(FeatureError::Config("no masks".into()));
        }
        if self.dilations.is_empty() {
            return Err(FeatureError::Config("no dilations".into()));
        }
        if let Some(&d) = self.dilations.iter().find(|&&d| d == 0 || d > MAX_DILATION) {
            return Err(FeatureError::Config(format!("dilation {d} outside 1..={MAX_DILATION}")));
        }
        Ok(())
    }

    /// Configured masks followed by every mask reachable by removing cells,
    /// in breadth-first discovery order, without repeats.
    pub fn closed_masks(&self) -> Vec<Mask> {
        let mut seen: HashSet<Mask> = HashSet::new();
        let mut out = Vec::new();
        for m in &self.masks {
            if seen.insert(m.clone()) {
                out.push(m.clone());
            }
        }
        let mut i = 0;
        while i < out.len() {
            for sub in out[i].sub_masks() {
                if seen.insert(sub.clone()) {
                    out.push(sub);
                }
            }
            i += 1;
        }
        out
    }

    /// Every placement of every (closed) mask at every dilation that fits a
    /// `rows x cols` image, as deduplicated multi-indices in
    /// (mask, dilation, row, col) order.
    pub fn enumerate(&self, rows: usize, cols: usize) -> Result<Vec<MultiIndex>, FeatureError> {
        if rows == 0 || cols == 0 {
            return Err(FeatureError::EmptyBank);
        }
        self.validate()?;
        let mut dilations = self.dilations.clone();
        dilations.sort_unstable();
        dilations.dedup();

        let dim = rows * cols;
        let mut seen: HashSet<Vec<usize>> = HashSet::new();
        let mut out = Vec::new();
        for mask in self.closed_masks() {
            for &d in &dilations {
                for r in 0..rows {
                    for c in 0..cols {
                        let t = Template { mask: mask.clone(), dilation: d, anchor: (r, c) };
                        let Some(mut pix) = t.pixels(rows, cols) else { continue };
                        pix.sort_unstable();
                        if seen.insert(pix.clone()) {
                            out.push(MultiIndex::from_support(dim, pix.into_iter().map(|p| (p, 1)).collect())?);
                        }
                    }
                }
            }
        }
        if out.is_empty() {
            return Err(FeatureError::EmptyBank);
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn config(masks: &[&[&str]], dilations: &[usize]) -> TemplateConfig {
        TemplateConfig {
            kind: FeatureKind::Cosine,
            dilations: dilations.to_vec(),
            masks: masks.iter().map(|r| Mask::from_rows(r).unwrap()).collect(),
        }
    }

    #[test]
    fn singletons_on_3x3() {
        let idx = config(&[&["1"]], &[1]).enumerate(3, 3).unwrap();
        assert_eq!(idx.len(), 9);
        for (k, a) in idx.iter().enumerate() {
            assert_eq!(a.support(), &[(k, 1)]);
        }
    }

    #[test]
    fn horizontal_pair_on_2x2_closes_over_singletons() {
        let idx = config(&[&["11"]], &[1]).enumerate(2, 2).unwrap();
        let supports: Vec<Vec<usize>> = idx.iter().map(|a| a.support().iter().map(|s| s.0).collect()).collect();
        assert_eq!(supports, vec![vec![0, 1], vec![2, 3], vec![0], vec![1], vec![2], vec![3]]);
    }

    #[test]
    fn oversized_placements_are_skipped() {
        // Dilation 5 of a pair does not fit a 3-wide image; only dilation 1 and 2 do.
        let idx = config(&[&["11"]], &[1, 2, 5]).enumerate(1, 3).unwrap();
        assert_eq!(idx.len(), 2 + 1 + 3);
    }

    #[test]
    fn too_wide_mask_leaves_only_its_singletons() {
        // "1001" spans four columns; only its closure fits a 1x3 image.
        let cfg = config(&[&["1001"]], &[1]);
        assert_eq!(cfg.enumerate(1, 3).unwrap().len(), 3);
        assert!(matches!(cfg.enumerate(0, 3), Err(FeatureError::EmptyBank)));
    }

    #[test]
    fn bad_dilation_is_rejected() {
        assert!(config(&[&["1"]], &[6]).validate().is_err());
        assert!(config(&[&["1"]], &[0]).validate().is_err());
    }

    #[test]
    fn block_closure_contains_triples_and_antidiagonal() {
        let cfg = config(&[&["11", "11"]], &[1]);
        let closed = cfg.closed_masks();
        // block, 4 triples, 4 distinct pairs (h, v, diag, anti-diag), singleton
        assert_eq!(closed.len(), 1 + 4 + 4 + 1);
    }

    #[test]
    fn default_family_bank_size_on_mnist() {
        let idx = TemplateConfig::default_family(FeatureKind::Holomorphic).enumerate(28, 28).unwrap();
        // 784 singletons, 2 x 3500 axis pairs, 3 x 3135 diagonal-ish pairs/blocks, 4 x 3135 triples
        assert_eq!(idx.len(), 784 + 2 * 3500 + 3 * 3135 + 4 * 3135);
        assert!(idx.iter().all(|a| a.linf() == 1));
    }

    #[test]
    fn toml_round_trip() {
        let cfg = TemplateConfig::default_family(FeatureKind::Holomorphic);
        let back = TemplateConfig::parse(&cfg.to_toml()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn parse_rejects_bad_characters() {
        let text = "kind = \"Cosine\"\ndilations = [1]\n[[mask]]\nrows = [\"1x\"]\n";
        assert!(matches!(TemplateConfig::parse(text), Err(FeatureError::BadMaskChar('x'))));
    }
}
