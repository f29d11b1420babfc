//! IDX ingestion, the feature-domain scaling, and the persisted sample-set
//! container.
//!
//! Persisted sets start with a text header terminated by a line `end`:
//!
//! ```text
//! holoclass-set 1
//! dim 784
//! count 1234
//! origin 1
//! meta seed 42
//! end
//! ```
//!
//! followed by `count` little-endian `u32` labels, `count` origin bytes (if
//! `origin 1`) and `count * dim` little-endian `f64` pixels.

use std::collections::BTreeMap;
use std::fmt;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use thiserror::Error;

use crate::seed;

const IMAGE_MAGIC: u32 = 0x0000_0803;
const LABEL_MAGIC: u32 = 0x0000_0801;
const SET_MAGIC: &str = "holoclass-set";
const SET_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("{path}: bad magic {got:#010x}, expected {expected:#010x}")]
    BadMagic { path: String, expected: u32, got: u32 },
    #[error("{path}: truncated, expected {expected} bytes, found {got}")]
    Truncated { path: String, expected: usize, got: usize },
    #[error("image file has {images} entries but label file has {labels}")]
    CountMismatch { images: usize, labels: usize },
    #[error("value {value} at index {index} outside [{lo}, {hi}]")]
    OutOfRange { index: usize, value: f64, lo: f64, hi: f64 },
    #[error("unsupported container version {got} (expected {expected})")]
    Version { expected: u32, got: u32 },
    #[error("malformed container: {0}")]
    Format(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Which pool a sample came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Origin {
    Natural,
    Adversarial,
}

impl fmt::Display for Origin {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Origin::Natural => "natural",
            Origin::Adversarial => "adversarial",
        })
    }
}

/// Images in `[0, 1]^dim`, stored flat and row-major, with integer labels.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct LabeledSet {
    dim: usize,
    pixels: Vec<f64>,
    labels: Vec<usize>,
    origin: Option<Vec<Origin>>,
    /// Free-form key/value provenance carried through persistence.
    pub provenance: BTreeMap<String, String>,
}

impl LabeledSet {
    pub fn new(dim: usize, pixels: Vec<f64>, labels: Vec<usize>) -> Result<Self, DataError> {
        if dim == 0 {
            return Err(DataError::Shape("dimension must be positive".into()));
        }
        if pixels.len() != dim * labels.len() {
            return Err(DataError::Shape(format!(
                "{} pixels for {} samples of dimension {dim}",
                pixels.len(),
                labels.len()
            )));
        }
        check_range(&pixels, 1.0)?;
        Ok(Self { dim, pixels, labels, origin: None, provenance: BTreeMap::new() })
    }

    pub fn empty(dim: usize) -> Self {
        Self { dim, ..Default::default() }
    }

    pub fn with_origin(mut self, origin: Origin) -> Self {
        self.origin = Some(vec![origin; self.labels.len()]);
        self
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn image(&self, i: usize) -> &[f64] {
        &self.pixels[i * self.dim..(i + 1) * self.dim]
    }

    pub fn label(&self, i: usize) -> usize {
        self.labels[i]
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn pixels(&self) -> &[f64] {
        &self.pixels
    }

    pub fn origin(&self, i: usize) -> Option<Origin> {
        self.origin.as_ref().map(|o| o[i])
    }

    pub fn origins(&self) -> Option<&[Origin]> {
        self.origin.as_deref()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&[f64], usize)> + '_ {
        self.pixels.chunks_exact(self.dim).zip(self.labels.iter().copied())
    }

    /// Appends one sample. Origins are tracked only if every sample has one.
    pub fn push(&mut self, image: &[f64], label: usize, origin: Option<Origin>) -> Result<(), DataError> {
        if image.len() != self.dim {
            return Err(DataError::Shape(format!(
                "image of length {} in a set of dimension {}",
                image.len(),
                self.dim
            )));
        }
        check_range(image, 1.0)?;
        match (origin, &mut self.origin) {
            (Some(o), Some(v)) => v.push(o),
            (Some(o), None) if self.labels.is_empty() => self.origin = Some(vec![o]),
            (None, None) => {}
            _ => return Err(DataError::Shape("mixing tagged and untagged samples".into())),
        }
        self.pixels.extend_from_slice(image);
        self.labels.push(label);
        Ok(())
    }

    /// Samples at `indices`, in that order.
    pub fn subset(&self, indices: &[usize]) -> Self {
        let mut pixels = Vec::with_capacity(indices.len() * self.dim);
        for &i in indices {
            pixels.extend_from_slice(self.image(i));
        }
        Self {
            dim: self.dim,
            pixels,
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            origin: self.origin.as_ref().map(|o| indices.iter().map(|&i| o[i]).collect()),
            provenance: self.provenance.clone(),
        }
    }

    /// `count` distinct samples chosen by a seeded shuffle, in shuffled order.
    /// Returns the whole set (shuffled) when `count >= len`.
    pub fn sample(&self, count: usize, seed: u64) -> Self {
        let mut idx: Vec<usize> = (0..self.len()).collect();
        idx.shuffle(&mut seed::rng(seed, &[0x5a5e]));
        idx.truncate(count);
        self.subset(&idx)
    }

    /// Concatenation; both sets must be origin-tagged or both untagged.
    pub fn concat(&self, other: &LabeledSet) -> Result<Self, DataError> {
        if self.dim != other.dim {
            return Err(DataError::Shape(format!("dimensions {} and {}", self.dim, other.dim)));
        }
        let origin = match (&self.origin, &other.origin) {
            (Some(a), Some(b)) => Some(a.iter().chain(b).copied().collect()),
            (None, None) => None,
            _ => return Err(DataError::Shape("mixing tagged and untagged sets".into())),
        };
        let mut provenance = self.provenance.clone();
        provenance.extend(other.provenance.clone());
        Ok(Self {
            dim: self.dim,
            pixels: self.pixels.iter().chain(&other.pixels).copied().collect(),
            labels: self.labels.iter().chain(&other.labels).copied().collect(),
            origin,
            provenance,
        })
    }

    /// Replaces the labels, e.g. with superclass labels for a binary task.
    pub fn relabel(&self, map: impl Fn(usize) -> usize) -> Self {
        let mut s = self.clone();
        s.labels.iter_mut().for_each(|l| *l = map(*l));
        s
    }

    pub fn save(&self, path: &Path) -> Result<(), DataError> {
        persist_set(self, std::fs::File::create(path)?)
    }

    pub fn load(path: &Path) -> Result<Self, DataError> {
        load_set(std::fs::File::open(path)?)
    }

    /// CSV with columns `label,origin,p0,...`; origin is empty when untagged.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), DataError> {
        let mut w = BufWriter::new(out);
        write!(w, "label,origin")?;
        for p in 0..self.dim {
            write!(w, ",p{p}")?;
        }
        writeln!(w)?;
        for (i, (img, label)) in self.iter().enumerate() {
            write!(w, "{label},{}", self.origin(i).map(|o| o.to_string()).unwrap_or_default())?;
            for v in img {
                write!(w, ",{v}")?;
            }
            writeln!(w)?;
        }
        w.flush()?;
        Ok(())
    }
}

fn check_range(values: &[f64], hi: f64) -> Result<(), DataError> {
    match values.iter().position(|v| !(0.0..=hi).contains(v)) {
        Some(index) => Err(DataError::OutOfRange { index, value: values[index], lo: 0.0, hi }),
        None => Ok(()),
    }
}

/// Scales pixels in `[0, 1]` onto `[0, pi]`.
pub fn to_feature_domain(x: &[f64]) -> Result<Vec<f64>, DataError> {
    check_range(x, 1.0)?;
    Ok(x.iter().map(|v| v * std::f64::consts::PI).collect())
}

/// Inverse of [`to_feature_domain`].
pub fn from_feature_domain(theta: &[f64]) -> Result<Vec<f64>, DataError> {
    check_range(theta, std::f64::consts::PI)?;
    Ok(theta.iter().map(|v| v / std::f64::consts::PI).collect())
}

fn read_maybe_gz(path: &Path) -> Result<Vec<u8>, DataError> {
    let raw = std::fs::read(path)?;
    if raw.starts_with(&[0x1f, 0x8b]) {
        let mut out = Vec::new();
        flate2::read::GzDecoder::new(&raw[..]).read_to_end(&mut out)?;
        Ok(out)
    } else {
        Ok(raw)
    }
}

fn be_u32(bytes: &[u8], at: usize, path: &str) -> Result<u32, DataError> {
    bytes.get(at..at + 4).map(|b| u32::from_be_bytes(b.try_into().unwrap())).ok_or_else(|| DataError::Truncated {
        path: path.into(),
        expected: at + 4,
        got: bytes.len(),
    })
}

/// Parses an IDX image file and its label file (either may be gzipped).
/// Pixels are scaled by `1/255`.
pub fn load_idx(images: &Path, labels: &Path) -> Result<LabeledSet, DataError> {
    let (ip, lp) = (images.display().to_string(), labels.display().to_string());
    let img = read_maybe_gz(images)?;
    let lab = read_maybe_gz(labels)?;

    let magic = be_u32(&img, 0, &ip)?;
    if magic != IMAGE_MAGIC {
        return Err(DataError::BadMagic { path: ip, expected: IMAGE_MAGIC, got: magic });
    }
    let count = be_u32(&img, 4, &ip)? as usize;
    let dim = be_u32(&img, 8, &ip)? as usize * be_u32(&img, 12, &ip)? as usize;
    let want = 16 + count * dim;
    if img.len() < want {
        return Err(DataError::Truncated { path: ip, expected: want, got: img.len() });
    }

    let magic = be_u32(&lab, 0, &lp)?;
    if magic != LABEL_MAGIC {
        return Err(DataError::BadMagic { path: lp, expected: LABEL_MAGIC, got: magic });
    }
    let lcount = be_u32(&lab, 4, &lp)? as usize;
    if lab.len() < 8 + lcount {
        return Err(DataError::Truncated { path: lp, expected: 8 + lcount, got: lab.len() });
    }
    if lcount != count {
        return Err(DataError::CountMismatch { images: count, labels: lcount });
    }

    let pixels = img[16..want].iter().map(|&b| b as f64 / 255.0).collect();
    let labels = lab[8..8 + count].iter().map(|&b| b as usize).collect();
    LabeledSet::new(dim, pixels, labels)
}

/// Writes the versioned container described in the module docs.
pub fn persist_set<W: Write>(set: &LabeledSet, out: W) -> Result<(), DataError> {
    let mut w = BufWriter::new(out);
    writeln!(w, "{SET_MAGIC} {SET_VERSION}")?;
    writeln!(w, "dim {}", set.dim)?;
    writeln!(w, "count {}", set.len())?;
    writeln!(w, "origin {}", u8::from(set.origin.is_some()))?;
    for (k, v) in &set.provenance {
        if k.contains(char::is_whitespace) || v.contains('\n') {
            return Err(DataError::Format(format!("provenance entry {k:?} is not single-line")));
        }
        writeln!(w, "meta {k} {v}")?;
    }
    writeln!(w, "end")?;
    for &l in &set.labels {
        let l = u32::try_from(l).map_err(|_| DataError::Format(format!("label {l} too large")))?;
        w.write_all(&l.to_le_bytes())?;
    }
    if let Some(o) = &set.origin {
        for &t in o {
            w.write_all(&[match t {
                Origin::Natural => 0,
                Origin::Adversarial => 1,
            }])?;
        }
    }
    for v in &set.pixels {
        w.write_all(&v.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a container written by [`persist_set`].
pub fn load_set<R: Read>(input: R) -> Result<LabeledSet, DataError> {
    let mut r = BufReader::new(input);
    let mut line = String::new();
    let mut next_line = |r: &mut BufReader<R>| -> Result<String, DataError> {
        line.clear();
        if r.read_line(&mut line)? == 0 {
            return Err(DataError::Format("unexpected end of header".into()));
        }
        Ok(line.trim_end_matches('\n').to_string())
    };
    let first = next_line(&mut r)?;
    let version = first
        .strip_prefix(SET_MAGIC)
        .and_then(|v| v.trim().parse::<u32>().ok())
        .ok_or_else(|| DataError::Format(format!("not a sample set: {first:?}")))?;
    if version != SET_VERSION {
        return Err(DataError::Version { expected: SET_VERSION, got: version });
    }
    let mut field = |r: &mut BufReader<R>, name: &str| -> Result<usize, DataError> {
        let l = next_line(r)?;
        l.strip_prefix(name)
            .and_then(|v| v.trim().parse().ok())
            .ok_or_else(|| DataError::Format(format!("expected `{name} <n>`, got {l:?}")))
    };
    let dim = field(&mut r, "dim")?;
    let count = field(&mut r, "count")?;
    let has_origin = field(&mut r, "origin")?;
    if has_origin > 1 || dim == 0 {
        return Err(DataError::Format("bad header values".into()));
    }
    let mut provenance = BTreeMap::new();
    loop {
        let l = next_line(&mut r)?;
        if l == "end" {
            break;
        }
        let rest = l.strip_prefix("meta ").ok_or_else(|| DataError::Format(format!("unexpected header line {l:?}")))?;
        let (k, v) = rest.split_once(' ').unwrap_or((rest, ""));
        provenance.insert(k.to_string(), v.to_string());
    }

    let mut body = Vec::new();
    r.read_to_end(&mut body)?;
    let want = count * 4 + if has_origin == 1 { count } else { 0 } + count * dim * 8;
    if body.len() != want {
        return Err(DataError::Truncated { path: "<set>".into(), expected: want, got: body.len() });
    }
    let (lab, rest) = body.split_at(count * 4);
    let labels = lab.chunks_exact(4).map(|b| u32::from_le_bytes(b.try_into().unwrap()) as usize).collect();
    let (origin, px) = if has_origin == 1 {
        let (o, px) = rest.split_at(count);
        let tags = o
            .iter()
            .map(|&b| match b {
                0 => Ok(Origin::Natural),
                1 => Ok(Origin::Adversarial),
                _ => Err(DataError::Format(format!("bad origin byte {b}"))),
            })
            .collect::<Result<Vec<_>, _>>()?;
        (Some(tags), px)
    } else {
        (None, rest)
    };
    let pixels = px.chunks_exact(8).map(|b| f64::from_le_bytes(b.try_into().unwrap())).collect();
    let mut set = LabeledSet::new(dim, pixels, labels)?;
    set.origin = origin;
    set.provenance = provenance;
    Ok(set)
}
