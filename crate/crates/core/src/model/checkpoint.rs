//! Plain-text checkpoints.
//!
//! ```text
//! Holomorphic 10 29729 784 1
//! 1.2345678901234567e-3 -4.0000000000000000e0
//! ...
//! ```
//!
//! The header is `kind num_labels K n has_zero_class`; then one line per
//! coefficient, weights row-major followed by the biases. Complex
//! coefficients take two columns. Values are printed with 17 significant
//! digits, which round-trips every `f64`.

use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;
use std::sync::Arc;

use num_complex::Complex64;

use super::{Classifier, Coefficients, ModelError, Params};
use crate::features::{FeatureBank, FeatureKind};

fn bad(msg: impl Into<String>) -> ModelError {
    ModelError::Checkpoint(msg.into())
}

impl Classifier {
    pub fn write_checkpoint<W: Write>(&self, out: W) -> Result<(), ModelError> {
        let mut w = BufWriter::new(out);
        writeln!(
            w,
            "{} {} {} {} {}",
            self.kind(),
            self.num_labels,
            self.bank.len(),
            self.bank.dim(),
            u8::from(self.has_zero_class)
        )?;
        match &self.params {
            Params::Real(p) => {
                for v in p.weights.iter().chain(&p.bias) {
                    writeln!(w, "{v:.16e}")?;
                }
            }
            Params::Complex(p) => {
                for v in p.weights.iter().chain(&p.bias) {
                    writeln!(w, "{:.16e} {:.16e}", v.re, v.im)?;
                }
            }
        }
        w.flush()?;
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<(), ModelError> {
        self.write_checkpoint(std::fs::File::create(path)?)
    }

    /// Reads a checkpoint against `bank`, which must match the header.
    pub fn read_checkpoint<R: Read>(input: R, bank: Arc<FeatureBank>) -> Result<Self, ModelError> {
        let mut lines = BufReader::new(input).lines();
        let header = lines.next().ok_or_else(|| bad("empty file"))??;
        let fields: Vec<&str> = header.split_whitespace().collect();
        if fields.len() != 5 {
            return Err(bad(format!("header has {} fields, expected 5", fields.len())));
        }
        let kind: FeatureKind = fields[0].parse().map_err(|_| bad(format!("unknown kind {:?}", fields[0])))?;
        let num: Vec<usize> = fields[1..]
            .iter()
            .map(|f| f.parse::<usize>().map_err(|_| bad(format!("bad header field {f:?}"))))
            .collect::<Result<_, _>>()?;
        let (num_labels, k, n, zero) = (num[0], num[1], num[2], num[3]);
        if kind != bank.kind() {
            return Err(ModelError::KindMismatch { expected: bank.kind(), got: kind });
        }
        if k != bank.len() || n != bank.dim() {
            return Err(bad(format!("checkpoint is for K={k}, n={n}; bank has K={}, n={}", bank.len(), bank.dim())));
        }
        if zero > 1 {
            return Err(bad("has_zero_class must be 0 or 1"));
        }
        let total = num_labels * (k + 1);
        let width = match kind {
            FeatureKind::Cosine => 1,
            FeatureKind::Holomorphic => 2,
        };
        let mut values = Vec::with_capacity(total * width);
        for (i, line) in lines.enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let cols: Vec<&str> = line.split_whitespace().collect();
            if cols.len() != width {
                return Err(bad(format!("line {}: expected {width} columns", i + 2)));
            }
            for c in cols {
                values.push(c.parse::<f64>().map_err(|_| bad(format!("line {}: bad number {c:?}", i + 2)))?);
            }
        }
        if values.len() != total * width {
            return Err(bad(format!("expected {total} coefficients, found {}", values.len() / width)));
        }
        let split = num_labels * k;
        let params = match kind {
            FeatureKind::Cosine => {
                let bias = values.split_off(split);
                Params::Real(Coefficients { weights: values, bias })
            }
            FeatureKind::Holomorphic => {
                let mut c: Vec<Complex64> = values.chunks_exact(2).map(|p| Complex64::new(p[0], p[1])).collect();
                let bias = c.split_off(split);
                Params::Complex(Coefficients { weights: c, bias })
            }
        };
        Classifier::from_params(bank, num_labels, params, zero == 1)
    }

    pub fn load(path: &Path, bank: Arc<FeatureBank>) -> Result<Self, ModelError> {
        Self::read_checkpoint(std::fs::File::open(path)?, bank)
    }
}
