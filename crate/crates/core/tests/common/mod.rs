//! Helpers shared by the integration tests.
#![allow(dead_code)]

use std::path::Path;
use std::sync::Arc;

use holoclass::model::{Coefficients, Objective, Params};
use holoclass::{Classifier, FeatureBank, FeatureKind, MultiIndex};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn write_idx_images(path: &Path, rows: usize, cols: usize, pixels: &[u8]) {
    let n = pixels.len() / (rows * cols);
    let mut b = Vec::with_capacity(16 + pixels.len());
    for v in [0x803u32, n as u32, rows as u32, cols as u32] {
        b.extend_from_slice(&v.to_be_bytes());
    }
    b.extend_from_slice(pixels);
    std::fs::write(path, b).unwrap();
}

pub fn write_idx_labels(path: &Path, labels: &[u8]) {
    let mut b = Vec::with_capacity(8 + labels.len());
    for v in [0x801u32, labels.len() as u32] {
        b.extend_from_slice(&v.to_be_bytes());
    }
    b.extend_from_slice(labels);
    std::fs::write(path, b).unwrap();
}

/// Writes a tiny 6x6, three-class IDX dataset (a bright row per class plus
/// noise) and a template file into `dir`, and returns a config using them.
/// One short epoch keeps the class magnitudes near 1, so attacked samples
/// do land inside the polyhedron.
pub fn tiny_experiment(dir: &Path, seed: u64) -> String {
    const SIDE: usize = 6;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut make = |n: usize| {
        let mut px = Vec::with_capacity(n * SIDE * SIDE);
        let mut labels = Vec::with_capacity(n);
        for i in 0..n {
            let c = i % 3;
            labels.push(c as u8);
            for r in 0..SIDE {
                for _ in 0..SIDE {
                    let base = if r / 2 == c { 90 } else { 0 };
                    px.push((base + rng.gen_range(0..140)) as u8);
                }
            }
        }
        (px, labels)
    };
    let (train_px, train_lb) = make(90);
    let (test_px, test_lb) = make(30);
    write_idx_images(&dir.join("train-images"), SIDE, SIDE, &train_px);
    write_idx_labels(&dir.join("train-labels"), &train_lb);
    write_idx_images(&dir.join("test-images"), SIDE, SIDE, &test_px);
    write_idx_labels(&dir.join("test-labels"), &test_lb);
    std::fs::write(dir.join("templates.toml"), "kind = \"Holomorphic\"\ndilations = [1]\n[[mask]]\nrows = [\"11\"]\n")
        .unwrap();
    format!(
        r#"name = "tiny"
seed = {seed}
output_dir = "out"
templates = "templates.toml"

[dataset]
train_images = "train-images"
train_labels = "train-labels"
test_images = "test-images"
test_labels = "test-labels"
shape = [6, 6]
train_subset = 60
test_subset = 24
num_labels = 3

[train]
epochs = 1
batch_size = 8

[attack]
steps = 10
step_size = 0.05

[detect]
repeats = 2
samples_per_run = 6

[bias]
trials = 3
"#
    )
}

const DIM: usize = 5;
const LABELS: usize = 3;

pub fn random_bank(kind: FeatureKind, rng: &mut ChaCha8Rng) -> Arc<FeatureBank> {
    let mut indices = Vec::new();
    while indices.len() < 6 {
        let e: Vec<u32> = (0..DIM).map(|_| if rng.gen_bool(0.4) { rng.gen_range(1..3) } else { 0 }).collect();
        if e.iter().any(|&v| v > 0) {
            let m = MultiIndex::new(&e).unwrap();
            if !indices.contains(&m) {
                indices.push(m);
            }
        }
    }
    Arc::new(FeatureBank::new(kind, DIM, indices).unwrap())
}

pub fn random_classifier(kind: FeatureKind, zero_class: bool, rng: &mut ChaCha8Rng) -> Classifier {
    let bank = random_bank(kind, rng);
    let n = LABELS * bank.len();
    let params = match kind {
        FeatureKind::Cosine => Params::Real(Coefficients {
            weights: (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect(),
            bias: (0..LABELS).map(|_| rng.gen_range(-0.5..0.5)).collect(),
        }),
        FeatureKind::Holomorphic => {
            let mut c = || Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
            Params::Complex(Coefficients {
                weights: (0..n).map(|_| c()).collect(),
                bias: (0..LABELS).map(|_| c()).collect(),
            })
        }
    };
    Classifier::from_params(bank, LABELS, params, zero_class).unwrap()
}

pub fn loss(c: &Classifier, x: &[f64], obj: Objective) -> f64 {
    c.input_gradient(x, obj).unwrap().0
}

pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-3)
}

/// Copy of `c` with real component `part` (0 = re, 1 = im) of weight `i`
/// (or bias `i - num_weights`) moved by `d`.
pub fn nudge(c: &Classifier, i: usize, part: usize, d: f64) -> Classifier {
    let mut p = c.params().clone();
    match &mut p {
        Params::Real(q) => {
            let nw = q.weights.len();
            let v = if i < nw { &mut q.weights[i] } else { &mut q.bias[i - nw] };
            *v += d;
        }
        Params::Complex(q) => {
            let nw = q.weights.len();
            let v = if i < nw { &mut q.weights[i] } else { &mut q.bias[i - nw] };
            *v += if part == 0 { Complex64::new(d, 0.0) } else { Complex64::new(0.0, d) };
        }
    }
    Classifier::from_params(c.bank().clone(), c.num_labels(), p, c.has_zero_class()).unwrap()
}

/// Worst relative error between the analytic input and parameter gradients
/// of a random classifier and central differences.
pub fn gradient_error(kind: FeatureKind, zero_class: bool, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let c = random_classifier(kind, zero_class, &mut rng);
    let x: Vec<f64> = (0..DIM).map(|_| rng.gen_range(0.05..0.95)).collect();
    let label = rng.gen_range(0..LABELS);
    let obj = Objective::CrossEntropy { label, include_zero_class: true };
    let h = 1e-6;
    let mut worst: f64 = 0.0;

    let (_, gx) = c.input_gradient(&x, obj).unwrap();
    for i in 0..DIM {
        let (mut a, mut b) = (x.clone(), x.clone());
        a[i] += h;
        b[i] -= h;
        let fd = (loss(&c, &a, obj) - loss(&c, &b, obj)) / (2.0 * h);
        worst = worst.max(rel_err(gx[i], fd));
    }

    let g = c.gradient(&[(&x, label)]).unwrap();
    let parts = if kind == FeatureKind::Holomorphic { 2 } else { 1 };
    for i in 0..g.num_weights() + g.num_bias() {
        let analytic = if i < g.num_weights() { g.weight(i) } else { g.bias(i - g.num_weights()) };
        for part in 0..parts {
            let fd = (loss(&nudge(&c, i, part, h), &x, obj) - loss(&nudge(&c, i, part, -h), &x, obj)) / (2.0 * h);
            let a = if part == 0 { analytic.re } else { analytic.im };
            worst = worst.max(rel_err(a, fd));
        }
    }
    worst
}
