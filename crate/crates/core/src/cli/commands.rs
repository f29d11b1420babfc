use std::path::{Path, PathBuf};
use std::sync::Arc;

use rayon::prelude::*;

use super::config::ExperimentConfig;
use super::report::{num, Table};
use super::CliError;
use crate::attack::AttackConfig;
use crate::data::{load_idx, LabeledSet, Origin};
use crate::detect::{attack_all, build_partition, detect_run, in_polyhedron, DetectionReport, Partition};
use crate::features::{FeatureBank, FeatureKind, TemplateConfig};
use crate::model::Classifier;
use crate::optim::{train, TrainConfig};
use crate::seed;
use crate::stats::{continuity_bias_trial, run_bias_test, t_inverse_cdf, BiasTestReport, Task};

// Seed tags under the root seed.
const TAG_TRAIN_SUBSET: u64 = 1;
const TAG_TEST_SUBSET: u64 = 2;
const TAG_MODEL: u64 = 3;
const TAG_PARTITION: u64 = 4;
const TAG_DETECT: u64 = 5;
const TAG_BIAS: u64 = 6;
const TAG_ATTACK_CMD: u64 = 7;

/// Loaded configuration plus derived state shared by the commands.
pub struct Context {
    pub cfg: ExperimentConfig,
    pub hash: String,
}

impl Context {
    pub fn new(cfg: ExperimentConfig) -> Result<Self, CliError> {
        cfg.validate()?;
        std::fs::create_dir_all(&cfg.output_dir)
            .map_err(|e| CliError::Runtime(format!("{}: {e}", cfg.output_dir.display())))?;
        let hash = cfg.hash();
        Ok(Self { cfg, hash })
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        Self::new(ExperimentConfig::load(path)?)
    }

    pub fn out(&self, name: &str) -> PathBuf {
        self.cfg.output_dir.join(name)
    }

    fn seed(&self, tags: &[u64]) -> u64 {
        seed::derive(self.cfg.seed, tags)
    }

    fn finish(&self, mut t: Table, path: &Path) -> Result<(), CliError> {
        t.note("dataset", &self.cfg.name);
        t.note("config_sha256", &self.hash);
        t.note("seed", self.cfg.seed);
        t.note("version", env!("CARGO_PKG_VERSION"));
        t.write(path)
    }

    /// Train and test sets after the seeded desk-scale subsetting.
    pub fn datasets(&self) -> Result<(LabeledSet, LabeledSet), CliError> {
        let d = &self.cfg.dataset;
        let train = load_idx(&d.train_images, &d.train_labels)?;
        let test = load_idx(&d.test_images, &d.test_labels)?;
        if train.dim() != d.shape[0] * d.shape[1] {
            return Err(CliError::Config(format!(
                "images have {} pixels, shape {:?} expects {}",
                train.dim(),
                d.shape,
                d.shape[0] * d.shape[1]
            )));
        }
        if let Some(&l) = train.labels().iter().chain(test.labels()).find(|&&l| l >= d.num_labels) {
            return Err(CliError::Config(format!("label {l} outside 0..{}", d.num_labels)));
        }
        if d.full_scale {
            return Ok((train, test));
        }
        Ok((
            train.sample(d.train_subset, self.seed(&[TAG_TRAIN_SUBSET])),
            test.sample(d.test_subset, self.seed(&[TAG_TEST_SUBSET])),
        ))
    }

    pub fn bank(&self, kind: FeatureKind) -> Result<Arc<FeatureBank>, CliError> {
        let templates = match &self.cfg.templates {
            Some(p) => TemplateConfig::load(p).map_err(|e| CliError::Config(e.to_string()))?.with_kind(kind),
            None => TemplateConfig::default_family(kind),
        };
        let [rows, cols] = self.cfg.dataset.shape;
        Ok(Arc::new(
            FeatureBank::from_templates((rows, cols), &templates).map_err(|e| CliError::Config(e.to_string()))?,
        ))
    }

    fn train_cfg(&self, tag: u64) -> TrainConfig {
        TrainConfig { seed: self.seed(&[TAG_MODEL, tag, self.cfg.train.seed]), ..self.cfg.train.clone() }
    }

    /// Trains a classifier of `kind` on `data`; holomorphic ones get the
    /// zero-class attached before training.
    pub fn fit(
        &self,
        kind: FeatureKind,
        bank: &Arc<FeatureBank>,
        data: &LabeledSet,
        tag: u64,
    ) -> Result<(Classifier, crate::optim::TrainTrace), CliError> {
        let mut c =
            Classifier::init_uniform(bank.clone(), self.cfg.dataset.num_labels, self.seed(&[TAG_MODEL, tag, 0x1417]));
        if kind == FeatureKind::Holomorphic {
            c = c.attach_zero_class()?;
        }
        Ok(train(c, data, &self.train_cfg(tag))?)
    }

    fn checkpoint_path(kind: FeatureKind) -> &'static str {
        match kind {
            FeatureKind::Holomorphic => "h.ckpt",
            FeatureKind::Cosine => "cosine.ckpt",
        }
    }

    pub fn load_model(&self, path: Option<&Path>) -> Result<Classifier, CliError> {
        let path = path.map(Path::to_path_buf).unwrap_or_else(|| self.out("h.ckpt"));
        let header =
            std::fs::read_to_string(&path).map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))?;
        let kind: FeatureKind = header
            .split_whitespace()
            .next()
            .and_then(|k| k.parse().ok())
            .ok_or_else(|| CliError::Runtime(format!("{}: not a checkpoint", path.display())))?;
        Ok(Classifier::read_checkpoint(header.as_bytes(), self.bank(kind)?)?)
    }
}

pub fn accuracy(c: &Classifier, set: &LabeledSet) -> Result<f64, CliError> {
    if set.is_empty() {
        return Ok(f64::NAN);
    }
    let correct: usize = (0..set.len())
        .into_par_iter()
        .map(|i| Ok(usize::from(c.predict(set.image(i))? == set.label(i))))
        .sum::<Result<usize, crate::model::ModelError>>()?;
    Ok(correct as f64 / set.len() as f64)
}

/// Trains `h` (or a cosine classifier) and writes its checkpoint, loss trace
/// and a summary with train/test accuracy.
pub fn cmd_train(ctx: &Context, kind: FeatureKind) -> Result<Classifier, CliError> {
    let (train_set, test_set) = ctx.datasets()?;
    let bank = ctx.bank(kind)?;
    let (c, trace) = ctx.fit(kind, &bank, &train_set, 0)?;
    c.save(&ctx.out(Context::checkpoint_path(kind)))?;
    let trace_path = ctx.out(&format!("{}_trace.csv", Context::checkpoint_path(kind).trim_end_matches(".ckpt")));
    let mut buf = Vec::new();
    trace.write_csv(&mut buf).map_err(|e| CliError::Runtime(e.to_string()))?;
    std::fs::write(&trace_path, buf).map_err(|e| CliError::Runtime(e.to_string()))?;

    let mut t = Table::new(&[
        "kind",
        "features",
        "train_samples",
        "test_samples",
        "train_accuracy",
        "test_accuracy",
        "final_epoch_loss",
        "energy",
    ]);
    t.row(vec![
        kind.to_string(),
        bank.len().to_string(),
        train_set.len().to_string(),
        test_set.len().to_string(),
        num(accuracy(&c, &train_set)?),
        num(accuracy(&c, &test_set)?),
        num(*trace.epoch_loss.last().expect("at least one epoch")),
        num(c.dirichlet_energy()),
    ]);
    ctx.finish(t, &ctx.out("train_summary.csv"))?;
    Ok(c)
}

/// Attacks the test subset with `attack` and writes the adversarial set
/// plus a summary of clean/adversarial accuracy and polyhedron hits.
pub fn cmd_attack(ctx: &Context, model: Option<&Path>, attack: &AttackConfig) -> Result<(), CliError> {
    attack.validate()?;
    let c = ctx.load_model(model)?;
    let (_, test_set) = ctx.datasets()?;
    let cfg = AttackConfig { seed: ctx.seed(&[TAG_ATTACK_CMD, attack.seed]), ..attack.clone() };
    let advs = attack_all(&c, &test_set, &cfg)?;
    let mut adv_set = LabeledSet::empty(test_set.dim());
    for (i, a) in &advs {
        adv_set.push(a, test_set.label(*i), Some(Origin::Adversarial))?;
    }
    adv_set.provenance.insert("config_sha256".into(), ctx.hash.clone());
    adv_set.save(&ctx.out("attack.set"))?;

    let clean = test_set.subset(&advs.iter().map(|(i, _)| *i).collect::<Vec<_>>());
    let inside = if c.kind() == FeatureKind::Holomorphic && c.has_zero_class() {
        let hits: usize =
            advs.par_iter().map(|(_, a)| in_polyhedron(&c, a).map(usize::from)).sum::<Result<usize, _>>()?;
        num(hits as f64 / advs.len().max(1) as f64)
    } else {
        "n/a".into()
    };
    let mut t = Table::new(&["samples", "clean_accuracy", "adversarial_accuracy", "in_polyhedron_rate"]);
    t.row(vec![advs.len().to_string(), num(accuracy(&c, &clean)?), num(accuracy(&c, &adv_set)?), inside]);
    t.note("attack", format!("{cfg:?}").replace(',', ";"));
    ctx.finish(t, &ctx.out("attack_summary.csv"))
}

/// Run-averaged detection scores of one attack setting.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeanScores {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

/// One detection-table row: the attack target (`None` = untargeted) and the scores
/// against an attacker aware and unaware of the zero-class.
#[derive(Debug, Clone, PartialEq)]
pub struct DetectRow {
    pub target: Option<usize>,
    pub aware: MeanScores,
    pub unaware: MeanScores,
}

/// Detection table (`table1.csv`): untargeted and per-target detection, attacker aware and unaware
/// of the zero-class, each averaged over `detect.repeats` runs.
pub fn cmd_detect(ctx: &Context, model: Option<&Path>) -> Result<Vec<DetectRow>, CliError> {
    let c = ctx.load_model(model)?;
    let (_, test_set) = ctx.datasets()?;
    let dc = &ctx.cfg.detect;
    let mut targets = vec![None];
    if dc.targeted {
        targets.extend((0..ctx.cfg.dataset.num_labels).map(Some));
    }
    let mut header = vec!["attack".to_string()];
    for side in ["aware", "unaware"] {
        for m in ["precision", "recall", "f1", "tp", "fp", "fn", "tn", "degenerate_runs"] {
            header.push(format!("{side}_{m}"));
        }
    }
    let mut t = Table::new(&header.iter().map(String::as_str).collect::<Vec<_>>());
    let mut rows = Vec::with_capacity(targets.len());
    for (row, target) in targets.iter().enumerate() {
        let mut cells = vec![target.map_or("untargeted".to_string(), |l| format!("target_{l}"))];
        let mut scores = Vec::with_capacity(2);
        for (side, aware) in [true, false].into_iter().enumerate() {
            let mut reports = Vec::with_capacity(dc.repeats);
            for run in 0..dc.repeats {
                let benign = test_set.sample(dc.samples_per_run, ctx.seed(&[TAG_DETECT, run as u64]));
                let cfg = AttackConfig {
                    target: *target,
                    aware_extra: aware,
                    seed: ctx.seed(&[TAG_DETECT, run as u64, row as u64, side as u64, ctx.cfg.attack.seed]),
                    ..ctx.cfg.attack.clone()
                };
                reports.push(detect_run(&c, &benign, &cfg)?);
            }
            cells.extend(average_cells(&reports));
            scores.push(mean_scores(&reports));
        }
        t.row(cells);
        rows.push(DetectRow { target: *target, aware: scores[0], unaware: scores[1] });
    }
    t.note("repeats", dc.repeats);
    t.note("samples_per_run", dc.samples_per_run);
    t.note("metrics", "mean of per-run precision/recall/f1; counts pooled over runs");
    ctx.finish(t, &ctx.out("table1.csv"))?;
    Ok(rows)
}

fn mean_scores(reports: &[DetectionReport]) -> MeanScores {
    let n = reports.len() as f64;
    let mean = |f: fn(&DetectionReport) -> f64| reports.iter().map(f).sum::<f64>() / n;
    MeanScores { precision: mean(|r| r.precision), recall: mean(|r| r.recall), f1: mean(|r| r.f1) }
}

fn average_cells(reports: &[DetectionReport]) -> Vec<String> {
    let m = mean_scores(reports);
    let sum = |f: fn(&DetectionReport) -> usize| reports.iter().map(f).sum::<usize>().to_string();
    vec![
        num(m.precision),
        num(m.recall),
        num(m.f1),
        sum(|r| r.tp),
        sum(|r| r.fp),
        sum(|r| r.fn_),
        sum(|r| r.tn),
        reports.iter().filter(|r| r.degenerate).count().to_string(),
    ]
}

const PARTITION_FILES: [&str; 4] = ["train_nat.set", "train_adv.set", "test_nat.set", "test_adv.set"];

/// Builds the natural/adversarial partitions of the train and test subsets
/// with the configured attack (untargeted unless a target is configured).
/// The smaller test pool goes first so an empty adversarial set fails fast;
/// nothing is written unless both pools succeed.
pub fn cmd_partition(ctx: &Context, model: Option<&Path>) -> Result<(Partition, Partition), CliError> {
    let c = ctx.load_model(model)?;
    let (train_set, test_set) = ctx.datasets()?;
    let build = |tag: u64, name: &str, set: &LabeledSet| -> Result<Partition, CliError> {
        let cfg = AttackConfig { seed: ctx.seed(&[TAG_PARTITION, tag, ctx.cfg.attack.seed]), ..ctx.cfg.attack.clone() };
        let mut p = build_partition(&c, set, &cfg).map_err(|e| CliError::Runtime(format!("{name} pool: {e}")))?;
        for s in [&mut p.s_nat, &mut p.s_adv] {
            s.provenance.insert("config_sha256".into(), ctx.hash.clone());
            s.provenance.insert("pool".into(), name.into());
        }
        Ok(p)
    };
    let test = build(1, "test", &test_set)?;
    let train = build(0, "train", &train_set)?;

    let dir = ctx.out("partition");
    std::fs::create_dir_all(&dir).map_err(|e| CliError::Runtime(e.to_string()))?;
    let mut t = Table::new(&["pool", "natural", "adversarial_inside", "inside_rate"]);
    for (name, p) in [("train", &train), ("test", &test)] {
        p.s_nat.save(&dir.join(format!("{name}_nat.set")))?;
        p.s_adv.save(&dir.join(format!("{name}_adv.set")))?;
        t.row(vec![
            name.into(),
            p.s_nat.len().to_string(),
            p.s_adv.len().to_string(),
            num(p.s_adv.len() as f64 / p.s_nat.len() as f64),
        ]);
    }
    ctx.finish(t, &ctx.out("partition_summary.csv"))?;
    Ok((train, test))
}

pub fn load_partitions(ctx: &Context) -> Result<(Partition, Partition), CliError> {
    let dir = ctx.out("partition");
    let mut sets = Vec::new();
    for f in PARTITION_FILES {
        let p = dir.join(f);
        if !p.is_file() {
            return Err(CliError::Runtime(format!("{} missing; run `partition` first", p.display())));
        }
        sets.push(LabeledSet::load(&p)?);
    }
    let test_adv = sets.pop().unwrap();
    let test_nat = sets.pop().unwrap();
    let train_adv = sets.pop().unwrap();
    let train_nat = sets.pop().unwrap();
    Ok((Partition::new(train_nat, train_adv)?, Partition::new(test_nat, test_adv)?))
}

/// Infeasibility table (`table2.csv`): accuracy of `h`, `f` (trained on the adversarial pool) and `g`
/// (trained on the union) on the held-out adversarial and benign pools.
pub fn cmd_infeasibility(ctx: &Context, model: Option<&Path>) -> Result<[[f64; 2]; 3], CliError> {
    let h = ctx.load_model(model)?;
    let (train_part, test_part) = load_partitions(ctx)?;
    let bank = h.bank().clone();
    let (f, _) = ctx.fit(h.kind(), &bank, &train_part.s_adv, 1)?;
    let (g, _) = ctx.fit(h.kind(), &bank, &train_part.s_union, 2)?;
    f.save(&ctx.out("f.ckpt"))?;
    g.save(&ctx.out("g.ckpt"))?;
    let mut grid = [[0.0; 2]; 3];
    let mut t = Table::new(&["classifier", "adversarial", "benign"]);
    for (row, (name, c)) in [("h", &h), ("f", &f), ("g", &g)].into_iter().enumerate() {
        grid[row] = [accuracy(c, &test_part.s_adv)?, accuracy(c, &test_part.s_nat)?];
        t.row(vec![name.into(), num(grid[row][0]), num(grid[row][1])]);
    }
    t.note("train_natural", train_part.s_nat.len());
    t.note("train_adversarial", train_part.s_adv.len());
    t.note("test_natural", test_part.s_nat.len());
    t.note("test_adversarial", test_part.s_adv.len());
    ctx.finish(t, &ctx.out("table2.csv"))?;
    Ok(grid)
}

fn cap(set: &LabeledSet, cap: Option<usize>, seed: u64) -> LabeledSet {
    match cap {
        Some(n) if n < set.len() => set.sample(n, seed),
        _ => set.clone(),
    }
}

/// Bias table (`table3.csv`): continuity-bias tests on the discontinuous (binary
/// classification) and continuous (regression) task families.
pub fn cmd_bias_test(ctx: &Context) -> Result<[BiasTestReport; 2], CliError> {
    let (train_part, test_part) = load_partitions(ctx)?;
    let bc = &ctx.cfg.bias;
    let bank = ctx.bank(FeatureKind::Cosine)?;
    let train_part = Partition::new(
        cap(&train_part.s_nat, bc.pool_cap, ctx.seed(&[TAG_BIAS, 1])),
        cap(&train_part.s_adv, bc.pool_cap, ctx.seed(&[TAG_BIAS, 2])),
    )?;
    let test_part = Partition::new(
        cap(&test_part.s_nat, bc.test_cap, ctx.seed(&[TAG_BIAS, 3])),
        cap(&test_part.s_adv, bc.test_cap, ctx.seed(&[TAG_BIAS, 4])),
    )?;
    let num_labels = ctx.cfg.dataset.num_labels;
    let train_cfg = ctx.cfg.train.clone();
    let family = |family: u64| {
        let bank = &bank;
        let (train_part, test_part, train_cfg) = (&train_part, &test_part, &train_cfg);
        move |i: usize| -> Result<f64, CliError> {
            let trial_seed = ctx.seed(&[TAG_BIAS, 10 + family, i as u64]);
            let task = if family == 0 {
                Task::Classification { num_labels, split_seed: trial_seed }
            } else {
                Task::Regression { target_seed: trial_seed }
            };
            Ok(continuity_bias_trial(bank, train_part, test_part, task, train_cfg, trial_seed)?)
        }
    };
    let discontinuous = run_bias_test(bc.trials, bc.confidence, family(0))?;
    let continuous = run_bias_test(bc.trials, bc.confidence, family(1))?;

    let mut t = Table::new(&["dataset", "target", "critical", "statistic", "decision", "mean", "sd", "trials"]);
    for (name, r) in [("continuous", &continuous), ("discontinuous", &discontinuous)] {
        t.row(vec![
            ctx.cfg.name.clone(),
            name.into(),
            format!("{:.4}", r.critical),
            format!("{:.4}", r.t),
            r.decision.to_string(),
            format!("{:.6e}", r.mean),
            format!("{:.6e}", r.sd),
            r.samples.len().to_string(),
        ]);
    }
    t.note("confidence", bc.confidence);
    t.note("loss", "discontinuous: 0-1 test loss; continuous: mean squared error");
    t.note("train_natural", train_part.s_nat.len());
    t.note("train_adversarial", train_part.s_adv.len());
    ctx.finish(t, &ctx.out("table3.csv"))?;

    let mut s = Table::new(&["trial", "discontinuous", "continuous"]);
    for i in 0..bc.trials {
        s.row(vec![
            i.to_string(),
            format!("{:.17e}", discontinuous.samples[i]),
            format!("{:.17e}", continuous.samples[i]),
        ]);
    }
    ctx.finish(s, &ctx.out("bias_samples.csv"))?;
    Ok([discontinuous, continuous])
}

pub fn cmd_quantile(nu: u32, p: f64) -> Result<f64, CliError> {
    t_inverse_cdf(nu, p).map_err(|e| CliError::Config(e.to_string()))
}
