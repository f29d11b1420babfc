//! Experiment orchestration behind the `holoclass` binary.
//!
//! Every command is a pure function of the config file and its root seed;
//! outputs land in the configured output directory:
//!
//! | command         | outputs                                              |
//! |-----------------|------------------------------------------------------|
//! | `train`         | `h.ckpt` / `cosine.ckpt`, trace, `train_summary.csv` |
//! | `attack`        | `attack.set`, `attack_summary.csv`                   |
//! | `detect`        | `table1.csv`                                         |
//! | `partition`     | `partition/*.set`, `partition_summary.csv`           |
//! | `infeasibility` | `f.ckpt`, `g.ckpt`, `table2.csv`                     |
//! | `bias-test`     | `table3.csv`, `bias_samples.csv`                     |

mod commands;
mod config;
mod report;

use std::path::PathBuf;

use clap::{Parser, Subcommand};
use thiserror::Error;

pub use commands::{
    accuracy, cmd_attack, cmd_bias_test, cmd_detect, cmd_infeasibility, cmd_partition, cmd_quantile, cmd_train,
    load_partitions, Context, DetectRow, MeanScores,
};
pub use config::{BiasConfig, DatasetConfig, DetectConfig, ExperimentConfig};
pub use report::Table;

use crate::attack::{AttackConfig, AttackError};
use crate::data::DataError;
use crate::detect::DetectError;
use crate::features::FeatureKind;
use crate::model::ModelError;
use crate::optim::TrainError;
use crate::stats::StatsError;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    /// Process exit code: 1 for configuration problems, 2 for failures
    /// while running.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 1,
            CliError::Runtime(_) => 2,
        }
    }
}

macro_rules! runtime_from {
    ($($t:ty),*) => {$(
        impl From<$t> for CliError {
            fn from(e: $t) -> Self {
                CliError::Runtime(e.to_string())
            }
        }
    )*};
}
runtime_from!(DataError, DetectError, ModelError, TrainError, StatsError);

impl From<AttackError> for CliError {
    fn from(e: AttackError) -> Self {
        match e {
            AttackError::Config(_) => CliError::Config(e.to_string()),
            _ => CliError::Runtime(e.to_string()),
        }
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "holoclass",
    version,
    about = "Holomorphic classifiers, reflective PGD and continuity-bias experiments"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train a classifier on the training subset.
    Train {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value = "Holomorphic")]
        kind: FeatureKind,
    },
    /// Attack the test subset and save the adversarial examples.
    Attack {
        #[arg(long)]
        config: PathBuf,
        /// Checkpoint to attack (default: `h.ckpt` in the output directory).
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        radius: Option<f64>,
        #[arg(long)]
        steps: Option<usize>,
        #[arg(long)]
        step_size: Option<f64>,
        #[arg(long)]
        target: Option<usize>,
        #[arg(long)]
        aware_extra: Option<bool>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Detection precision/recall/F1 (table1.csv).
    Detect {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Build and persist the natural/adversarial partitions.
    Partition {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Train f and g and compare h, f, g (table2.csv).
    Infeasibility {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Continuity-bias tests (table3.csv).
    BiasTest {
        #[arg(long)]
        config: PathBuf,
    },
    /// Print the Student-t quantile t_nu^-1(p).
    Quantile {
        #[arg(long)]
        nu: u32,
        #[arg(long)]
        p: f64,
    },
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Train { config, kind } => cmd_train(&Context::load(&config)?, kind).map(|_| ()),
        Command::Attack { config, checkpoint, radius, steps, step_size, target, aware_extra, seed } => {
            let ctx = Context::load(&config)?;
            let base = &ctx.cfg.attack;
            let attack = AttackConfig {
                radius: radius.unwrap_or(base.radius),
                steps: steps.unwrap_or(base.steps),
                step_size: step_size.unwrap_or(base.step_size),
                target: target.or(base.target),
                aware_extra: aware_extra.unwrap_or(base.aware_extra),
                seed: seed.unwrap_or(base.seed),
            };
            cmd_attack(&ctx, checkpoint.as_deref(), &attack)
        }
        Command::Detect { config, checkpoint } => {
            cmd_detect(&Context::load(&config)?, checkpoint.as_deref()).map(|_| ())
        }
        Command::Partition { config, checkpoint } => {
            cmd_partition(&Context::load(&config)?, checkpoint.as_deref()).map(|_| ())
        }
        Command::Infeasibility { config, checkpoint } => {
            cmd_infeasibility(&Context::load(&config)?, checkpoint.as_deref()).map(|_| ())
        }
        Command::BiasTest { config } => cmd_bias_test(&Context::load(&config)?).map(|_| ()),
        Command::Quantile { nu, p } => {
            println!("{}", cmd_quantile(nu, p)?);
            Ok(())
        }
    }
}
