//! Autoencoder pretraining, full-batch supervised training, repeated-seed
//! runs and ablation suites.

mod ablation;
mod fit;
mod prepare;
mod pretrain;
mod repeated;

use serde::{Deserialize, Serialize};

pub use ablation::{ablation_suite, ablation_table_csv, AblationRow, Condition, ABLATION_HEADER};
pub use fit::{fit, model_config_for, train, train_epoch, EpochLoss, FitOutput, RunResult};
pub use prepare::{prepare, PrepareConfig, PreparedData};
pub use pretrain::{pretrain, PretrainModality, PretrainReport, PRETRAIN_MIN_SAMPLES};
pub use repeated::{run_repeated, run_seeds, RepeatedResult};

use crate::error::{MoiraError, Result};
use crate::numerics::WeightDecay;
use crate::objective::ObjectiveConfig;

/// Absolute improvement in validation MSE that resets pretraining patience.
pub const PRETRAIN_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub lr: f64,
    pub weight_decay: f64,
    pub weight_decay_mode: WeightDecay,
    pub epochs: usize,
    /// Run autoencoder pretraining before supervised training.
    pub pretrain: bool,
    pub pretrain_patience: usize,
    pub pretrain_max_epochs: usize,
    pub pretrain_val_fraction: f64,
    pub seed: u64,
    pub silenced_modalities: Vec<String>,
    pub objective: ObjectiveConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr: 1e-4,
            weight_decay: 1e-3,
            weight_decay_mode: WeightDecay::Coupled,
            epochs: 200,
            pretrain: true,
            pretrain_patience: 30,
            pretrain_max_epochs: 2000,
            pretrain_val_fraction: 0.1,
            seed: 0,
            silenced_modalities: Vec::new(),
            objective: ObjectiveConfig::default(),
        }
    }
}

impl TrainConfig {
    /// Full check for user-supplied configs.
    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(MoiraError::config("train.lr", "must be positive and finite"));
        }
        if self.epochs == 0 {
            return Err(MoiraError::config("train.epochs", "must be >= 1"));
        }
        self.check_runnable()
    }

    /// The weaker check library entry points apply; it admits `lr = 0` and
    /// `epochs = 0` as degenerate schedules.
    pub fn check_runnable(&self) -> Result<()> {
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            return Err(MoiraError::config("train.lr", "must be non-negative and finite"));
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return Err(MoiraError::config("train.weight_decay", "must be non-negative and finite"));
        }
        if self.pretrain_patience == 0 {
            return Err(MoiraError::config("train.pretrain_patience", "must be >= 1"));
        }
        if !(self.pretrain_val_fraction > 0.0 && self.pretrain_val_fraction < 1.0) {
            return Err(MoiraError::config("train.pretrain_val_fraction", "must lie in (0, 1)"));
        }
        self.objective.validate()
    }
}
