use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{train, RunResult, TrainConfig};
use crate::data::MaskedDataset;
use crate::error::{MoiraError, Result};
use crate::metrics::Metrics;
use crate::model::{Model, ModelConfig};

/// Per-run results in seed order with their mean and population std.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepeatedResult {
    pub seeds: Vec<u64>,
    pub runs: Vec<RunResult>,
    pub mean: Metrics,
    pub std: Metrics,
}

impl RepeatedResult {
    pub fn from_runs(runs: Vec<RunResult>) -> Result<Self> {
        if runs.is_empty() {
            return Err(MoiraError::config("runs", "must be >= 1"));
        }
        let n = runs.len() as f64;
        let mut mean = [0.0; 4];
        for r in &runs {
            for (acc, v) in mean.iter_mut().zip(r.metrics.values()) {
                *acc += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = [0.0; 4];
        for r in &runs {
            for ((acc, v), m) in var.iter_mut().zip(r.metrics.values()).zip(mean) {
                *acc += (v - m).powi(2);
            }
        }
        let std = var.map(|v| (v / n).sqrt());
        Ok(Self {
            seeds: runs.iter().map(|r| r.seed).collect(),
            runs,
            mean: Metrics::from_values(mean),
            std: Metrics::from_values(std),
        })
    }
}

/// Trains one model per seed (the split stays fixed) on up to `parallel`
/// worker threads. Results are ordered by position in `seeds`.
pub fn run_seeds(
    train_ds: &MaskedDataset,
    test_ds: &MaskedDataset,
    model_cfg: &ModelConfig,
    cfg: &TrainConfig,
    seeds: &[u64],
    parallel: usize,
) -> Result<(RepeatedResult, Vec<Model>)> {
    if seeds.is_empty() {
        return Err(MoiraError::config("runs", "must be >= 1"));
    }
    let one = |&seed: &u64| {
        let cfg = TrainConfig { seed, ..cfg.clone() };
        train(train_ds, test_ds, model_cfg, &cfg).map_err(|e| MoiraError::Run {
            seed,
            source: Box::new(e),
        })
    };
    let outcomes: Vec<Result<(Model, RunResult)>> = if parallel <= 1 {
        seeds.iter().map(one).collect()
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(parallel)
            .build()
            .map_err(|e| MoiraError::Contract(format!("cannot start worker pool: {e}")))?;
        pool.install(|| seeds.par_iter().map(one).collect())
    };
    let mut models = Vec::with_capacity(seeds.len());
    let mut runs = Vec::with_capacity(seeds.len());
    for o in outcomes {
        let (m, r) = o?;
        models.push(m);
        runs.push(r);
    }
    Ok((RepeatedResult::from_runs(runs)?, models))
}

/// Runs seeds `base_seed .. base_seed + n_runs`.
pub fn run_repeated(
    train_ds: &MaskedDataset,
    test_ds: &MaskedDataset,
    model_cfg: &ModelConfig,
    cfg: &TrainConfig,
    n_runs: usize,
    base_seed: u64,
    parallel: usize,
) -> Result<RepeatedResult> {
    let seeds: Vec<u64> = (0..n_runs as u64).map(|k| base_seed + k).collect();
    Ok(run_seeds(train_ds, test_ds, model_cfg, cfg, &seeds, parallel)?.0)
}
