use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{attribute_sample, rank_and_count, FrequencyReport, DEFAULT_REPORT_SIZE, DEFAULT_STEPS, DEFAULT_TOP_FRACTION};
use crate::data::MaskedDataset;
use crate::error::{MoiraError, Result};
use crate::metrics::{argmax, Metrics};
use crate::model::ModelConfig;
use crate::training::{train, TrainConfig};

pub const ATTRIBUTION_HEADER: &str = "modality,feature_id,count,rank,mean_abs_ig";
pub const TARGET_CLASS: usize = 1;
pub const BASELINE_RULE: &str = "zero vector (training mean in standardized space)";
pub const TARGET_RULE: &str = "class 1 logit; correctly predicted class-1 test samples";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AttributionConfig {
    pub n_runs: usize,
    pub steps: usize,
    pub top_fraction: f64,
    pub report_size: usize,
}

impl Default for AttributionConfig {
    fn default() -> Self {
        Self {
            n_runs: 100,
            steps: DEFAULT_STEPS,
            top_fraction: DEFAULT_TOP_FRACTION,
            report_size: DEFAULT_REPORT_SIZE,
        }
    }
}

impl AttributionConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_runs == 0 {
            return Err(MoiraError::config("n_runs", "must be >= 1"));
        }
        if self.steps == 0 {
            return Err(MoiraError::config("steps", "must be >= 1"));
        }
        if !(self.top_fraction > 0.0 && self.top_fraction <= 1.0) {
            return Err(MoiraError::config("top_fraction", "must lie in (0, 1]"));
        }
        if self.report_size == 0 {
            return Err(MoiraError::config("report_size", "must be >= 1"));
        }
        Ok(())
    }
}

/// One trained model's attributions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CampaignRun {
    pub seed: u64,
    pub metrics: Metrics,
    /// Samples attributed per modality.
    pub n_attributed: Vec<usize>,
    /// Per modality, mean |IG| over the attributed samples; `None` when
    /// no sample qualified.
    pub scores: Vec<Option<Vec<f64>>>,
    pub max_completeness_gap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CampaignResult {
    pub seeds: Vec<u64>,
    pub steps: usize,
    pub top_fraction: f64,
    pub baseline_rule: String,
    pub target_rule: String,
    pub modality_names: Vec<String>,
    pub runs: Vec<CampaignRun>,
    /// One report per modality that was scored in at least one run.
    pub reports: Vec<FrequencyReport>,
}

impl CampaignResult {
    /// A report as CSV, one line per reported feature.
    pub fn report_csv(report: &FrequencyReport) -> String {
        let mut out = String::from(ATTRIBUTION_HEADER);
        out.push('\n');
        for r in &report.top {
            let _ = writeln!(
                out,
                "{},{},{},{},{:.6e}",
                report.modality_name, r.feature_id, r.count, r.rank, r.mean_abs_ig
            );
        }
        out
    }
}

fn one_run(
    train_ds: &MaskedDataset,
    test_raw: &MaskedDataset,
    test_ds: &MaskedDataset,
    model_cfg: &ModelConfig,
    cfg: &TrainConfig,
    acfg: &AttributionConfig,
) -> Result<CampaignRun> {
    let (model, result) = train(train_ds, test_raw, model_cfg, cfg)?;
    let probs = model.predict_dataset(test_ds)?;
    let hits: Vec<usize> = (0..test_ds.n_samples())
        .filter(|&i| test_ds.labels[i] == TARGET_CLASS && argmax(probs.row(i)) == TARGET_CLASS)
        .collect();
    let mut n_attributed = Vec::new();
    let mut scores = Vec::new();
    let mut max_gap: f64 = 0.0;
    for (m, md) in test_ds.modalities.iter().enumerate() {
        let rows: Vec<usize> = hits.iter().copied().filter(|&i| test_ds.presence[i][m]).collect();
        n_attributed.push(rows.len());
        if rows.is_empty() {
            scores.push(None);
            continue;
        }
        let mut acc = vec![0.0; md.feature_ids.len()];
        for &i in &rows {
            let r = attribute_sample(&model, test_ds, i, m, TARGET_CLASS, acfg.steps)?;
            max_gap = max_gap.max(r.completeness_gap);
            acc.iter_mut().zip(&r.attributions).for_each(|(a, v)| *a += v.abs());
        }
        acc.iter_mut().for_each(|a| *a /= rows.len() as f64);
        scores.push(Some(acc));
    }
    Ok(CampaignRun {
        seed: cfg.seed,
        metrics: result.metrics,
        n_attributed,
        scores,
        max_completeness_gap: max_gap,
    })
}

/// Trains `n_runs` models (seeds `base_seed + k`, split fixed), attributes
/// every correctly predicted class-1 test sample for each present
/// modality, and counts how often each feature lands in a run's top set.
pub fn attribution_campaign(
    train_ds: &MaskedDataset,
    test_ds: &MaskedDataset,
    model_cfg: &ModelConfig,
    cfg: &TrainConfig,
    acfg: &AttributionConfig,
    base_seed: u64,
    parallel: usize,
) -> Result<CampaignResult> {
    acfg.validate()?;
    cfg.check_runnable()?;
    if train_ds.n_classes <= TARGET_CLASS {
        return Err(MoiraError::Contract("attribution needs a class 1".into()));
    }
    let test = test_ds.silence(&cfg.silenced_modalities)?;
    let seeds: Vec<u64> = (0..acfg.n_runs as u64).map(|k| base_seed + k).collect();
    let run = |&seed: &u64| {
        let c = TrainConfig { seed, ..cfg.clone() };
        one_run(train_ds, test_ds, &test, model_cfg, &c, acfg).map_err(|e| MoiraError::Run {
            seed,
            source: Box::new(e),
        })
    };
    let outcomes: Vec<Result<CampaignRun>> = if parallel <= 1 {
        seeds.iter().map(run).collect()
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(parallel)
            .build()
            .map_err(|e| MoiraError::Contract(format!("cannot start worker pool: {e}")))?;
        pool.install(|| seeds.par_iter().map(run).collect())
    };
    let runs = outcomes.into_iter().collect::<Result<Vec<_>>>()?;
    let mut reports = Vec::new();
    for (m, md) in test.modalities.iter().enumerate() {
        let per_run: Vec<Vec<f64>> = runs.iter().filter_map(|r| r.scores[m].clone()).collect();
        if per_run.is_empty() {
            log::warn!("modality {}: no qualifying samples in any run", md.name);
            continue;
        }
        reports.push(rank_and_count(
            &md.name,
            &md.feature_ids,
            &per_run,
            acfg.top_fraction,
            acfg.report_size,
        )?);
    }
    Ok(CampaignResult {
        seeds,
        steps: acfg.steps,
        top_fraction: acfg.top_fraction,
        baseline_rule: BASELINE_RULE.into(),
        target_rule: TARGET_RULE.into(),
        modality_names: test.modality_names().iter().map(|s| s.to_string()).collect(),
        runs,
        reports,
    })
}
