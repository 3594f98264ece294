//! Integrated-gradients attribution through the full network and the
//! repeated-run frequency protocol for reporting features.

mod campaign;

use serde::{Deserialize, Serialize};

pub use campaign::{attribution_campaign, AttributionConfig, CampaignResult, CampaignRun, ATTRIBUTION_HEADER};

use crate::data::MaskedDataset;
use crate::error::{MoiraError, Result};
use crate::model::{forward_batch, Model, ModalityInput};
use crate::numerics::{Tape, Tensor2};
use crate::rng;

pub const DEFAULT_STEPS: usize = 128;
pub const DEFAULT_TOP_FRACTION: f64 = 0.10;
pub const DEFAULT_REPORT_SIZE: usize = 12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributionResult {
    pub sample_id: String,
    pub modality_name: String,
    pub attributions: Vec<f64>,
    pub baseline: Vec<f64>,
    pub steps: usize,
    pub target_class: usize,
    /// Target logit at the input and at the baseline.
    pub output: f64,
    pub baseline_output: f64,
    /// `|sum(attributions) - (output - baseline_output)|`.
    pub completeness_gap: f64,
}

/// Target-class logits for a batch where modality `m` takes the rows of
/// `xm` and every other present modality repeats its sample row.
#[allow(clippy::too_many_arguments)]
fn target_logits(
    model: &Model,
    tape: &mut Tape,
    sample: &[Tensor2],
    presence: &[bool],
    m: usize,
    xm: crate::numerics::Var,
    n: usize,
    target: usize,
) -> Result<crate::numerics::Var> {
    let p = model.params.bind(tape);
    let positions: Vec<usize> = (0..n).collect();
    let inputs: Vec<Option<ModalityInput>> = (0..model.n_modalities())
        .map(|k| {
            if k == m {
                Some(ModalityInput {
                    rows: xm,
                    positions: positions.clone(),
                })
            } else if presence[k] {
                let row = sample[k].row(0).to_vec();
                let rep = Tensor2::from_fn(n, row.len(), |_, j| row[j]);
                Some(ModalityInput {
                    rows: tape.leaf(rep),
                    positions: positions.clone(),
                })
            } else {
                None
            }
        })
        .collect();
    let mut unused = rng::stream(0, "eval");
    let fwd = forward_batch(tape, &p, &model.config, &inputs, n, false, &mut unused)?;
    tape.pick(fwd.logits, &vec![target; n])
}

/// Target-class logit for one sample with modality `m` replaced by `x`.
fn logit_at(model: &Model, sample: &[Tensor2], presence: &[bool], m: usize, x: &[f64], target: usize) -> Result<f64> {
    let mut tape = Tape::new();
    let xm = tape.leaf(Tensor2::row_vector(x.to_vec()));
    let f = target_logits(model, &mut tape, sample, presence, m, xm, 1, target)?;
    Ok(tape.value(f).values()[0])
}

/// Integrated gradients of the target-class logit with respect to modality
/// `m`'s features, using a right Riemann sum with `steps` points. Other
/// present modalities stay at their values; dropout is off.
#[allow(clippy::too_many_arguments)]
pub fn integrated_gradients(
    model: &Model,
    sample: &[Tensor2],
    presence: &[bool],
    m: usize,
    target_class: usize,
    steps: usize,
    baseline: &[f64],
    sample_id: &str,
) -> Result<AttributionResult> {
    let n_mod = model.n_modalities();
    if sample.len() != n_mod || presence.len() != n_mod {
        return Err(MoiraError::dim("integrated_gradients", (sample.len(), presence.len()), (n_mod, n_mod)));
    }
    if m >= n_mod || !presence[m] {
        return Err(MoiraError::Contract(format!("modality {m} is not present for sample `{sample_id}`")));
    }
    if steps == 0 {
        return Err(MoiraError::config("steps", "must be >= 1"));
    }
    if target_class >= model.config.n_classes {
        return Err(MoiraError::Contract(format!(
            "target class {target_class} out of range for {} classes",
            model.config.n_classes
        )));
    }
    let x = sample[m].row(0).to_vec();
    if baseline.len() != x.len() {
        return Err(MoiraError::dim("integrated_gradients", (1, baseline.len()), (1, x.len())));
    }
    let p = x.len();
    let path = Tensor2::from_fn(steps, p, |k, j| {
        let a = (k + 1) as f64 / steps as f64;
        baseline[j] + a * (x[j] - baseline[j])
    });
    let mut tape = Tape::new();
    let xm = tape.leaf(path);
    let f = target_logits(model, &mut tape, sample, presence, m, xm, steps, target_class)?;
    let total = tape.sum(f);
    let grads = tape.backward(total)?;
    let g = grads.get_or_zeros(xm, tape.value(xm));
    let attributions: Vec<f64> = (0..p)
        .map(|j| {
            let s: f64 = (0..steps).map(|k| g.get(k, j)).sum();
            (x[j] - baseline[j]) * s / steps as f64
        })
        .collect();
    let output = logit_at(model, sample, presence, m, &x, target_class)?;
    let baseline_output = logit_at(model, sample, presence, m, baseline, target_class)?;
    let completeness_gap = (attributions.iter().sum::<f64>() - (output - baseline_output)).abs();
    Ok(AttributionResult {
        sample_id: sample_id.to_string(),
        modality_name: model.params.modalities[m].name.clone(),
        attributions,
        baseline: baseline.to_vec(),
        steps,
        target_class,
        output,
        baseline_output,
        completeness_gap,
    })
}

/// Integrated gradients for sample `i` of `ds` against the zero baseline
/// (the training mean in standardized space).
pub fn attribute_sample(
    model: &Model,
    ds: &MaskedDataset,
    i: usize,
    m: usize,
    target_class: usize,
    steps: usize,
) -> Result<AttributionResult> {
    model.check_dataset(ds)?;
    let sample: Vec<Tensor2> = ds
        .modalities
        .iter()
        .map(|md| Tensor2::row_vector(md.matrix.row(i).to_vec()))
        .collect();
    let baseline = vec![0.0; ds.modalities[m].feature_ids.len()];
    integrated_gradients(model, &sample, &ds.presence[i], m, target_class, steps, &baseline, &ds.sample_ids[i])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub feature_index: usize,
    pub feature_id: String,
    pub count: usize,
    /// 1-based.
    pub rank: usize,
    /// Mean over runs of the per-run mean |IG|.
    pub mean_abs_ig: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrequencyReport {
    pub modality_name: String,
    pub n_runs: usize,
    /// Features marked per run.
    pub marked_per_run: usize,
    pub counts: Vec<usize>,
    pub top: Vec<ReportRow>,
}

/// Number of features marked per run: `ceil(top_fraction * n_features)`.
pub fn marked_count(top_fraction: f64, n_features: usize) -> usize {
    let k = (top_fraction * n_features as f64 - 1e-9).ceil().max(0.0) as usize;
    k.min(n_features)
}

/// Marks each run's top features by score (descending, index tie-break),
/// counts marks across runs and reports the `report_size` most frequent
/// features (count descending, index tie-break).
pub fn rank_and_count(
    modality_name: &str,
    feature_ids: &[String],
    run_scores: &[Vec<f64>],
    top_fraction: f64,
    report_size: usize,
) -> Result<FrequencyReport> {
    if run_scores.is_empty() {
        return Err(MoiraError::config("runs", "must be >= 1"));
    }
    if !(top_fraction > 0.0 && top_fraction <= 1.0) {
        return Err(MoiraError::config("top_fraction", "must lie in (0, 1]"));
    }
    let p = feature_ids.len();
    let k = marked_count(top_fraction, p);
    let mut counts = vec![0usize; p];
    let mut score_sum = vec![0.0; p];
    for scores in run_scores {
        if scores.len() != p {
            return Err(MoiraError::dim("rank_and_count", (1, scores.len()), (1, p)));
        }
        for j in crate::data::select_top_k(scores, k) {
            counts[j] += 1;
        }
        score_sum.iter_mut().zip(scores).for_each(|(a, s)| *a += s);
    }
    let mut order: Vec<usize> = (0..p).collect();
    order.sort_by(|&a, &b| counts[b].cmp(&counts[a]).then(a.cmp(&b)));
    let top = order
        .into_iter()
        .take(report_size)
        .enumerate()
        .map(|(r, j)| ReportRow {
            feature_index: j,
            feature_id: feature_ids[j].clone(),
            count: counts[j],
            rank: r + 1,
            mean_abs_ig: score_sum[j] / run_scores.len() as f64,
        })
        .collect();
    Ok(FrequencyReport {
        modality_name: modality_name.to_string(),
        n_runs: run_scores.len(),
        marked_per_run: k,
        counts,
        top,
    })
}
