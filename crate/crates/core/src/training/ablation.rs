use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::{run_repeated, RepeatedResult, TrainConfig};
use crate::data::MaskedDataset;
use crate::error::{MoiraError, Result};
use crate::model::ModelConfig;

pub const ABLATION_HEADER: &str = "condition,accuracy,precision,auroc,auprc";

/// One row of the ablation table.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "modality", rename_all = "snake_case")]
pub enum Condition {
    Full,
    /// Only the trimodal subset; samples with any of them kept.
    TrimodalUnion,
    /// Only the trimodal subset; training samples must have all three.
    TrimodalIntersection,
    /// One modality silenced.
    Without(String),
    NoAux,
    NoClip,
    NoAuxClip,
}

impl Condition {
    pub fn label(&self) -> String {
        match self {
            Condition::Full => "Full model".into(),
            Condition::TrimodalUnion => "Trimodal (union)".into(),
            Condition::TrimodalIntersection => "Trimodal (intersection)".into(),
            Condition::Without(m) => format!("--{m}"),
            Condition::NoAux => "--aux".into(),
            Condition::NoClip => "--CLIP".into(),
            Condition::NoAuxClip => "--(aux+CLIP)".into(),
        }
    }

    /// Every condition for the given modalities, in table order. Trimodal
    /// rows need at least three modalities.
    pub fn all(modalities: &[&str]) -> Vec<Condition> {
        let mut out = vec![Condition::Full];
        if modalities.len() >= 3 {
            out.push(Condition::TrimodalUnion);
            out.push(Condition::TrimodalIntersection);
        }
        out.extend(modalities.iter().map(|m| Condition::Without(m.to_string())));
        out.extend([Condition::NoAux, Condition::NoClip, Condition::NoAuxClip]);
        out
    }

    /// The train/test data and training config this condition runs with.
    pub fn apply(
        &self,
        train: &MaskedDataset,
        test: &MaskedDataset,
        cfg: &TrainConfig,
        trimodal: &[String],
    ) -> Result<(MaskedDataset, MaskedDataset, TrainConfig)> {
        let mut cfg = cfg.clone();
        let (train, test) = match self {
            Condition::TrimodalUnion => (train.keep_modalities(trimodal)?, test.keep_modalities(trimodal)?),
            Condition::TrimodalIntersection => {
                (train.keep_modalities(trimodal)?.complete_cases(), test.keep_modalities(trimodal)?)
            }
            _ => (train.clone(), test.clone()),
        };
        match self {
            Condition::Without(m) => {
                if train.modality_index(m).is_none() {
                    return Err(MoiraError::config("condition", format!("unknown modality `{m}`")));
                }
                if !cfg.silenced_modalities.contains(m) {
                    cfg.silenced_modalities.push(m.clone());
                }
            }
            Condition::NoAux => cfg.objective.enable_aux = false,
            Condition::NoClip => cfg.objective.enable_clip = false,
            Condition::NoAuxClip => {
                cfg.objective.enable_aux = false;
                cfg.objective.enable_clip = false;
            }
            _ => {}
        }
        Ok((train, test, cfg))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub condition: String,
    pub result: Option<RepeatedResult>,
    pub note: Option<String>,
}

/// Runs every condition of the table with `n_runs` seeds each. The
/// trimodal subset defaults to the first three modalities.
#[allow(clippy::too_many_arguments)]
pub fn ablation_suite(
    train: &MaskedDataset,
    test: &MaskedDataset,
    model_cfg: &ModelConfig,
    cfg: &TrainConfig,
    trimodal: Option<&[String]>,
    n_runs: usize,
    base_seed: u64,
    parallel: usize,
) -> Result<Vec<AblationRow>> {
    let names = train.modality_names();
    let trimodal: Vec<String> = match trimodal {
        Some(t) => {
            if t.len() != 3 {
                return Err(MoiraError::config("trimodal", "must name exactly three modalities"));
            }
            for n in t {
                if train.modality_index(n).is_none() {
                    return Err(MoiraError::config("trimodal", format!("unknown modality `{n}`")));
                }
            }
            t.to_vec()
        }
        None => names.iter().take(3).map(|s| s.to_string()).collect(),
    };
    let mut rows = Vec::new();
    for cond in Condition::all(&names) {
        let (tr, te, c) = cond.apply(train, test, cfg, &trimodal)?;
        log::info!("ablation condition {}", cond.label());
        let result = run_repeated(&tr, &te, model_cfg, &c, n_runs, base_seed, parallel)?;
        rows.push(AblationRow {
            condition: cond.label(),
            result: Some(result),
            note: None,
        });
        if cond == Condition::Full && names.len() < 3 {
            rows.push(AblationRow {
                condition: "Trimodal".into(),
                result: None,
                note: Some(format!("rows omitted: dataset has {} modalities", names.len())),
            });
        }
    }
    Ok(rows)
}

/// The table as CSV: mean metrics per condition; note rows leave the
/// metric cells empty.
pub fn ablation_table_csv(rows: &[AblationRow]) -> String {
    let mut out = String::from(ABLATION_HEADER);
    out.push('\n');
    for r in rows {
        match &r.result {
            Some(res) => {
                let m = res.mean;
                let _ = writeln!(
                    out,
                    "{},{:.6},{:.6},{:.6},{:.6}",
                    r.condition, m.accuracy, m.precision, m.auroc, m.auprc
                );
            }
            None => {
                let note = r.note.as_deref().unwrap_or("");
                let _ = writeln!(out, "\"{} ({})\",,,,", r.condition, note.replace('"', "'"));
            }
        }
    }
    out
}
