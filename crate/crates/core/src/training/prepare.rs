use serde::{Deserialize, Serialize};

use crate::data::{
    select_features, split, standardize_apply, standardize_fit, FeatureSelection, MaskedDataset, StandardizeStats,
    DEFAULT_TOP_K,
};
use crate::error::{MoiraError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PrepareConfig {
    pub test_fraction: f64,
    pub stratified: bool,
    /// Features kept per modality by ANOVA F-score.
    pub top_k: usize,
}

impl Default for PrepareConfig {
    fn default() -> Self {
        Self {
            test_fraction: 0.2,
            stratified: true,
            top_k: DEFAULT_TOP_K,
        }
    }
}

impl PrepareConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.test_fraction > 0.0 && self.test_fraction < 1.0) {
            return Err(MoiraError::config("prepare.test_fraction", "must lie in (0, 1)"));
        }
        if self.top_k == 0 {
            return Err(MoiraError::config("prepare.top_k", "must be >= 1"));
        }
        Ok(())
    }
}

/// A split with features selected and standardized using training rows only.
#[derive(Debug, Clone, PartialEq)]
pub struct PreparedData {
    pub train: MaskedDataset,
    pub test: MaskedDataset,
    pub selections: Vec<FeatureSelection>,
    /// Statistics of the selected features, fitted on present training rows.
    pub stats: Vec<StandardizeStats>,
}

/// Split, then per modality: ANOVA top-k on present training rows, and
/// z-scoring fitted on the same rows and applied to both halves.
pub fn prepare(ds: &MaskedDataset, cfg: &PrepareConfig, seed: u64) -> Result<PreparedData> {
    cfg.validate()?;
    let (mut train, mut test) = split(ds, cfg.test_fraction, seed, cfg.stratified)?;
    let mut selections = Vec::with_capacity(ds.n_modalities());
    let mut stats = Vec::with_capacity(ds.n_modalities());
    for m in 0..ds.n_modalities() {
        let rows = train.present_indices(m);
        let name = train.modalities[m].name.clone();
        if rows.is_empty() {
            return Err(MoiraError::Contract(format!("modality `{name}` has no training samples")));
        }
        let x = train.modalities[m].matrix.gather_rows(&rows);
        let y: Vec<usize> = rows.iter().map(|&i| train.labels[i]).collect();
        let sel = select_features(&name, &x, &y, cfg.top_k)?;
        train.select_features(m, &sel.selected);
        test.select_features(m, &sel.selected);
        let st = standardize_fit(&train.modalities[m].matrix, &rows)?;
        standardize_apply(&mut train.modalities[m].matrix, &rows, &st)?;
        let test_rows = test.present_indices(m);
        standardize_apply(&mut test.modalities[m].matrix, &test_rows, &st)?;
        selections.push(sel);
        stats.push(st);
    }
    Ok(PreparedData {
        train,
        test,
        selections,
        stats,
    })
}
