use std::collections::{BTreeMap, BTreeSet, HashMap};

use super::table::{first_duplicate, OmicsTable};
use crate::error::{MoiraError, Result};
use crate::numerics::Tensor2;

/// One modality inside a [`MaskedDataset`]. Rows follow the dataset's sample
/// order; rows of absent samples are zero.
#[derive(Debug, Clone, PartialEq)]
pub struct Modality {
    pub name: String,
    pub feature_ids: Vec<String>,
    pub matrix: Tensor2,
}

/// Aligned multi-modality samples with a per-sample presence mask.
#[derive(Debug, Clone, PartialEq)]
pub struct MaskedDataset {
    pub modalities: Vec<Modality>,
    pub sample_ids: Vec<String>,
    /// `presence[i][m]`: modality `m` was measured for sample `i`.
    pub presence: Vec<Vec<bool>>,
    pub labels: Vec<usize>,
    pub n_classes: usize,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct AlignReport {
    /// Samples dropped because no label was supplied.
    pub dropped_unlabeled: usize,
}

impl MaskedDataset {
    pub fn n_samples(&self) -> usize {
        self.sample_ids.len()
    }

    pub fn n_modalities(&self) -> usize {
        self.modalities.len()
    }

    pub fn modality_names(&self) -> Vec<&str> {
        self.modalities.iter().map(|m| m.name.as_str()).collect()
    }

    pub fn modality_index(&self, name: &str) -> Option<usize> {
        self.modalities.iter().position(|m| m.name == name)
    }

    pub fn input_dims(&self) -> Vec<usize> {
        self.modalities.iter().map(|m| m.feature_ids.len()).collect()
    }

    pub fn is_present(&self, sample: usize, modality: usize) -> bool {
        self.presence[sample][modality]
    }

    /// Sample indices where modality `m` is present, ascending.
    pub fn present_indices(&self, m: usize) -> Vec<usize> {
        (0..self.n_samples()).filter(|&i| self.presence[i][m]).collect()
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut c = vec![0; self.n_classes];
        for &l in &self.labels {
            c[l] += 1;
        }
        c
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.n_samples();
        if self.labels.len() != n || self.presence.len() != n {
            return Err(MoiraError::Contract("labels/presence length differs from sample count".into()));
        }
        if let Some(d) = first_duplicate(&self.sample_ids) {
            return Err(MoiraError::Contract(format!("duplicate sample id `{d}`")));
        }
        for (i, row) in self.presence.iter().enumerate() {
            if row.len() != self.n_modalities() {
                return Err(MoiraError::Contract(format!("presence row {i} has wrong width")));
            }
            if !row.iter().any(|&p| p) {
                return Err(MoiraError::Contract(format!(
                    "sample `{}` has no present modality",
                    self.sample_ids[i]
                )));
            }
        }
        if let Some(&l) = self.labels.iter().find(|&&l| l >= self.n_classes) {
            return Err(MoiraError::Contract(format!("label {l} >= n_classes {}", self.n_classes)));
        }
        for m in &self.modalities {
            if m.matrix.shape() != (n, m.feature_ids.len()) {
                return Err(MoiraError::dim("MaskedDataset", m.matrix.shape(), (n, m.feature_ids.len())));
            }
        }
        Ok(())
    }

    /// Keeps the given samples (in the given order).
    pub fn subset(&self, idx: &[usize]) -> MaskedDataset {
        MaskedDataset {
            modalities: self
                .modalities
                .iter()
                .map(|m| Modality {
                    name: m.name.clone(),
                    feature_ids: m.feature_ids.clone(),
                    matrix: m.matrix.gather_rows(idx),
                })
                .collect(),
            sample_ids: idx.iter().map(|&i| self.sample_ids[i].clone()).collect(),
            presence: idx.iter().map(|&i| self.presence[i].clone()).collect(),
            labels: idx.iter().map(|&i| self.labels[i]).collect(),
            n_classes: self.n_classes,
        }
    }

    /// Keeps only the named modalities (in dataset order) and drops samples
    /// left with none of them.
    pub fn keep_modalities(&self, names: &[String]) -> Result<MaskedDataset> {
        for n in names {
            if self.modality_index(n).is_none() {
                return Err(MoiraError::config("modalities", format!("unknown modality `{n}`")));
            }
        }
        let keep: Vec<usize> = (0..self.n_modalities())
            .filter(|&m| names.contains(&self.modalities[m].name))
            .collect();
        let rows: Vec<usize> = (0..self.n_samples())
            .filter(|&i| keep.iter().any(|&m| self.presence[i][m]))
            .collect();
        let mut out = self.subset(&rows);
        out.modalities = keep.iter().map(|&m| out.modalities[m].clone()).collect();
        out.presence = out
            .presence
            .iter()
            .map(|row| keep.iter().map(|&m| row[m]).collect())
            .collect();
        Ok(out)
    }

    /// Removes the named modalities from every sample's observed set.
    pub fn silence(&self, names: &[String]) -> Result<MaskedDataset> {
        for n in names {
            if self.modality_index(n).is_none() {
                return Err(MoiraError::config("silenced_modalities", format!("unknown modality `{n}`")));
            }
        }
        let keep: Vec<String> = self
            .modalities
            .iter()
            .map(|m| m.name.clone())
            .filter(|n| !names.contains(n))
            .collect();
        if keep.is_empty() {
            return Err(MoiraError::config("silenced_modalities", "every modality silenced"));
        }
        self.keep_modalities(&keep)
    }

    /// Samples that have every modality present.
    pub fn complete_cases(&self) -> MaskedDataset {
        let rows: Vec<usize> = (0..self.n_samples())
            .filter(|&i| self.presence[i].iter().all(|&p| p))
            .collect();
        self.subset(&rows)
    }

    /// Replaces modality `m`'s feature columns with the given subset.
    pub fn select_features(&mut self, m: usize, idx: &[usize]) {
        let md = &mut self.modalities[m];
        md.matrix = md.matrix.gather_cols(idx);
        md.feature_ids = idx.iter().map(|&j| md.feature_ids[j].clone()).collect();
    }

    /// Per-modality tables holding only present samples.
    pub fn to_tables(&self) -> Vec<OmicsTable> {
        (0..self.n_modalities())
            .map(|m| {
                let rows = self.present_indices(m);
                let md = &self.modalities[m];
                OmicsTable {
                    modality_name: md.name.clone(),
                    sample_ids: rows.iter().map(|&i| self.sample_ids[i].clone()).collect(),
                    feature_ids: md.feature_ids.clone(),
                    matrix: md.matrix.gather_rows(&rows),
                }
            })
            .collect()
    }
}

/// Builds a masked dataset over the union of the tables' samples.
///
/// Sample ids are sorted. Samples without a label are dropped and counted.
pub fn align(tables: &[OmicsTable], labels: &BTreeMap<String, usize>) -> Result<(MaskedDataset, AlignReport)> {
    if tables.is_empty() {
        return Err(MoiraError::config("modalities", "no tables supplied"));
    }
    let names: Vec<String> = tables.iter().map(|t| t.modality_name.clone()).collect();
    if let Some(d) = first_duplicate(&names) {
        return Err(MoiraError::config("modalities", format!("duplicate modality `{d}`")));
    }
    for t in tables {
        if let Some(d) = first_duplicate(&t.feature_ids) {
            return Err(MoiraError::Contract(format!(
                "feature id `{d}` repeated in modality `{}`",
                t.modality_name
            )));
        }
    }

    let all: BTreeSet<&str> = tables
        .iter()
        .flat_map(|t| t.sample_ids.iter().map(String::as_str))
        .collect();
    let mut report = AlignReport::default();
    let mut sample_ids = Vec::new();
    let mut sample_labels = Vec::new();
    for id in all {
        match labels.get(id) {
            Some(&l) => {
                sample_ids.push(id.to_string());
                sample_labels.push(l);
            }
            None => report.dropped_unlabeled += 1,
        }
    }
    if report.dropped_unlabeled > 0 {
        log::warn!("dropped {} unlabeled samples", report.dropped_unlabeled);
    }
    let pos: HashMap<&str, usize> = sample_ids.iter().enumerate().map(|(i, s)| (s.as_str(), i)).collect();
    let n = sample_ids.len();
    let mut presence = vec![vec![false; tables.len()]; n];
    let mut modalities = Vec::with_capacity(tables.len());
    for (m, t) in tables.iter().enumerate() {
        let mut matrix = Tensor2::zeros(n, t.n_features());
        for (r, id) in t.sample_ids.iter().enumerate() {
            if let Some(&i) = pos.get(id.as_str()) {
                presence[i][m] = true;
                matrix.row_mut(i).copy_from_slice(t.matrix.row(r));
            }
        }
        modalities.push(Modality {
            name: t.modality_name.clone(),
            feature_ids: t.feature_ids.clone(),
            matrix,
        });
    }
    let n_classes = sample_labels.iter().copied().max().map_or(0, |m| m + 1).max(2);
    let ds = MaskedDataset {
        modalities,
        sample_ids,
        presence,
        labels: sample_labels,
        n_classes,
    };
    ds.validate()?;
    Ok((ds, report))
}
