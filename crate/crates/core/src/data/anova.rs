use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::error::{MoiraError, Result};
use crate::numerics::Tensor2;

// Sums of squares below this fraction of the feature's mean square are
// treated as exact zeros (rounding noise from the two-pass means).
const ZERO_SS_REL: f64 = 1e-24;

/// One-way ANOVA F statistic per feature (column).
///
/// A feature with no variance anywhere scores 0. A feature with zero
/// within-class variance but nonzero between-class variance scores
/// `f64::INFINITY`, which ranks above every finite score.
pub fn anova_f(matrix: &Tensor2, labels: &[usize]) -> Result<Vec<f64>> {
    let n = matrix.rows();
    if labels.len() != n {
        return Err(MoiraError::dim("anova_f", matrix.shape(), (labels.len(), 1)));
    }
    let n_labels = labels.iter().copied().max().map_or(0, |m| m + 1);
    let mut counts = vec![0usize; n_labels];
    for &l in labels {
        counts[l] += 1;
    }
    let groups: Vec<usize> = (0..n_labels).filter(|&g| counts[g] > 0).collect();
    let g = groups.len();
    if g < 2 {
        return Err(MoiraError::Contract("anova_f needs at least two classes".into()));
    }
    if n <= g {
        return Err(MoiraError::Contract(format!(
            "anova_f needs more samples ({n}) than classes ({g})"
        )));
    }

    let p = matrix.cols();
    let mut scores = Vec::with_capacity(p);
    let mut sums = vec![0.0; n_labels];
    for j in 0..p {
        sums.iter_mut().for_each(|s| *s = 0.0);
        let mut total = 0.0;
        let mut sq = 0.0;
        for i in 0..n {
            let x = matrix.get(i, j);
            sums[labels[i]] += x;
            total += x;
            sq += x * x;
        }
        let grand = total / n as f64;
        let means: Vec<f64> = (0..n_labels)
            .map(|c| if counts[c] > 0 { sums[c] / counts[c] as f64 } else { 0.0 })
            .collect();
        let ssb: f64 = groups
            .iter()
            .map(|&c| counts[c] as f64 * (means[c] - grand).powi(2))
            .sum();
        let ssw: f64 = (0..n).map(|i| (matrix.get(i, j) - means[labels[i]]).powi(2)).sum();
        let floor = ZERO_SS_REL * (sq / n as f64) * n as f64;
        let f = if ssw <= floor {
            if ssb <= floor {
                0.0
            } else {
                f64::INFINITY
            }
        } else {
            (ssb / (g - 1) as f64) / (ssw / (n - g) as f64)
        };
        scores.push(f);
    }
    Ok(scores)
}

/// Top-`k` features of one modality by F score.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSelection {
    pub modality_name: String,
    pub scores: Vec<f64>,
    pub selected: Vec<usize>,
}

/// Indices sorted by descending score, ties by ascending index, truncated to `k`.
pub fn select_top_k(scores: &[f64], k: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| match scores[b].total_cmp(&scores[a]) {
        Ordering::Equal => a.cmp(&b),
        o => o,
    });
    idx.truncate(k);
    idx
}

pub fn select_features(modality_name: &str, matrix: &Tensor2, labels: &[usize], k: usize) -> Result<FeatureSelection> {
    if k == 0 {
        return Err(MoiraError::config("top_k", "must be >= 1"));
    }
    let scores = anova_f(matrix, labels)?;
    let selected = select_top_k(&scores, k);
    Ok(FeatureSelection {
        modality_name: modality_name.to_string(),
        scores,
        selected,
    })
}
