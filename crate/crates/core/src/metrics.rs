//! Binary classification metrics on positive-class scores.

use serde::{Deserialize, Serialize};

use crate::error::{MoiraError, Result};
use crate::numerics::Tensor2;

pub const DEFAULT_THRESHOLD: f64 = 0.5;

/// Positive-class scores paired with 0/1 labels.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoredLabels {
    scores: Vec<f64>,
    labels: Vec<bool>,
}

impl ScoredLabels {
    pub fn new(scores: Vec<f64>, labels: &[usize]) -> Result<Self> {
        if scores.len() != labels.len() {
            return Err(MoiraError::dim("scored_labels", (scores.len(), 1), (labels.len(), 1)));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l > 1) {
            return Err(MoiraError::Contract(format!("label {bad} is not binary")));
        }
        if let Some(bad) = scores.iter().find(|s| s.is_nan()) {
            return Err(MoiraError::Contract(format!("score {bad} is not a number")));
        }
        Ok(Self {
            scores,
            labels: labels.iter().map(|&l| l == 1).collect(),
        })
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }

    pub fn scores(&self) -> &[f64] {
        &self.scores
    }

    pub fn n_positive(&self) -> usize {
        self.labels.iter().filter(|&&l| l).count()
    }

    fn nonempty(&self, op: &str) -> Result<()> {
        if self.is_empty() {
            return Err(MoiraError::Contract(format!("{op} of an empty set")));
        }
        Ok(())
    }

    /// Sample indices grouped by equal score, in ascending score order.
    fn tie_groups(&self) -> Vec<(usize, usize)> {
        let mut order: Vec<usize> = (0..self.len()).collect();
        order.sort_by(|&a, &b| self.scores[a].total_cmp(&self.scores[b]));
        let mut groups = Vec::new();
        let mut k = 0;
        while k < order.len() {
            let s = self.scores[order[k]];
            let (mut pos, mut neg) = (0, 0);
            while k < order.len() && self.scores[order[k]] == s {
                if self.labels[order[k]] {
                    pos += 1;
                } else {
                    neg += 1;
                }
                k += 1;
            }
            groups.push((pos, neg));
        }
        groups
    }
}

/// Fraction of samples where `score >= threshold` matches the label.
pub fn accuracy(s: &ScoredLabels, threshold: f64) -> Result<f64> {
    s.nonempty("accuracy")?;
    let hits = s
        .scores
        .iter()
        .zip(&s.labels)
        .filter(|(&p, &l)| (p >= threshold) == l)
        .count();
    Ok(hits as f64 / s.len() as f64)
}

/// `TP / (TP + FP)`, or 0 when nothing is predicted positive.
pub fn precision(s: &ScoredLabels, threshold: f64) -> Result<f64> {
    s.nonempty("precision")?;
    let (mut tp, mut fp) = (0usize, 0usize);
    for (&p, &l) in s.scores.iter().zip(&s.labels) {
        if p >= threshold {
            if l {
                tp += 1;
            } else {
                fp += 1;
            }
        }
    }
    if tp + fp == 0 {
        return Ok(0.0);
    }
    Ok(tp as f64 / (tp + fp) as f64)
}

/// Mann-Whitney statistic: `(concordant + 0.5 * tied) / (n_pos * n_neg)`.
pub fn auroc(s: &ScoredLabels) -> Result<f64> {
    let n_pos = s.n_positive();
    let n_neg = s.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(MoiraError::Contract("auroc needs both classes".into()));
    }
    let (mut concordant, mut tied, mut neg_below) = (0u64, 0u64, 0u64);
    for (pos, neg) in s.tie_groups() {
        concordant += pos as u64 * neg_below;
        tied += pos as u64 * neg as u64;
        neg_below += neg as u64;
    }
    Ok((concordant as f64 + 0.5 * tied as f64) / (n_pos as f64 * n_neg as f64))
}

/// Area under the precision-recall curve, step-interpolated over a
/// descending-score sweep with tied scores entering together.
pub fn auprc(s: &ScoredLabels) -> Result<f64> {
    let n_pos = s.n_positive();
    if n_pos == 0 {
        return Err(MoiraError::Contract("auprc needs at least one positive".into()));
    }
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut prev_recall = 0.0;
    let mut area = 0.0;
    for (pos, neg) in s.tie_groups().into_iter().rev() {
        tp += pos;
        fp += neg;
        if pos == 0 {
            continue;
        }
        let recall = tp as f64 / n_pos as f64;
        area += (recall - prev_recall) * (tp as f64 / (tp + fp) as f64);
        prev_recall = recall;
    }
    Ok(area)
}

/// The four reported metrics.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Metrics {
    pub accuracy: f64,
    pub precision: f64,
    pub auroc: f64,
    pub auprc: f64,
}

impl Metrics {
    pub const NAMES: [&'static str; 4] = ["accuracy", "precision", "auroc", "auprc"];

    pub fn values(&self) -> [f64; 4] {
        [self.accuracy, self.precision, self.auroc, self.auprc]
    }

    pub fn from_values(v: [f64; 4]) -> Self {
        Self {
            accuracy: v[0],
            precision: v[1],
            auroc: v[2],
            auprc: v[3],
        }
    }

    /// Metrics from an `n × C` probability matrix. Class 1 is the positive
    /// class; with more than two classes accuracy uses the arg-max and the
    /// other metrics treat class 1 against the rest.
    pub fn evaluate(probs: &Tensor2, labels: &[usize]) -> Result<Self> {
        if probs.rows() != labels.len() {
            return Err(MoiraError::dim("evaluate", probs.shape(), (labels.len(), probs.cols())));
        }
        if probs.cols() < 2 {
            return Err(MoiraError::Contract("evaluate needs at least two classes".into()));
        }
        let scores: Vec<f64> = (0..probs.rows()).map(|i| probs.get(i, 1)).collect();
        let binary: Vec<usize> = labels.iter().map(|&l| usize::from(l == 1)).collect();
        let s = ScoredLabels::new(scores, &binary)?;
        let accuracy = if probs.cols() == 2 {
            accuracy(&s, DEFAULT_THRESHOLD)?
        } else {
            s.nonempty("accuracy")?;
            let hits = (0..probs.rows()).filter(|&i| argmax(probs.row(i)) == labels[i]).count();
            hits as f64 / labels.len() as f64
        };
        Ok(Self {
            accuracy,
            precision: precision(&s, DEFAULT_THRESHOLD)?,
            auroc: auroc(&s)?,
            auprc: auprc(&s)?,
        })
    }
}

/// Index of the largest entry; the first one on ties.
pub fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (j, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = j;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn sl(labels: &[usize], scores: &[f64]) -> ScoredLabels {
        ScoredLabels::new(scores.to_vec(), labels).unwrap()
    }

    fn brute_auroc(labels: &[usize], scores: &[f64]) -> f64 {
        let (mut num, mut pairs) = (0.0, 0.0);
        for i in 0..labels.len() {
            for j in 0..labels.len() {
                if labels[i] == 1 && labels[j] == 0 {
                    pairs += 1.0;
                    if scores[i] > scores[j] {
                        num += 1.0;
                    } else if scores[i] == scores[j] {
                        num += 0.5;
                    }
                }
            }
        }
        num / pairs
    }

    /// Average precision from every distinct threshold, recomputed from scratch.
    fn brute_auprc(labels: &[usize], scores: &[f64]) -> f64 {
        let n_pos = labels.iter().filter(|&&l| l == 1).count() as f64;
        let mut thresholds: Vec<f64> = scores.to_vec();
        thresholds.sort_by(|a, b| b.total_cmp(a));
        thresholds.dedup();
        let mut prev_recall = 0.0;
        let mut area = 0.0;
        for t in thresholds {
            let tp = (0..labels.len()).filter(|&i| scores[i] >= t && labels[i] == 1).count() as f64;
            let predicted = scores.iter().filter(|&&s| s >= t).count() as f64;
            let recall = tp / n_pos;
            area += (recall - prev_recall) * (tp / predicted);
            prev_recall = recall;
        }
        area
    }

    #[test]
    fn accuracy_examples() {
        assert_eq!(accuracy(&sl(&[1, 0, 1], &[0.9, 0.1, 0.7]), 0.5).unwrap(), 1.0);
        assert_eq!(accuracy(&sl(&[1, 0, 1], &[0.1, 0.9, 0.3]), 0.5).unwrap(), 0.0);
        assert!((accuracy(&sl(&[1, 0, 1], &[0.9, 0.6, 0.7]), 0.5).unwrap() - 2.0 / 3.0).abs() < 1e-15);
        assert!(accuracy(&sl(&[], &[]), 0.5).is_err());
    }

    #[test]
    fn precision_examples() {
        assert_eq!(precision(&sl(&[1, 0, 1, 0], &[0.9, 0.8, 0.7, 0.6]), 0.5).unwrap(), 0.5);
        assert_eq!(precision(&sl(&[1, 0], &[0.1, 0.2]), 0.5).unwrap(), 0.0);
        assert_eq!(precision(&sl(&[1, 0], &[0.9, 0.2]), 0.5).unwrap(), 1.0);
        assert!(precision(&sl(&[], &[]), 0.5).is_err());
    }

    #[test]
    fn auroc_examples() {
        assert_eq!(auroc(&sl(&[1, 0, 1, 0], &[0.9, 0.2, 0.8, 0.1])).unwrap(), 1.0);
        assert_eq!(auroc(&sl(&[1, 0, 1, 0], &[0.4; 4])).unwrap(), 0.5);
        assert_eq!(auroc(&sl(&[1, 0, 1, 0], &[0.8, 0.7, 0.6, 0.5])).unwrap(), 0.75);
        assert!(auroc(&sl(&[1, 1], &[0.1, 0.2])).is_err());
    }

    #[test]
    fn auprc_examples() {
        assert_eq!(auprc(&sl(&[1, 0, 1, 0], &[0.9, 0.2, 0.8, 0.1])).unwrap(), 1.0);
        assert_eq!(auprc(&sl(&[1, 0], &[0.2, 0.9])).unwrap(), 0.5);
        assert!(auprc(&sl(&[0, 0], &[0.2, 0.9])).is_err());
    }

    #[test]
    fn auprc_of_random_scores_tracks_prevalence() {
        for seed in 0..10 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let n = 20_000;
            let labels: Vec<usize> = (0..n).map(|_| usize::from(rng.random_bool(0.3))).collect();
            let scores: Vec<f64> = (0..n).map(|_| rng.random()).collect();
            let prevalence = labels.iter().sum::<usize>() as f64 / n as f64;
            let a = auprc(&sl(&labels, &scores)).unwrap();
            assert!((a - prevalence).abs() < 0.05, "{a} vs {prevalence}");
        }
    }

    #[test]
    fn auroc_matches_pair_count_exactly() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..1000 {
            let n = rng.random_range(2..=200);
            let coarse = rng.random_bool(0.5);
            let mut labels: Vec<usize> = (0..n).map(|_| usize::from(rng.random_bool(0.5))).collect();
            labels[0] = 0;
            labels[1] = 1;
            let scores: Vec<f64> = (0..n)
                .map(|_| if coarse { rng.random_range(0..5) as f64 / 4.0 } else { rng.random() })
                .collect();
            assert_eq!(auroc(&sl(&labels, &scores)).unwrap(), brute_auroc(&labels, &scores));
            let (a, b) = (auprc(&sl(&labels, &scores)).unwrap(), brute_auprc(&labels, &scores));
            assert!((a - b).abs() < 1e-12, "{a} vs {b}");
        }
    }

    #[test]
    fn evaluate_binary_and_multiclass() {
        let probs = Tensor2::from_rows(&[vec![0.2, 0.8], vec![0.7, 0.3], vec![0.4, 0.6]]).unwrap();
        let m = Metrics::evaluate(&probs, &[1, 0, 0]).unwrap();
        assert!((m.accuracy - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(m.precision, 0.5);
        assert_eq!(m.auroc, 1.0);
        assert_eq!(m.auprc, 1.0);

        let probs = Tensor2::from_rows(&[vec![0.1, 0.2, 0.7], vec![0.1, 0.8, 0.1], vec![0.6, 0.3, 0.1]]).unwrap();
        let m = Metrics::evaluate(&probs, &[2, 1, 0]).unwrap();
        assert_eq!(m.accuracy, 1.0);
    }

    fn case() -> impl Strategy<Value = (Vec<usize>, Vec<f64>)> {
        (2usize..60).prop_flat_map(|n| {
            (
                proptest::collection::vec(0usize..2, n).prop_map(|mut l| {
                    l[0] = 0;
                    l[1] = 1;
                    l
                }),
                proptest::collection::vec(-5.0f64..5.0, n),
            )
        })
    }

    proptest! {
        #[test]
        fn auroc_invariant_under_increasing_transform((labels, scores) in case()) {
            let base = auroc(&sl(&labels, &scores)).unwrap();
            let t: Vec<f64> = scores.iter().map(|s| (s * 0.5).exp() + 3.0).collect();
            prop_assert_eq!(base, auroc(&sl(&labels, &t)).unwrap());
        }

        #[test]
        fn auroc_negation_complements((labels, scores) in case()) {
            let mut sorted = scores.clone();
            sorted.sort_by(f64::total_cmp);
            prop_assume!(sorted.windows(2).all(|w| w[0] != w[1]));
            let neg: Vec<f64> = scores.iter().map(|s| -s).collect();
            let sum = auroc(&sl(&labels, &scores)).unwrap() + auroc(&sl(&labels, &neg)).unwrap();
            prop_assert!((sum - 1.0).abs() < 1e-12);
        }

        #[test]
        fn metrics_are_unit_interval((labels, scores) in case()) {
            let p: Vec<f64> = scores.iter().map(|s| 1.0 / (1.0 + (-s).exp())).collect();
            let s = sl(&labels, &p);
            for v in [accuracy(&s, 0.5).unwrap(), precision(&s, 0.5).unwrap(), auroc(&s).unwrap(), auprc(&s).unwrap()] {
                prop_assert!((0.0..=1.0).contains(&v));
            }
        }
    }
}
