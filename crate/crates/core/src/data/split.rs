use rand::seq::SliceRandom;

use super::dataset::MaskedDataset;
use crate::error::{MoiraError, Result};
use crate::rng;

/// Seeded train/test split. Both halves keep the dataset's sample order.
///
/// Stratified splits put `round(fraction * n_c)` samples of each class `c`
/// in the test half, clamped so every class keeps at least one sample on
/// each side.
pub fn split(
    dataset: &MaskedDataset,
    test_fraction: f64,
    seed: u64,
    stratified: bool,
) -> Result<(MaskedDataset, MaskedDataset)> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(MoiraError::config("test_fraction", "must lie in (0, 1)"));
    }
    let n = dataset.n_samples();
    if n < 2 {
        return Err(MoiraError::Contract("split needs at least two samples".into()));
    }
    let mut rng = rng::stream(seed, "split");
    let mut is_test = vec![false; n];
    if stratified {
        for c in 0..dataset.n_classes {
            let mut members: Vec<usize> = (0..n).filter(|&i| dataset.labels[i] == c).collect();
            if members.is_empty() {
                continue;
            }
            if members.len() < 2 {
                return Err(MoiraError::Contract(format!(
                    "class {c} has {} sample(s); stratified split needs >= 2",
                    members.len()
                )));
            }
            let k = test_count(members.len(), test_fraction);
            members.shuffle(&mut rng);
            for &i in &members[..k] {
                is_test[i] = true;
            }
        }
    } else {
        let mut all: Vec<usize> = (0..n).collect();
        all.shuffle(&mut rng);
        for &i in &all[..test_count(n, test_fraction)] {
            is_test[i] = true;
        }
    }
    let train: Vec<usize> = (0..n).filter(|&i| !is_test[i]).collect();
    let test: Vec<usize> = (0..n).filter(|&i| is_test[i]).collect();
    Ok((dataset.subset(&train), dataset.subset(&test)))
}

fn test_count(n: usize, fraction: f64) -> usize {
    ((fraction * n as f64).round() as usize).clamp(1, n - 1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::dataset::Modality;
    use crate::numerics::Tensor2;

    fn toy(labels: Vec<usize>) -> MaskedDataset {
        let n = labels.len();
        MaskedDataset {
            modalities: vec![Modality {
                name: "a".into(),
                feature_ids: vec!["f".into()],
                matrix: Tensor2::from_fn(n, 1, |i, _| i as f64),
            }],
            sample_ids: (0..n).map(|i| format!("s{i:02}")).collect(),
            presence: vec![vec![true]; n],
            labels,
            n_classes: 2,
        }
    }

    #[test]
    fn plain_split_is_deterministic() {
        let ds = toy(vec![0, 1, 0, 1, 0, 1, 0, 1, 0, 1]);
        let (tr, te) = split(&ds, 0.2, 9, false).unwrap();
        assert_eq!((tr.n_samples(), te.n_samples()), (8, 2));
        let (_, te2) = split(&ds, 0.2, 9, false).unwrap();
        assert_eq!(te.sample_ids, te2.sample_ids);
    }

    #[test]
    fn stratified_counts() {
        let ds = toy(vec![0, 0, 0, 0, 0, 0, 1, 1, 1, 1]);
        let (tr, te) = split(&ds, 0.5, 1, true).unwrap();
        assert_eq!(te.class_counts(), vec![3, 2]);
        assert_eq!(tr.class_counts(), vec![3, 2]);
    }

    #[test]
    fn extreme_fraction_keeps_one_train_per_class() {
        let ds = toy(vec![0, 0, 0, 0, 0, 1, 1, 1, 1, 1]);
        let (tr, te) = split(&ds, 0.99, 1, true).unwrap();
        assert_eq!(tr.class_counts(), vec![1, 1]);
        assert_eq!(te.class_counts(), vec![4, 4]);
    }

    #[test]
    fn singleton_class_rejected() {
        let ds = toy(vec![0, 0, 0, 1]);
        assert!(split(&ds, 0.5, 1, true).is_err());
        assert!(split(&ds, 0.0, 1, false).is_err());
    }

    #[test]
    fn split_is_a_partition() {
        let ds = toy((0..37).map(|i| i % 2).collect());
        for seed in 0..20 {
            let (tr, te) = split(&ds, 0.3, seed, seed % 2 == 0).unwrap();
            let mut all: Vec<_> = tr.sample_ids.iter().chain(&te.sample_ids).cloned().collect();
            all.sort();
            assert_eq!(all, ds.sample_ids);
        }
    }
}
