//! Value-level kernels shared by the tape's forward pass and by callers that
//! only need numbers.

use rand::Rng;

use super::tensor::{Tensor2, COSINE_EPS};
use crate::error::{MoiraError, Result};

pub const DEFAULT_LEAKY_SLOPE: f64 = 0.01;

pub fn leaky_relu(x: &Tensor2, slope: f64) -> Tensor2 {
    x.map(|v| if v > 0.0 { v } else { slope * v })
}

/// Samples an inverted-dropout mask: each entry is 0 with probability `p`,
/// otherwise `1 / (1 - p)`.
pub fn dropout_mask<R: Rng + ?Sized>(rows: usize, cols: usize, p: f64, rng: &mut R) -> Result<Tensor2> {
    check_probability(p)?;
    let keep = 1.0 / (1.0 - p);
    Ok(Tensor2::from_fn(rows, cols, |_, _| {
        if rng.random::<f64>() < p {
            0.0
        } else {
            keep
        }
    }))
}

pub fn dropout<R: Rng + ?Sized>(x: &Tensor2, p: f64, training: bool, rng: &mut R) -> Result<Tensor2> {
    check_probability(p)?;
    if !training || p == 0.0 {
        return Ok(x.clone());
    }
    let mask = dropout_mask(x.rows(), x.cols(), p, rng)?;
    x.zip_map(&mask, |a, m| a * m)
}

pub(crate) fn check_probability(p: f64) -> Result<()> {
    if !(0.0..1.0).contains(&p) {
        return Err(MoiraError::InvalidProbability(p));
    }
    Ok(())
}

/// Row softmax with one flag per column; `true` means the column takes part.
pub fn row_softmax(x: &Tensor2, col_mask: &[bool]) -> Result<Tensor2> {
    if col_mask.len() != x.cols() {
        return Err(MoiraError::dim("row_softmax", x.shape(), (1, col_mask.len())));
    }
    let mask: Vec<bool> = (0..x.rows()).flat_map(|_| col_mask.iter().copied()).collect();
    masked_row_softmax(x, &mask)
}

/// Row softmax with a per-element mask (row-major, same shape as `x`).
/// Masked entries come out as exactly 0.
pub fn masked_row_softmax(x: &Tensor2, mask: &[bool]) -> Result<Tensor2> {
    if mask.len() != x.len() {
        return Err(MoiraError::dim("masked_row_softmax", x.shape(), (mask.len(), 1)));
    }
    let cols = x.cols();
    let mut out = Tensor2::zeros(x.rows(), cols);
    for r in 0..x.rows() {
        let m = &mask[r * cols..(r + 1) * cols];
        let row = x.row(r);
        let max = row
            .iter()
            .zip(m)
            .filter(|(_, &keep)| keep)
            .map(|(&v, _)| v)
            .fold(f64::NEG_INFINITY, f64::max);
        if max == f64::NEG_INFINITY {
            return Err(MoiraError::EmptySupport(r));
        }
        let orow = out.row_mut(r);
        let mut total = 0.0;
        for ((o, &v), &keep) in orow.iter_mut().zip(row).zip(m) {
            if keep {
                *o = (v - max).exp();
                total += *o;
            }
        }
        for o in orow.iter_mut() {
            *o /= total;
        }
    }
    Ok(out)
}

pub fn row_log_softmax(x: &Tensor2) -> Tensor2 {
    let mut out = x.clone();
    for r in 0..x.rows() {
        let row = out.row_mut(r);
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
        for v in row.iter_mut() {
            *v -= lse;
        }
    }
    out
}

/// Pairwise cosine similarity between the rows of `a` and the rows of `b`.
pub fn cosine_matrix(a: &Tensor2, b: &Tensor2) -> Result<Tensor2> {
    let dots = a.matmul_t(b)?;
    let na = row_norms(a);
    let nb = row_norms(b);
    Ok(Tensor2::from_fn(a.rows(), b.rows(), |i, j| {
        dots.get(i, j) / (na[i] * nb[j]).max(COSINE_EPS)
    }))
}

pub(crate) fn row_norms(a: &Tensor2) -> Vec<f64> {
    (0..a.rows())
        .map(|r| a.row(r).iter().map(|v| v * v).sum::<f64>().sqrt())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn leaky_relu_examples() {
        let x = Tensor2::row_vector(vec![1.0, 0.0, -2.0]);
        let y = leaky_relu(&x, 0.01);
        assert_eq!(y.values(), &[1.0, 0.0, -0.02]);
        assert_eq!(leaky_relu(&Tensor2::scalar(0.0), 0.3).item().unwrap(), 0.0);
    }

    #[test]
    fn dropout_identity_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = Tensor2::from_fn(3, 4, |i, j| (i * j) as f64 - 2.5);
        assert_eq!(dropout(&x, 0.7, false, &mut rng).unwrap(), x);
        assert_eq!(dropout(&x, 0.0, true, &mut rng).unwrap(), x);
        assert!(matches!(
            dropout(&x, 1.0, true, &mut rng),
            Err(MoiraError::InvalidProbability(_))
        ));
    }

    #[test]
    fn dropout_preserves_expectation() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let small = dropout(&Tensor2::ones(1, 10_000), 0.5, true, &mut rng).unwrap();
        let mean = small.sum() / 10_000.0;
        assert!((0.97..=1.03).contains(&mean), "{mean}");

        let big = dropout(&Tensor2::ones(1000, 1000), 0.5, true, &mut rng).unwrap();
        let mean = big.sum() / 1e6;
        assert!((mean - 1.0).abs() < 0.01, "{mean}");
    }

    #[test]
    fn softmax_examples() {
        let y = row_softmax(&Tensor2::row_vector(vec![0.0, 0.0]), &[true, true]).unwrap();
        assert_eq!(y.values(), &[0.5, 0.5]);
        let y = row_softmax(&Tensor2::row_vector(vec![3.0, -7.0]), &[true, false]).unwrap();
        assert_eq!(y.values(), &[1.0, 0.0]);
        let y = row_softmax(&Tensor2::row_vector(vec![2f64.ln(), 0.0]), &[true, true]).unwrap();
        assert!((y.get(0, 0) - 2.0 / 3.0).abs() < 1e-15);
        assert!((y.get(0, 1) - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn softmax_all_masked_is_error() {
        let err = row_softmax(&Tensor2::zeros(2, 2), &[false, false]).unwrap_err();
        assert!(matches!(err, MoiraError::EmptySupport(0)));
    }

    proptest! {
        #[test]
        fn softmax_sums_to_one_and_is_shift_invariant(
            vals in prop::collection::vec(-30.0f64..30.0, 12),
            mask in prop::collection::vec(any::<bool>(), 12),
            shift in -50.0f64..50.0,
        ) {
            let x = Tensor2::new(3, 4, vals).unwrap();
            let mut mask = mask;
            for r in 0..3 {
                if !mask[r * 4..r * 4 + 4].iter().any(|&b| b) {
                    mask[r * 4] = true;
                }
            }
            let y = masked_row_softmax(&x, &mask).unwrap();
            let shifted = Tensor2::from_fn(3, 4, |i, j| {
                if mask[i * 4 + j] { x.get(i, j) + shift } else { x.get(i, j) }
            });
            let ys = masked_row_softmax(&shifted, &mask).unwrap();
            for r in 0..3 {
                let s: f64 = y.row(r).iter().sum();
                prop_assert!((s - 1.0).abs() < 1e-12);
                for c in 0..4 {
                    if !mask[r * 4 + c] {
                        prop_assert_eq!(y.get(r, c), 0.0);
                    }
                    prop_assert!((y.get(r, c) - ys.get(r, c)).abs() < 1e-12);
                }
            }
        }

        #[test]
        fn cosine_scale_and_bound(
            a in prop::collection::vec(-5.0f64..5.0, 6),
            b in prop::collection::vec(-5.0f64..5.0, 6),
            c in 1e-3f64..1e3,
        ) {
            let norm: f64 = a.iter().map(|v| v * v).sum::<f64>().sqrt();
            prop_assume!(norm > 1e-3);
            let scaled: Vec<f64> = a.iter().map(|v| v * c).collect();
            let s = super::super::tensor::cosine_sim(&a, &scaled).unwrap();
            prop_assert!((s - 1.0).abs() < 1e-12);
            let t = super::super::tensor::cosine_sim(&a, &b).unwrap();
            prop_assert!(t.abs() <= 1.0 + 1e-12);
        }
    }
}
