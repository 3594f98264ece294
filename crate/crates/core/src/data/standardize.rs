use serde::{Deserialize, Serialize};

use crate::error::{MoiraError, Result};
use crate::numerics::Tensor2;

/// Per-feature mean and (population) standard deviation. A zero `std`
/// marks a constant feature, which standardizes to 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StandardizeStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

/// Fits z-score statistics on the listed rows of `matrix`.
pub fn standardize_fit(matrix: &Tensor2, rows: &[usize]) -> Result<StandardizeStats> {
    if rows.is_empty() {
        return Err(MoiraError::Contract("standardize_fit needs at least one row".into()));
    }
    let p = matrix.cols();
    let n = rows.len() as f64;
    let mut mean = vec![0.0; p];
    for &i in rows {
        for (m, x) in mean.iter_mut().zip(matrix.row(i)) {
            *m += x;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n);
    let mut var = vec![0.0; p];
    for &i in rows {
        for ((v, x), m) in var.iter_mut().zip(matrix.row(i)).zip(&mean) {
            *v += (x - m).powi(2);
        }
    }
    let std = var
        .iter()
        .zip(&mean)
        .map(|(v, m)| {
            let s = (v / n).sqrt();
            if s <= 1e-12 * m.abs() {
                0.0
            } else {
                s
            }
        })
        .collect();
    Ok(StandardizeStats { mean, std })
}

/// Applies `stats` to the listed rows in place; other rows are left untouched.
pub fn standardize_apply(matrix: &mut Tensor2, rows: &[usize], stats: &StandardizeStats) -> Result<()> {
    if matrix.cols() != stats.mean.len() {
        return Err(MoiraError::dim(
            "standardize_apply",
            matrix.shape(),
            (matrix.rows(), stats.mean.len()),
        ));
    }
    for &i in rows {
        for ((x, m), s) in matrix.row_mut(i).iter_mut().zip(&stats.mean).zip(&stats.std) {
            *x = if *s == 0.0 { 0.0 } else { (*x - m) / s };
        }
    }
    Ok(())
}
