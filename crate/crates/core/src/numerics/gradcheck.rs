//! Central finite differences for checking analytic gradients.

use super::Tensor2;

pub const FD_STEP: f64 = 1e-5;

/// Central-difference gradient of `f` at `x` with step `h`.
pub fn numeric_grad(x: &Tensor2, h: f64, f: &mut dyn FnMut(&Tensor2) -> f64) -> Tensor2 {
    let mut out = Tensor2::zeros(x.rows(), x.cols());
    let mut probe = x.clone();
    for k in 0..x.len() {
        let orig = probe.values()[k];
        probe.values_mut()[k] = orig + h;
        let plus = f(&probe);
        probe.values_mut()[k] = orig - h;
        let minus = f(&probe);
        probe.values_mut()[k] = orig;
        out.values_mut()[k] = (plus - minus) / (2.0 * h);
    }
    out
}

/// Largest `|a - b| / max(|a|, |b|, 1)` over paired elements.
pub fn max_rel_err(a: &Tensor2, b: &Tensor2) -> f64 {
    a.values()
        .iter()
        .zip(b.values())
        .map(|(x, y)| (x - y).abs() / x.abs().max(y.abs()).max(1.0))
        .fold(0.0, f64::max)
}
