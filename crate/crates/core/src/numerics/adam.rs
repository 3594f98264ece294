use serde::{Deserialize, Serialize};

use super::tensor::Tensor2;
use crate::error::{MoiraError, Result};

/// How weight decay enters the update.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightDecay {
    /// L2 term `wd * p` added to the gradient before the moment updates.
    #[default]
    Coupled,
    /// `p -= lr * wd * p` applied outside the adaptive step (AdamW).
    Decoupled,
}

#[derive(Debug, Clone)]
pub struct AdamState {
    pub step: u64,
    pub m: Vec<Tensor2>,
    pub v: Vec<Tensor2>,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub decay: WeightDecay,
}

impl AdamState {
    /// Zero moments shaped like `params`, with the usual betas.
    pub fn new<'a>(params: impl IntoIterator<Item = &'a Tensor2>) -> Self {
        let (m, v): (Vec<_>, Vec<_>) = params
            .into_iter()
            .map(|p| (Tensor2::zeros(p.rows(), p.cols()), Tensor2::zeros(p.rows(), p.cols())))
            .unzip();
        Self {
            step: 0,
            m,
            v,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            decay: WeightDecay::Coupled,
        }
    }

    pub fn with_decay(mut self, decay: WeightDecay) -> Self {
        self.decay = decay;
        self
    }
}

/// One bias-corrected Adam update applied in place.
pub fn adam_step(
    params: &mut [&mut Tensor2],
    grads: &[Tensor2],
    state: &mut AdamState,
    lr: f64,
    weight_decay: f64,
) -> Result<()> {
    if params.len() != grads.len() || params.len() != state.m.len() {
        return Err(MoiraError::dim(
            "adam_step",
            (params.len(), grads.len()),
            (state.m.len(), state.v.len()),
        ));
    }
    for ((p, g), m) in params.iter().zip(grads).zip(&state.m) {
        p.same_shape("adam_step", g)?;
        p.same_shape("adam_step", m)?;
    }
    state.step += 1;
    let t = state.step as i32;
    let bc1 = 1.0 - state.beta1.powi(t);
    let bc2 = 1.0 - state.beta2.powi(t);
    let (b1, b2, eps) = (state.beta1, state.beta2, state.eps);

    for (k, p) in params.iter_mut().enumerate() {
        let g = grads[k].values();
        let m = state.m[k].values_mut();
        let v = state.v[k].values_mut();
        for (i, w) in p.values_mut().iter_mut().enumerate() {
            let gi = match state.decay {
                WeightDecay::Coupled => g[i] + weight_decay * *w,
                WeightDecay::Decoupled => g[i],
            };
            m[i] = b1 * m[i] + (1.0 - b1) * gi;
            v[i] = b2 * v[i] + (1.0 - b2) * gi * gi;
            let m_hat = m[i] / bc1;
            let v_hat = v[i] / bc2;
            if state.decay == WeightDecay::Decoupled {
                *w -= lr * weight_decay * *w;
            }
            *w -= lr * m_hat / (v_hat.sqrt() + eps);
        }
    }
    Ok(())
}
