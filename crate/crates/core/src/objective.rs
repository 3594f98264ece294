//! Loss terms and their combination over batches with missing modalities.
//!
//! Each term has a tape form (`*_var`, used for training) and a value form
//! that builds a throwaway tape.

use serde::{Deserialize, Serialize};

use crate::error::{MoiraError, Result};
use crate::model::BatchForward;
use crate::numerics::{Tape, Tensor2, Var};

/// Floor applied inside every logarithm of a probability.
pub const LOG_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ObjectiveConfig {
    pub temperature: f64,
    pub enable_aux: bool,
    pub enable_clip: bool,
    pub lambda_pred: f64,
    pub lambda_aux: f64,
    pub lambda_clip: f64,
}

impl Default for ObjectiveConfig {
    fn default() -> Self {
        Self {
            temperature: 0.07,
            enable_aux: true,
            enable_clip: true,
            lambda_pred: 1.0,
            lambda_aux: 1.0,
            lambda_clip: 1.0,
        }
    }
}

impl ObjectiveConfig {
    /// Prediction loss only.
    pub fn pred_only() -> Self {
        Self {
            enable_aux: false,
            enable_clip: false,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.temperature > 0.0 && self.temperature.is_finite()) {
            return Err(MoiraError::config("objective.temperature", "must be positive and finite"));
        }
        for (field, v) in [
            ("objective.lambda_pred", self.lambda_pred),
            ("objective.lambda_aux", self.lambda_aux),
            ("objective.lambda_clip", self.lambda_clip),
        ] {
            if !v.is_finite() {
                return Err(MoiraError::config(field, "must be finite"));
            }
        }
        Ok(())
    }
}

/// Mean of `-ln max(probs[i, labels[i]], LOG_FLOOR)`.
pub fn loss_pred_var(tape: &mut Tape, probs: Var, labels: &[usize]) -> Result<Var> {
    let p = tape.pick(probs, labels)?;
    let l = tape.ln_clamped(p, LOG_FLOOR);
    let m = tape.mean(l);
    Ok(tape.scale(m, -1.0))
}

/// Mean cross-entropy over every present (sample, modality) pair.
/// `modality_probs[m]` holds rows for the batch rows in `positions[m]`.
/// Returns `None` when no modality has any rows.
pub fn loss_aux_var(
    tape: &mut Tape,
    modality_probs: &[Option<Var>],
    positions: &[Vec<usize>],
    labels: &[usize],
) -> Result<Option<Var>> {
    if modality_probs.len() != positions.len() {
        return Err(MoiraError::dim("loss_aux", (modality_probs.len(), 0), (positions.len(), 0)));
    }
    let mut total: Option<Var> = None;
    let mut count = 0usize;
    for (y, pos) in modality_probs.iter().zip(positions) {
        let Some(y) = *y else { continue };
        let targets = pos
            .iter()
            .map(|&i| {
                labels
                    .get(i)
                    .copied()
                    .ok_or_else(|| MoiraError::Contract(format!("batch row {i} has no label")))
            })
            .collect::<Result<Vec<_>>>()?;
        let p = tape.pick(y, &targets)?;
        let l = tape.ln_clamped(p, LOG_FLOOR);
        let s = tape.sum(l);
        count += pos.len();
        total = Some(match total {
            Some(t) => tape.add(t, s)?,
            None => s,
        });
    }
    Ok(total.map(|t| tape.scale(t, -1.0 / count as f64)))
}

/// Directional contrastive loss from `zm` to `zn` (row-aligned).
pub fn loss_clip_pair_var(tape: &mut Tape, zm: Var, zn: Var, temperature: f64) -> Result<Var> {
    let (nm, nn) = (tape.value(zm).rows(), tape.value(zn).rows());
    if nm != nn {
        return Err(MoiraError::dim("loss_clip_pair", tape.value(zm).shape(), tape.value(zn).shape()));
    }
    if nm == 0 {
        return Err(MoiraError::Contract("loss_clip_pair needs at least one row".into()));
    }
    let sim = tape.cosine(zm, zn)?;
    let logits = tape.scale(sim, 1.0 / temperature);
    let ls = tape.log_softmax(logits);
    let diag: Vec<usize> = (0..nm).collect();
    let d = tape.pick(ls, &diag)?;
    let m = tape.mean(d);
    Ok(tape.scale(m, -1.0))
}

/// Local row indices of the batch rows common to two ascending position lists.
fn common_rows(a: &[usize], b: &[usize]) -> (Vec<usize>, Vec<usize>) {
    let (mut i, mut j) = (0, 0);
    let (mut ia, mut ib) = (Vec::new(), Vec::new());
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                ia.push(i);
                ib.push(j);
                i += 1;
                j += 1;
            }
        }
    }
    (ia, ib)
}

/// Both directions for every modality pair, each on the rows where both
/// modalities are present. Pairs sharing fewer than 2 rows are skipped;
/// `None` when nothing contributes.
pub fn loss_clip_total_var(
    tape: &mut Tape,
    embeddings: &[Option<Var>],
    positions: &[Vec<usize>],
    temperature: f64,
) -> Result<Option<Var>> {
    if embeddings.len() != positions.len() {
        return Err(MoiraError::dim("loss_clip_total", (embeddings.len(), 0), (positions.len(), 0)));
    }
    let mut total: Option<Var> = None;
    for m in 0..embeddings.len() {
        for n in m + 1..embeddings.len() {
            let (Some(zm), Some(zn)) = (embeddings[m], embeddings[n]) else { continue };
            let (im, in_) = common_rows(&positions[m], &positions[n]);
            if im.len() < 2 {
                continue;
            }
            let a = tape.gather_rows(zm, &im)?;
            let b = tape.gather_rows(zn, &in_)?;
            let ab = loss_clip_pair_var(tape, a, b, temperature)?;
            let ba = loss_clip_pair_var(tape, b, a, temperature)?;
            let pair = tape.add(ab, ba)?;
            total = Some(match total {
                Some(t) => tape.add(t, pair)?,
                None => pair,
            });
        }
    }
    Ok(total)
}

/// Mean squared error.
pub fn loss_recon_var(tape: &mut Tape, xhat: Var, x: Var) -> Result<Var> {
    let d = tape.sub(xhat, x)?;
    let sq = tape.mul(d, d)?;
    Ok(tape.mean(sq))
}

/// Tape nodes of each loss term for one batch.
#[derive(Debug, Clone, Copy)]
pub struct LossVars {
    pub pred: Var,
    pub aux: Option<Var>,
    pub clip: Option<Var>,
    pub total: Var,
}

/// Scalar values of each loss term.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LossComponents {
    pub pred: f64,
    pub aux: f64,
    pub clip: f64,
}

impl LossVars {
    pub fn components(&self, tape: &Tape) -> LossComponents {
        let get = |v: Option<Var>| v.map_or(0.0, |v| tape.value(v).values()[0]);
        LossComponents {
            pred: get(Some(self.pred)),
            aux: get(self.aux),
            clip: get(self.clip),
        }
    }
}

/// `λ_pred·L_pred + [aux]·λ_aux·L_aux + [clip]·λ_clip·L_clip`.
pub fn loss_total(c: &LossComponents, cfg: &ObjectiveConfig) -> f64 {
    let mut t = cfg.lambda_pred * c.pred;
    if cfg.enable_aux {
        t += cfg.lambda_aux * c.aux;
    }
    if cfg.enable_clip {
        t += cfg.lambda_clip * c.clip;
    }
    t
}

fn weighted(tape: &mut Tape, v: Var, lambda: f64) -> Var {
    if lambda == 1.0 {
        v
    } else {
        tape.scale(v, lambda)
    }
}

/// Every enabled term of the objective for a batched forward pass.
pub fn objective_var(
    tape: &mut Tape,
    fwd: &BatchForward,
    labels: &[usize],
    cfg: &ObjectiveConfig,
) -> Result<LossVars> {
    if labels.len() != fwd.n {
        return Err(MoiraError::dim("objective", (labels.len(), 1), (fwd.n, 1)));
    }
    let pred = loss_pred_var(tape, fwd.probs, labels)?;
    let mut total = weighted(tape, pred, cfg.lambda_pred);
    let aux = if cfg.enable_aux {
        loss_aux_var(tape, &fwd.modality_probs, &fwd.positions, labels)?
    } else {
        None
    };
    if let Some(a) = aux {
        let w = weighted(tape, a, cfg.lambda_aux);
        total = tape.add(total, w)?;
    }
    let clip = if cfg.enable_clip {
        loss_clip_total_var(tape, &fwd.embeddings, &fwd.positions, cfg.temperature)?
    } else {
        None
    };
    if let Some(c) = clip {
        let w = weighted(tape, c, cfg.lambda_clip);
        total = tape.add(total, w)?;
    }
    Ok(LossVars { pred, aux, clip, total })
}

fn scalar(tape: &Tape, v: Var) -> f64 {
    tape.value(v).values()[0]
}

pub fn loss_pred(probs: &Tensor2, labels: &[usize]) -> Result<f64> {
    let mut tape = Tape::new();
    let p = tape.leaf(probs.clone());
    let l = loss_pred_var(&mut tape, p, labels)?;
    Ok(scalar(&tape, l))
}

/// `preds[i][m]` must be `Some` exactly where `presence[i][m]`.
pub fn loss_aux(preds: &[Vec<Option<Vec<f64>>>], presence: &[Vec<bool>], labels: &[usize]) -> Result<f64> {
    if preds.len() != presence.len() || preds.len() != labels.len() {
        return Err(MoiraError::dim("loss_aux", (preds.len(), 0), (presence.len(), labels.len())));
    }
    let mut total = 0.0;
    let mut count = 0usize;
    for (i, (row, present)) in preds.iter().zip(presence).enumerate() {
        if row.len() != present.len() {
            return Err(MoiraError::dim("loss_aux", (i, row.len()), (i, present.len())));
        }
        for (m, (p, &on)) in row.iter().zip(present).enumerate() {
            match (p, on) {
                (Some(p), true) => {
                    let y = *p.get(labels[i]).ok_or_else(|| {
                        MoiraError::Contract(format!("label {} out of range for {} classes", labels[i], p.len()))
                    })?;
                    total += y.max(LOG_FLOOR).ln();
                    count += 1;
                }
                (Some(_), false) => {
                    return Err(MoiraError::Contract(format!(
                        "prediction supplied for absent modality {m} of sample {i}"
                    )))
                }
                (None, true) => {
                    return Err(MoiraError::Contract(format!(
                        "missing prediction for present modality {m} of sample {i}"
                    )))
                }
                (None, false) => {}
            }
        }
    }
    if count == 0 {
        return Ok(0.0);
    }
    Ok(-total / count as f64)
}

pub fn loss_clip_pair(zm: &Tensor2, zn: &Tensor2, temperature: f64) -> Result<f64> {
    let mut tape = Tape::new();
    let a = tape.leaf(zm.clone());
    let b = tape.leaf(zn.clone());
    let l = loss_clip_pair_var(&mut tape, a, b, temperature)?;
    Ok(scalar(&tape, l))
}

/// `embeddings[m]` has one row per sample; rows where `presence[i][m]` is
/// false are ignored.
pub fn loss_clip_total(embeddings: &[Tensor2], presence: &[Vec<bool>], temperature: f64) -> Result<f64> {
    let mut tape = Tape::new();
    let mut vars = Vec::with_capacity(embeddings.len());
    let mut positions = Vec::with_capacity(embeddings.len());
    for (m, z) in embeddings.iter().enumerate() {
        if z.rows() != presence.len() {
            return Err(MoiraError::dim("loss_clip_total", z.shape(), (presence.len(), z.cols())));
        }
        let pos: Vec<usize> = (0..presence.len()).filter(|&i| presence[i][m]).collect();
        vars.push((!pos.is_empty()).then(|| tape.leaf(z.gather_rows(&pos))));
        positions.push(pos);
    }
    let total = loss_clip_total_var(&mut tape, &vars, &positions, temperature)?;
    Ok(total.map_or(0.0, |v| scalar(&tape, v)))
}

pub fn loss_recon(xhat: &Tensor2, x: &Tensor2) -> Result<f64> {
    let mut tape = Tape::new();
    let a = tape.leaf(xhat.clone());
    let b = tape.leaf(x.clone());
    let l = loss_recon_var(&mut tape, a, b)?;
    Ok(scalar(&tape, l))
}
