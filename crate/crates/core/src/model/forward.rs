use rand::Rng;

use super::params::{BoundParams, Gate, GateKind, Mlp, ModelConfig};
use crate::data::MaskedDataset;
use crate::error::{MoiraError, Result};
use crate::numerics::{Tape, Tensor2, Var};

/// The rows of one modality that take part in a batch.
#[derive(Debug, Clone)]
pub struct ModalityInput {
    /// `n_m × input_dim`.
    pub rows: Var,
    /// Batch row of each input row, strictly ascending.
    pub positions: Vec<usize>,
}

/// Every intermediate of a batched forward pass, as tape nodes.
#[derive(Debug, Clone)]
pub struct BatchForward {
    pub n: usize,
    /// `n_m × d` embeddings for modalities present in the batch.
    pub embeddings: Vec<Option<Var>>,
    pub positions: Vec<Vec<usize>>,
    /// `n × M` gating scores (0 where absent).
    pub scores: Var,
    /// `n × M` gate weights, exactly 0 where absent.
    pub alpha: Var,
    /// Presence mask the gate used, row-major `n × M`.
    pub mask: Vec<bool>,
    pub aggregate: Var,
    pub logits: Var,
    pub probs: Var,
    /// Predictor applied to each modality's own embeddings.
    pub modality_logits: Vec<Option<Var>>,
    pub modality_probs: Vec<Option<Var>>,
}

/// Two layers, each LeakyReLU then dropout.
pub fn encode_var<R: Rng + ?Sized>(
    tape: &mut Tape,
    enc: &Mlp<Var>,
    x: Var,
    cfg: &ModelConfig,
    training: bool,
    rng: &mut R,
) -> Result<Var> {
    let h = tape.matmul(x, enc.w1)?;
    let h = tape.add_row(h, enc.b1)?;
    let h = tape.leaky_relu(h, cfg.leaky_slope);
    let h = tape.dropout(h, cfg.dropout, training, rng)?;
    let z = tape.matmul(h, enc.w2)?;
    let z = tape.add_row(z, enc.b2)?;
    let z = tape.leaky_relu(z, cfg.leaky_slope);
    tape.dropout(z, cfg.dropout, training, rng)
}

/// LeakyReLU hidden layer, linear output, no dropout.
pub fn decode_var(tape: &mut Tape, dec: &Mlp<Var>, z: Var, cfg: &ModelConfig) -> Result<Var> {
    let h = tape.matmul(z, dec.w1)?;
    let h = tape.add_row(h, dec.b1)?;
    let h = tape.leaky_relu(h, cfg.leaky_slope);
    let x = tape.matmul(h, dec.w2)?;
    tape.add_row(x, dec.b2)
}

/// Pre-softmax class scores.
pub fn predictor_logits<R: Rng + ?Sized>(
    tape: &mut Tape,
    pred: &Mlp<Var>,
    z: Var,
    cfg: &ModelConfig,
    training: bool,
    rng: &mut R,
) -> Result<Var> {
    let h = tape.matmul(z, pred.w1)?;
    let h = tape.add_row(h, pred.b1)?;
    let h = tape.leaky_relu(h, cfg.leaky_slope);
    let h = tape.dropout(h, cfg.dropout, training, rng)?;
    let o = tape.matmul(h, pred.w2)?;
    tape.add_row(o, pred.b2)
}

/// `n_m × 1` gating scores for one modality's embeddings.
pub fn gate_scores(tape: &mut Tape, gate: &Gate<Var>, z: Var, kind: GateKind) -> Result<Var> {
    match kind {
        GateKind::LinearHead => {
            let s = tape.matmul(z, gate.u)?;
            tape.add_row(s, gate.c)
        }
        GateKind::Scalar => {
            let ones = tape.leaf(Tensor2::ones(tape.value(z).rows(), 1));
            tape.matmul(ones, gate.c)
        }
    }
}

/// Encoders → masked gate → weighted sum → shared predictor, for a batch of
/// `n` samples. Rows of absent modalities are never touched.
pub fn forward_batch<R: Rng + ?Sized>(
    tape: &mut Tape,
    params: &BoundParams,
    cfg: &ModelConfig,
    inputs: &[Option<ModalityInput>],
    n: usize,
    training: bool,
    rng: &mut R,
) -> Result<BatchForward> {
    let n_mod = params.modalities.len();
    if inputs.len() != n_mod {
        return Err(MoiraError::dim("forward_batch", (inputs.len(), 0), (n_mod, 0)));
    }
    let mut mask = vec![false; n * n_mod];
    let mut embeddings = Vec::with_capacity(n_mod);
    let mut positions = Vec::with_capacity(n_mod);
    let mut score_cols = Vec::with_capacity(n_mod);
    for (m, input) in inputs.iter().enumerate() {
        let mp = &params.modalities[m];
        match input {
            Some(inp) if !inp.positions.is_empty() => {
                if inp.positions.windows(2).any(|w| w[0] >= w[1]) || inp.positions[inp.positions.len() - 1] >= n {
                    return Err(MoiraError::Contract(format!(
                        "positions for modality `{}` must be ascending and < {n}",
                        mp.name
                    )));
                }
                for &i in &inp.positions {
                    mask[i * n_mod + m] = true;
                }
                let z = encode_var(tape, &mp.encoder, inp.rows, cfg, training, rng)?;
                let s = gate_scores(tape, &mp.gate, z, cfg.gate)?;
                score_cols.push(tape.scatter_rows(s, &inp.positions, n)?);
                embeddings.push(Some(z));
                positions.push(inp.positions.clone());
            }
            _ => {
                score_cols.push(tape.leaf(Tensor2::zeros(n, 1)));
                embeddings.push(None);
                positions.push(Vec::new());
            }
        }
    }
    let scores = tape.hcat(&score_cols)?;
    let alpha = tape.masked_softmax(scores, &mask)?;

    let mut aggregate: Option<Var> = None;
    for m in 0..n_mod {
        let Some(z) = embeddings[m] else { continue };
        let full = tape.scatter_rows(z, &positions[m], n)?;
        let w = tape.column(alpha, m)?;
        let part = tape.mul_column(full, w)?;
        aggregate = Some(match aggregate {
            Some(acc) => tape.add(acc, part)?,
            None => part,
        });
    }
    let aggregate = aggregate.ok_or(MoiraError::EmptySupport(0))?;

    let logits = predictor_logits(tape, &params.predictor, aggregate, cfg, training, rng)?;
    let probs = tape.softmax(logits)?;

    let mut modality_logits = Vec::with_capacity(n_mod);
    let mut modality_probs = Vec::with_capacity(n_mod);
    for z in &embeddings {
        match z {
            Some(z) => {
                let l = predictor_logits(tape, &params.predictor, *z, cfg, training, rng)?;
                modality_probs.push(Some(tape.softmax(l)?));
                modality_logits.push(Some(l));
            }
            None => {
                modality_logits.push(None);
                modality_probs.push(None);
            }
        }
    }

    Ok(BatchForward {
        n,
        embeddings,
        positions,
        scores,
        alpha,
        mask,
        aggregate,
        logits,
        probs,
        modality_logits,
        modality_probs,
    })
}

/// Records the present rows of `rows` (dataset indices) as tape inputs.
pub fn dataset_inputs(tape: &mut Tape, ds: &MaskedDataset, rows: &[usize]) -> Vec<Option<ModalityInput>> {
    (0..ds.n_modalities())
        .map(|m| {
            let (positions, src): (Vec<usize>, Vec<usize>) = rows
                .iter()
                .enumerate()
                .filter(|(_, &i)| ds.presence[i][m])
                .map(|(k, &i)| (k, i))
                .unzip();
            if positions.is_empty() {
                return None;
            }
            let x = ds.modalities[m].matrix.gather_rows(&src);
            Some(ModalityInput {
                rows: tape.leaf(x),
                positions,
            })
        })
        .collect()
}
