//! The fusion network: per-modality encoders and decoders, a masked softmax
//! gate over present modalities, and one predictor shared by the fused and
//! the per-modality embeddings.

mod forward;
mod params;

use std::collections::BTreeMap;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

pub use forward::{
    dataset_inputs, decode_var, encode_var, forward_batch, gate_scores, predictor_logits, BatchForward,
    ModalityInput,
};
pub use params::{
    BoundParams, Gate, GateKind, Mlp, ModalityParams, ModalitySpec, ModelConfig, ModelParams, Params,
};

use crate::data::MaskedDataset;
use crate::error::{MoiraError, Result};
use crate::numerics::{Tape, Tensor2};

pub const CHECKPOINT_FORMAT: &str = "moira-checkpoint/1";

/// Values of one sample's forward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardOutput {
    /// `1 × d` per present modality.
    pub embeddings: Vec<Option<Tensor2>>,
    /// Gate weights; 0 for absent modalities.
    pub alpha: Vec<f64>,
    pub aggregate: Tensor2,
    pub logits: Vec<f64>,
    pub probs: Vec<f64>,
    pub modality_probs: Vec<Option<Vec<f64>>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub config: ModelConfig,
    pub params: ModelParams,
}

impl Model {
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        let params = ModelParams::init(&config, seed)?;
        Ok(Self { config, params })
    }

    pub fn n_modalities(&self) -> usize {
        self.params.modalities.len()
    }

    fn check_modality(&self, m: usize) -> Result<()> {
        if m >= self.n_modalities() {
            return Err(MoiraError::Contract(format!("no modality {m}")));
        }
        Ok(())
    }

    /// Embeds rows of modality `m`'s features.
    pub fn encode<R: Rng + ?Sized>(&self, m: usize, x: &Tensor2, training: bool, rng: &mut R) -> Result<Tensor2> {
        self.check_modality(m)?;
        let mut tape = Tape::new();
        let p = self.params.bind(&mut tape);
        let xv = tape.leaf(x.clone());
        let z = encode_var(&mut tape, &p.modalities[m].encoder, xv, &self.config, training, rng)?;
        Ok(tape.value(z).clone())
    }

    pub fn decode(&self, m: usize, z: &Tensor2) -> Result<Tensor2> {
        self.check_modality(m)?;
        let mut tape = Tape::new();
        let p = self.params.bind(&mut tape);
        let zv = tape.leaf(z.clone());
        let x = decode_var(&mut tape, &p.modalities[m].decoder, zv, &self.config)?;
        Ok(tape.value(x).clone())
    }

    /// Gate weights for one sample given its present embeddings (`1 × d`).
    pub fn gate(&self, embeddings: &[Option<Tensor2>]) -> Result<Vec<f64>> {
        if embeddings.len() != self.n_modalities() {
            return Err(MoiraError::dim("gate", (embeddings.len(), 0), (self.n_modalities(), 0)));
        }
        let mut tape = Tape::new();
        let p = self.params.bind(&mut tape);
        let mut cols = Vec::new();
        let mut mask = Vec::new();
        for (m, z) in embeddings.iter().enumerate() {
            match z {
                Some(z) => {
                    let zv = tape.leaf(z.clone());
                    cols.push(gate_scores(&mut tape, &p.modalities[m].gate, zv, self.config.gate)?);
                    mask.push(true);
                }
                None => {
                    cols.push(tape.leaf(Tensor2::zeros(1, 1)));
                    mask.push(false);
                }
            }
        }
        let s = tape.hcat(&cols)?;
        let a = tape.masked_softmax(s, &mask)?;
        Ok(tape.value(a).values().to_vec())
    }

    /// Class probabilities for each row of `z`.
    pub fn predict<R: Rng + ?Sized>(&self, z: &Tensor2, training: bool, rng: &mut R) -> Result<Tensor2> {
        let mut tape = Tape::new();
        let p = self.params.bind(&mut tape);
        let zv = tape.leaf(z.clone());
        let l = predictor_logits(&mut tape, &p.predictor, zv, &self.config, training, rng)?;
        let y = tape.softmax(l)?;
        Ok(tape.value(y).clone())
    }

    /// Forward pass for one sample. `sample[m]` is `1 × input_dim`; entries
    /// for modalities with `presence[m] == false` are ignored.
    pub fn forward<R: Rng + ?Sized>(
        &self,
        sample: &[Tensor2],
        presence: &[bool],
        training: bool,
        rng: &mut R,
    ) -> Result<ForwardOutput> {
        let n_mod = self.n_modalities();
        if sample.len() != n_mod || presence.len() != n_mod {
            return Err(MoiraError::dim("forward", (sample.len(), presence.len()), (n_mod, n_mod)));
        }
        let mut tape = Tape::new();
        let p = self.params.bind(&mut tape);
        let inputs: Vec<Option<ModalityInput>> = sample
            .iter()
            .zip(presence)
            .map(|(x, &present)| {
                present.then(|| ModalityInput {
                    rows: tape.leaf(x.clone()),
                    positions: vec![0],
                })
            })
            .collect();
        let out = forward_batch(&mut tape, &p, &self.config, &inputs, 1, training, rng)?;
        Ok(ForwardOutput {
            embeddings: out.embeddings.iter().map(|z| z.map(|z| tape.value(z).clone())).collect(),
            alpha: tape.value(out.alpha).values().to_vec(),
            aggregate: tape.value(out.aggregate).clone(),
            logits: tape.value(out.logits).values().to_vec(),
            probs: tape.value(out.probs).values().to_vec(),
            modality_probs: out
                .modality_probs
                .iter()
                .map(|y| y.map(|y| tape.value(y).values().to_vec()))
                .collect(),
        })
    }

    /// Eval-mode class probabilities (`n × C`) for every sample of `ds`.
    pub fn predict_dataset(&self, ds: &MaskedDataset) -> Result<Tensor2> {
        self.check_dataset(ds)?;
        let mut tape = Tape::new();
        let p = self.params.bind(&mut tape);
        let rows: Vec<usize> = (0..ds.n_samples()).collect();
        let inputs = dataset_inputs(&mut tape, ds, &rows);
        let mut unused = crate::rng::stream(0, "eval");
        let out = forward_batch(&mut tape, &p, &self.config, &inputs, rows.len(), false, &mut unused)?;
        Ok(tape.value(out.probs).clone())
    }

    /// Errors unless `ds` has this model's modalities in the same order and widths.
    pub fn check_dataset(&self, ds: &MaskedDataset) -> Result<()> {
        let ok = ds.n_modalities() == self.config.modalities.len()
            && ds
                .modalities
                .iter()
                .zip(&self.config.modalities)
                .all(|(d, s)| d.name == s.name && d.feature_ids.len() == s.input_dim);
        if !ok {
            return Err(MoiraError::Contract(format!(
                "dataset modalities {:?} do not match model {:?}",
                ds.modality_names(),
                self.config.modalities.iter().map(|s| &s.name).collect::<Vec<_>>()
            )));
        }
        Ok(())
    }

    pub fn to_checkpoint(&self, seed: u64) -> Checkpoint {
        Checkpoint {
            format_version: CHECKPOINT_FORMAT.into(),
            seed,
            config: self.config.clone(),
            params: self.params.to_named(),
        }
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        if ck.format_version != CHECKPOINT_FORMAT {
            return Err(MoiraError::config(
                "format_version",
                format!("expected `{CHECKPOINT_FORMAT}`, found `{}`", ck.format_version),
            ));
        }
        let params = ModelParams::from_named(&ck.config, &ck.params)?;
        Ok(Self {
            config: ck.config.clone(),
            params,
        })
    }
}

/// Weighted sum of present embeddings.
pub fn aggregate(embeddings: &[Option<Tensor2>], alpha: &[f64]) -> Result<Tensor2> {
    if embeddings.len() != alpha.len() {
        return Err(MoiraError::dim("aggregate", (embeddings.len(), 0), (alpha.len(), 0)));
    }
    let mut acc: Option<Tensor2> = None;
    for (z, &a) in embeddings.iter().zip(alpha) {
        let Some(z) = z else { continue };
        let part = z.map(|v| v * a);
        match &mut acc {
            Some(t) => t.add_assign(&part)?,
            None => acc = Some(part),
        }
    }
    acc.ok_or(MoiraError::EmptySupport(0))
}

/// Serialized model: config plus named parameter arrays.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format_version: String,
    pub seed: u64,
    pub config: ModelConfig,
    pub params: BTreeMap<String, Vec<Vec<f64>>>,
}

impl Checkpoint {
    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string(self)? + "\n")?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }
}

#[cfg(test)]
mod tests;
