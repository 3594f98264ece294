use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::{TrainConfig, PRETRAIN_TOLERANCE};
use crate::data::MaskedDataset;
use crate::error::Result;
use crate::model::{decode_var, encode_var, Model};
use crate::numerics::{adam_step, AdamState, Tape, Tensor2};
use crate::objective::loss_recon_var;
use crate::rng;

/// Modalities with fewer present training samples keep their random init.
pub const PRETRAIN_MIN_SAMPLES: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PretrainModality {
    pub name: String,
    pub skipped: bool,
    pub n_train: usize,
    pub n_val: usize,
    /// Validation MSE before any update; `None` when skipped.
    pub initial_val_mse: Option<f64>,
    pub best_val_mse: Option<f64>,
    /// Epoch whose parameters were restored; 0 means the initialization.
    pub best_epoch: usize,
    pub stopped_epoch: usize,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct PretrainReport {
    pub modalities: Vec<PretrainModality>,
}

/// Trains each modality's encoder and decoder as an autoencoder on the
/// present rows of `train`, stopping early on a held-out reconstruction
/// MSE and restoring the best parameters.
pub fn pretrain(model: &mut Model, train: &MaskedDataset, cfg: &TrainConfig) -> Result<PretrainReport> {
    cfg.check_runnable()?;
    model.check_dataset(train)?;
    let mut report = PretrainReport::default();
    for m in 0..model.n_modalities() {
        report.modalities.push(pretrain_modality(model, m, train, cfg)?);
    }
    Ok(report)
}

fn pretrain_modality(model: &mut Model, m: usize, train: &MaskedDataset, cfg: &TrainConfig) -> Result<PretrainModality> {
    let name = model.params.modalities[m].name.clone();
    let mut rows = train.present_indices(m);
    if rows.len() < PRETRAIN_MIN_SAMPLES {
        log::warn!(
            "modality `{name}` has {} training samples (< {PRETRAIN_MIN_SAMPLES}); skipping pretraining",
            rows.len()
        );
        return Ok(PretrainModality {
            name,
            skipped: true,
            n_train: rows.len(),
            n_val: 0,
            initial_val_mse: None,
            best_val_mse: None,
            best_epoch: 0,
            stopped_epoch: 0,
        });
    }
    rows.shuffle(&mut rng::stream(cfg.seed, &format!("pretrain/{name}/split")));
    let n_val = ((cfg.pretrain_val_fraction * rows.len() as f64).round() as usize).clamp(1, rows.len() - 1);
    let (val, fit) = rows.split_at(n_val);
    let (mut val, mut fit) = (val.to_vec(), fit.to_vec());
    val.sort_unstable();
    fit.sort_unstable();
    let matrix = &train.modalities[m].matrix;
    let x_fit = matrix.gather_rows(&fit);
    let x_val = matrix.gather_rows(&val);

    let mut dropout_rng = rng::stream(cfg.seed, &format!("pretrain/{name}/dropout"));
    let mut state = AdamState::new(model.params.modalities[m].autoencoder()).with_decay(cfg.weight_decay_mode);
    let initial = val_mse(model, m, &x_val)?;
    let mut best = initial;
    let mut best_params: Vec<Tensor2> = model.params.modalities[m].autoencoder().into_iter().cloned().collect();
    let mut best_epoch = 0;
    let mut since_best = 0;
    let mut epoch = 0;
    while epoch < cfg.pretrain_max_epochs {
        epoch += 1;
        let grads = {
            let mp = &model.params.modalities[m];
            let mut tape = Tape::new();
            let enc = mp.encoder.bind(&mut tape);
            let dec = mp.decoder.bind(&mut tape);
            let x = tape.leaf(x_fit.clone());
            let z = encode_var(&mut tape, &enc, x, &model.config, true, &mut dropout_rng)?;
            let xh = decode_var(&mut tape, &dec, z, &model.config)?;
            let loss = loss_recon_var(&mut tape, xh, x)?;
            let g = tape.backward(loss)?;
            let vars = [enc.w1, enc.b1, enc.w2, enc.b2, dec.w1, dec.b1, dec.w2, dec.b2];
            vars.iter().map(|&v| g.get_or_zeros(v, tape.value(v))).collect::<Vec<_>>()
        };
        adam_step(
            &mut model.params.modalities[m].autoencoder_mut(),
            &grads,
            &mut state,
            cfg.lr,
            cfg.weight_decay,
        )?;
        let v = val_mse(model, m, &x_val)?;
        if v < best - PRETRAIN_TOLERANCE {
            best = v;
            best_epoch = epoch;
            since_best = 0;
            best_params = model.params.modalities[m].autoencoder().into_iter().cloned().collect();
        } else {
            since_best += 1;
            if since_best >= cfg.pretrain_patience {
                break;
            }
        }
    }
    for (slot, p) in model.params.modalities[m].autoencoder_mut().into_iter().zip(best_params) {
        *slot = p;
    }
    log::debug!("pretrained `{name}`: val MSE {initial:.6} -> {best:.6} (epoch {best_epoch}, stopped {epoch})");
    Ok(PretrainModality {
        name,
        skipped: false,
        n_train: fit.len(),
        n_val: val.len(),
        initial_val_mse: Some(initial),
        best_val_mse: Some(best),
        best_epoch,
        stopped_epoch: epoch,
    })
}

fn val_mse(model: &Model, m: usize, x: &Tensor2) -> Result<f64> {
    let mp = &model.params.modalities[m];
    let mut tape = Tape::new();
    let enc = mp.encoder.bind(&mut tape);
    let dec = mp.decoder.bind(&mut tape);
    let xv = tape.leaf(x.clone());
    let mut unused = rng::stream(0, "eval");
    let z = encode_var(&mut tape, &enc, xv, &model.config, false, &mut unused)?;
    let xh = decode_var(&mut tape, &dec, z, &model.config)?;
    let loss = loss_recon_var(&mut tape, xh, xv)?;
    Ok(tape.value(loss).values()[0])
}
