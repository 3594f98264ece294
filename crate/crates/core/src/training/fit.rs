use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{pretrain, PretrainReport, TrainConfig};
use crate::data::MaskedDataset;
use crate::error::{MoiraError, Result};
use crate::metrics::{argmax, Metrics};
use crate::model::{dataset_inputs, forward_batch, Model, ModelConfig};
use crate::numerics::{adam_step, AdamState, Tape};
use crate::objective::objective_var;
use crate::rng;

/// Training loss of one epoch, recorded before that epoch's update.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochLoss {
    pub epoch: usize,
    pub total: f64,
    pub pred: f64,
    pub aux: f64,
    pub clip: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub seed: u64,
    pub metrics: Metrics,
    pub train_accuracy: f64,
    pub n_train: usize,
    pub n_test: usize,
    pub pretrain: Option<PretrainReport>,
    pub loss_trace: Vec<EpochLoss>,
    pub checkpoint_path: Option<String>,
}

#[derive(Debug, Clone)]
pub struct FitOutput {
    pub model: Model,
    pub pretrain: Option<PretrainReport>,
    pub loss_trace: Vec<EpochLoss>,
}

/// `base` with its modality list and class count taken from `ds`.
pub fn model_config_for(base: &ModelConfig, ds: &MaskedDataset) -> ModelConfig {
    base.clone().with_modalities(&ds.modality_names(), &ds.input_dims(), ds.n_classes)
}

/// One full-batch Adam step on the total objective.
pub fn train_epoch<R: Rng + ?Sized>(
    model: &mut Model,
    ds: &MaskedDataset,
    cfg: &TrainConfig,
    state: &mut AdamState,
    epoch: usize,
    rng: &mut R,
) -> Result<EpochLoss> {
    let mut tape = Tape::new();
    let p = model.params.bind(&mut tape);
    let rows: Vec<usize> = (0..ds.n_samples()).collect();
    let inputs = dataset_inputs(&mut tape, ds, &rows);
    let fwd = forward_batch(&mut tape, &p, &model.config, &inputs, rows.len(), true, rng)?;
    let loss = objective_var(&mut tape, &fwd, &ds.labels, &cfg.objective)?;
    let grads = tape.backward(loss.total)?;
    let g: Vec<_> = p.iter().iter().map(|&&v| grads.get_or_zeros(v, tape.value(v))).collect();
    let c = loss.components(&tape);
    let out = EpochLoss {
        epoch,
        total: tape.value(loss.total).values()[0],
        pred: c.pred,
        aux: c.aux,
        clip: c.clip,
    };
    adam_step(&mut model.params.iter_mut(), &g, state, cfg.lr, cfg.weight_decay)?;
    if !model.params.is_finite() {
        return Err(MoiraError::Contract(format!("parameters became non-finite at epoch {epoch}")));
    }
    Ok(out)
}

/// Silences, initializes, optionally pretrains, then trains for
/// `cfg.epochs` full-batch epochs.
pub fn fit(train: &MaskedDataset, model_cfg: &ModelConfig, cfg: &TrainConfig) -> Result<FitOutput> {
    cfg.check_runnable()?;
    let train = train.silence(&cfg.silenced_modalities)?;
    if train.n_samples() == 0 {
        return Err(MoiraError::Contract("training set is empty".into()));
    }
    let mut model = Model::new(model_config_for(model_cfg, &train), cfg.seed)?;
    let pretrain = if cfg.pretrain {
        Some(pretrain(&mut model, &train, cfg)?)
    } else {
        None
    };
    let mut state = AdamState::new(model.params.iter()).with_decay(cfg.weight_decay_mode);
    let mut rng = rng::stream(cfg.seed, "dropout");
    let mut loss_trace = Vec::with_capacity(cfg.epochs);
    for epoch in 1..=cfg.epochs {
        loss_trace.push(train_epoch(&mut model, &train, cfg, &mut state, epoch, &mut rng)?);
    }
    Ok(FitOutput {
        model,
        pretrain,
        loss_trace,
    })
}

/// Fits on `train` and evaluates on `test`, both with the configured
/// modalities silenced.
pub fn train(
    train: &MaskedDataset,
    test: &MaskedDataset,
    model_cfg: &ModelConfig,
    cfg: &TrainConfig,
) -> Result<(Model, RunResult)> {
    let fitted = fit(train, model_cfg, cfg)?;
    let train = train.silence(&cfg.silenced_modalities)?;
    let test = test.silence(&cfg.silenced_modalities)?;
    if test.n_samples() == 0 {
        return Err(MoiraError::Contract("test set is empty".into()));
    }
    let metrics = Metrics::evaluate(&fitted.model.predict_dataset(&test)?, &test.labels)?;
    let train_probs = fitted.model.predict_dataset(&train)?;
    let hits = (0..train.n_samples())
        .filter(|&i| argmax(train_probs.row(i)) == train.labels[i])
        .count();
    let result = RunResult {
        seed: cfg.seed,
        metrics,
        train_accuracy: hits as f64 / train.n_samples() as f64,
        n_train: train.n_samples(),
        n_test: test.n_samples(),
        pretrain: fitted.pretrain,
        loss_trace: fitted.loss_trace,
        checkpoint_path: None,
    };
    Ok((fitted.model, result))
}
