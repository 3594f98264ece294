use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{MoiraError, Result};
use crate::numerics::{Tape, Tensor2, Var};
use crate::rng;

/// How the per-sample gating score of a modality is produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GateKind {
    /// `w = uᵀ z + c`, input dependent.
    #[default]
    LinearHead,
    /// `w = c`, one learned constant per modality.
    Scalar,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModalitySpec {
    pub name: String,
    pub input_dim: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub embed_dim: usize,
    /// Encoder/decoder hidden width; `None` means `embed_dim`.
    pub hidden_dim: Option<usize>,
    /// Predictor hidden width; `None` means `embed_dim`.
    pub predictor_hidden_dim: Option<usize>,
    pub dropout: f64,
    pub leaky_slope: f64,
    pub gate: GateKind,
    /// Filled from the dataset.
    pub n_classes: usize,
    /// Filled from the dataset.
    pub modalities: Vec<ModalitySpec>,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            embed_dim: 300,
            hidden_dim: None,
            predictor_hidden_dim: None,
            dropout: 0.5,
            leaky_slope: 0.01,
            gate: GateKind::LinearHead,
            n_classes: 2,
            modalities: Vec::new(),
        }
    }
}

impl ModelConfig {
    pub fn hidden(&self) -> usize {
        self.hidden_dim.unwrap_or(self.embed_dim)
    }

    pub fn predictor_hidden(&self) -> usize {
        self.predictor_hidden_dim.unwrap_or(self.embed_dim)
    }

    pub fn with_modalities(mut self, names: &[&str], input_dims: &[usize], n_classes: usize) -> Self {
        self.modalities = names
            .iter()
            .zip(input_dims)
            .map(|(n, &d)| ModalitySpec {
                name: n.to_string(),
                input_dim: d,
            })
            .collect();
        self.n_classes = n_classes;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.embed_dim == 0 {
            return Err(MoiraError::config("model.embed_dim", "must be >= 1"));
        }
        if self.hidden() == 0 || self.predictor_hidden() == 0 {
            return Err(MoiraError::config("model.hidden_dim", "must be >= 1"));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(MoiraError::config("model.dropout", "must lie in [0, 1)"));
        }
        if !(0.0..1.0).contains(&self.leaky_slope) {
            return Err(MoiraError::config("model.leaky_slope", "must lie in [0, 1)"));
        }
        if self.n_classes < 2 {
            return Err(MoiraError::config("model.n_classes", "must be >= 2"));
        }
        if self.modalities.iter().any(|m| m.input_dim == 0) {
            return Err(MoiraError::config("model.modalities", "input_dim must be >= 1"));
        }
        Ok(())
    }
}

/// Two-layer perceptron weights.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp<T> {
    pub w1: T,
    pub b1: T,
    pub w2: T,
    pub b2: T,
}

/// Gating head: `u` is `d × 1`, `c` is `1 × 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct Gate<T> {
    pub u: T,
    pub c: T,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModalityParams<T> {
    pub name: String,
    pub encoder: Mlp<T>,
    pub decoder: Mlp<T>,
    pub gate: Gate<T>,
}

/// All learnable arrays. `T` is `Tensor2` for stored values and [`Var`] once
/// bound to a tape.
#[derive(Debug, Clone, PartialEq)]
pub struct Params<T> {
    pub modalities: Vec<ModalityParams<T>>,
    pub predictor: Mlp<T>,
}

pub type ModelParams = Params<Tensor2>;
pub type BoundParams = Params<Var>;

impl<T> Mlp<T> {
    fn refs(&self) -> [&T; 4] {
        [&self.w1, &self.b1, &self.w2, &self.b2]
    }

    fn refs_mut(&mut self) -> [&mut T; 4] {
        [&mut self.w1, &mut self.b1, &mut self.w2, &mut self.b2]
    }

    fn map<U>(&self, f: &mut impl FnMut(&T) -> U) -> Mlp<U> {
        Mlp {
            w1: f(&self.w1),
            b1: f(&self.b1),
            w2: f(&self.w2),
            b2: f(&self.b2),
        }
    }
}

impl Mlp<Tensor2> {
    pub fn bind(&self, tape: &mut Tape) -> Mlp<Var> {
        self.map(&mut |t| tape.leaf(t.clone()))
    }
}

const MLP_NAMES: [&str; 4] = ["w1", "b1", "w2", "b2"];

impl<T> Params<T> {
    /// Every array in a fixed order: per modality encoder, decoder, gate;
    /// then the predictor.
    pub fn iter(&self) -> Vec<&T> {
        let mut out = Vec::new();
        for m in &self.modalities {
            out.extend(m.encoder.refs());
            out.extend(m.decoder.refs());
            out.push(&m.gate.u);
            out.push(&m.gate.c);
        }
        out.extend(self.predictor.refs());
        out
    }

    pub fn iter_mut(&mut self) -> Vec<&mut T> {
        let mut out = Vec::new();
        for m in &mut self.modalities {
            out.extend(m.encoder.refs_mut());
            out.extend(m.decoder.refs_mut());
            out.push(&mut m.gate.u);
            out.push(&mut m.gate.c);
        }
        out.extend(self.predictor.refs_mut());
        out
    }

    /// Names aligned with [`Params::iter`].
    pub fn names(&self) -> Vec<String> {
        let mut out = Vec::new();
        for m in &self.modalities {
            for part in ["encoder", "decoder"] {
                out.extend(MLP_NAMES.iter().map(|w| format!("{}.{part}.{w}", m.name)));
            }
            out.push(format!("{}.gate.u", m.name));
            out.push(format!("{}.gate.c", m.name));
        }
        out.extend(MLP_NAMES.iter().map(|w| format!("predictor.{w}")));
        out
    }

    pub fn map<U>(&self, mut f: impl FnMut(&T) -> U) -> Params<U> {
        Params {
            modalities: self
                .modalities
                .iter()
                .map(|m| ModalityParams {
                    name: m.name.clone(),
                    encoder: m.encoder.map(&mut f),
                    decoder: m.decoder.map(&mut f),
                    gate: Gate {
                        u: f(&m.gate.u),
                        c: f(&m.gate.c),
                    },
                })
                .collect(),
            predictor: self.predictor.map(&mut f),
        }
    }

    pub fn modality_index(&self, name: &str) -> Option<usize> {
        self.modalities.iter().position(|m| m.name == name)
    }
}

impl<T> ModalityParams<T> {
    /// Encoder and decoder arrays, in [`Params::iter`] order.
    pub fn autoencoder(&self) -> Vec<&T> {
        let mut out: Vec<&T> = self.encoder.refs().into_iter().collect();
        out.extend(self.decoder.refs());
        out
    }

    /// Encoder and decoder arrays, in [`Params::iter`] order.
    pub fn autoencoder_mut(&mut self) -> Vec<&mut T> {
        let mut out: Vec<&mut T> = self.encoder.refs_mut().into_iter().collect();
        out.extend(self.decoder.refs_mut());
        out
    }
}

impl ModelParams {
    /// Glorot-uniform weights, zero biases. Each modality and the predictor
    /// draw from their own named stream of `seed`.
    pub fn init(cfg: &ModelConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let (d, h, hp, c) = (cfg.embed_dim, cfg.hidden(), cfg.predictor_hidden(), cfg.n_classes);
        let modalities = cfg
            .modalities
            .iter()
            .map(|spec| {
                let mut rng = rng::stream(seed, &format!("init/{}", spec.name));
                ModalityParams {
                    name: spec.name.clone(),
                    encoder: mlp(spec.input_dim, h, d, &mut rng),
                    decoder: mlp(d, h, spec.input_dim, &mut rng),
                    gate: Gate {
                        u: glorot(d, 1, &mut rng),
                        c: Tensor2::zeros(1, 1),
                    },
                }
            })
            .collect();
        let mut rng = rng::stream(seed, "init/predictor");
        Ok(Params {
            modalities,
            predictor: mlp(d, hp, c, &mut rng),
        })
    }

    pub fn bind(&self, tape: &mut Tape) -> BoundParams {
        self.map(|t| tape.leaf(t.clone()))
    }

    pub fn is_finite(&self) -> bool {
        self.iter().iter().all(|t| t.is_finite())
    }

    pub fn to_named(&self) -> BTreeMap<String, Vec<Vec<f64>>> {
        self.names()
            .into_iter()
            .zip(self.iter())
            .map(|(n, t)| (n, t.to_rows()))
            .collect()
    }

    /// Rebuilds params for `cfg` from named arrays, checking every shape.
    pub fn from_named(cfg: &ModelConfig, named: &BTreeMap<String, Vec<Vec<f64>>>) -> Result<Self> {
        let mut params = Self::init(cfg, 0)?;
        let names = params.names();
        if named.len() != names.len() {
            return Err(MoiraError::Contract(format!(
                "checkpoint has {} arrays, model expects {}",
                named.len(),
                names.len()
            )));
        }
        for (name, slot) in names.iter().zip(params.iter_mut()) {
            let rows = named
                .get(name)
                .ok_or_else(|| MoiraError::Contract(format!("checkpoint lacks `{name}`")))?;
            let t = Tensor2::from_rows(rows)?;
            if t.shape() != slot.shape() || !t.is_finite() {
                return Err(MoiraError::dim("checkpoint", t.shape(), slot.shape()));
            }
            *slot = t;
        }
        Ok(params)
    }
}

fn glorot<R: Rng + ?Sized>(fan_in: usize, fan_out: usize, rng: &mut R) -> Tensor2 {
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    Tensor2::from_fn(fan_in, fan_out, |_, _| rng.random_range(-limit..limit))
}

fn mlp<R: Rng + ?Sized>(input: usize, hidden: usize, output: usize, rng: &mut R) -> Mlp<Tensor2> {
    Mlp {
        w1: glorot(input, hidden, rng),
        b1: Tensor2::zeros(1, hidden),
        w2: glorot(hidden, output, rng),
        b2: Tensor2::zeros(1, output),
    }
}
