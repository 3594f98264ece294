use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::dataset::{MaskedDataset, Modality};
use crate::error::{MoiraError, Result};
use crate::numerics::Tensor2;
use crate::rng::{self, RunRng};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthModality {
    pub name: String,
    pub feature_dim: usize,
    #[serde(default = "default_noise")]
    pub noise_std: f64,
    #[serde(default)]
    pub missing_rate: f64,
    /// When set, only these feature columns carry signal and the rest are
    /// pure noise. Signal column `t` loads on the direction separating class
    /// `t mod C` from the others, with a random sign and unit norm, so every
    /// listed feature is class-informative.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub signal_features: Option<Vec<usize>>,
}

fn default_noise() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthConfig {
    pub n_samples: usize,
    #[serde(default = "default_classes")]
    pub n_classes: usize,
    pub latent_dim: usize,
    pub modalities: Vec<SynthModality>,
    pub class_separation: f64,
    #[serde(default)]
    pub seed: u64,
}

fn default_classes() -> usize {
    2
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_classes < 2 {
            return Err(MoiraError::config("n_classes", "must be >= 2"));
        }
        if self.n_samples < self.n_classes {
            return Err(MoiraError::config("n_samples", "must be >= n_classes"));
        }
        if self.latent_dim == 0 {
            return Err(MoiraError::config("latent_dim", "must be >= 1"));
        }
        if self.n_classes > self.latent_dim {
            return Err(MoiraError::config(
                "latent_dim",
                "need latent_dim >= n_classes for orthogonal class directions",
            ));
        }
        if !(self.class_separation.is_finite() && self.class_separation >= 0.0) {
            return Err(MoiraError::config("class_separation", "must be finite and >= 0"));
        }
        if self.modalities.is_empty() {
            return Err(MoiraError::config("modalities", "at least one modality required"));
        }
        for (k, m) in self.modalities.iter().enumerate() {
            let field = |f: &str| format!("modalities[{k}].{f}");
            if m.name.is_empty() || self.modalities[..k].iter().any(|o| o.name == m.name) {
                return Err(MoiraError::config(field("name"), "must be non-empty and unique"));
            }
            if m.feature_dim == 0 {
                return Err(MoiraError::config(field("feature_dim"), "must be >= 1"));
            }
            if !(m.noise_std.is_finite() && m.noise_std >= 0.0) {
                return Err(MoiraError::config(field("noise_std"), "must be finite and >= 0"));
            }
            if !(0.0..1.0).contains(&m.missing_rate) {
                return Err(MoiraError::config(field("missing_rate"), "must lie in [0, 1)"));
            }
            if let Some(sig) = &m.signal_features {
                if sig.iter().any(|&j| j >= m.feature_dim) {
                    return Err(MoiraError::config(field("signal_features"), "index out of range"));
                }
            }
        }
        Ok(())
    }
}

fn gaussian(rng: &mut RunRng) -> f64 {
    StandardNormal.sample(rng)
}

/// `count` orthonormal directions in `dim` dimensions (Gram–Schmidt on
/// Gaussian draws).
fn orthonormal(count: usize, dim: usize, rng: &mut RunRng) -> Vec<Vec<f64>> {
    let mut out: Vec<Vec<f64>> = Vec::with_capacity(count);
    while out.len() < count {
        let mut v: Vec<f64> = (0..dim).map(|_| gaussian(rng)).collect();
        for q in &out {
            let d: f64 = v.iter().zip(q).map(|(a, b)| a * b).sum();
            v.iter_mut().zip(q).for_each(|(a, b)| *a -= d * b);
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-6 {
            v.iter_mut().for_each(|x| *x /= norm);
            out.push(v);
        }
    }
    out
}

/// Unit vectors from the centre of the class means towards each class mean.
fn class_directions(means: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let k = means[0].len();
    let centre: Vec<f64> = (0..k).map(|r| means.iter().map(|m| m[r]).sum::<f64>() / means.len() as f64).collect();
    means
        .iter()
        .map(|m| {
            let d: Vec<f64> = m.iter().zip(&centre).map(|(a, b)| a - b).collect();
            let norm = d.iter().map(|x| x * x).sum::<f64>().sqrt().max(f64::MIN_POSITIVE);
            d.iter().map(|x| x / norm).collect()
        })
        .collect()
}

/// Draws a correlated multi-modality dataset with class structure in a
/// shared latent space.
///
/// Class `c` has latent mean `class_separation * q_c` for random
/// orthonormal `q_c`; each modality observes a fixed random linear map of the latent
/// vector plus Gaussian noise. Presence is Bernoulli per (sample, modality)
/// and redrawn for samples left with nothing.
pub fn synthesize(cfg: &SynthConfig) -> Result<MaskedDataset> {
    cfg.validate()?;
    let mut rng = rng::stream(cfg.seed, "synth");
    let n = cfg.n_samples;
    let k = cfg.latent_dim;

    let means: Vec<Vec<f64>> = orthonormal(cfg.n_classes, k, &mut rng)
        .into_iter()
        .map(|d| d.iter().map(|x| cfg.class_separation * x).collect())
        .collect();

    let mut labels: Vec<usize> = (0..n).map(|i| i % cfg.n_classes).collect();
    labels.shuffle(&mut rng);

    let latent = Tensor2::from_fn(n, k, |i, j| means[labels[i]][j] + gaussian(&mut rng));

    let scale = 1.0 / (k as f64).sqrt();
    let mut modalities = Vec::with_capacity(cfg.modalities.len());
    for m in &cfg.modalities {
        let mut loading = Tensor2::from_fn(k, m.feature_dim, |_, _| gaussian(&mut rng) * scale);
        if let Some(sig) = &m.signal_features {
            let dirs = class_directions(&means);
            for j in 0..m.feature_dim {
                let pos = sig.iter().position(|&s| s == j);
                let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
                let dir = pos.map(|t| &dirs[t % dirs.len()]);
                for r in 0..k {
                    loading.set(r, j, dir.map_or(0.0, |d| sign * d[r]));
                }
            }
        }
        let mut x = latent.matmul(&loading)?;
        for v in x.values_mut() {
            *v += m.noise_std * gaussian(&mut rng);
        }
        modalities.push((m, x));
    }

    let mut presence = vec![vec![true; cfg.modalities.len()]; n];
    for row in presence.iter_mut() {
        loop {
            for (p, m) in row.iter_mut().zip(&cfg.modalities) {
                *p = rng.random::<f64>() >= m.missing_rate;
            }
            if row.iter().any(|&p| p) {
                break;
            }
        }
    }

    let width = n.to_string().len().max(4);
    let sample_ids: Vec<String> = (0..n).map(|i| format!("s{i:0width$}")).collect();
    let modalities = modalities
        .into_iter()
        .enumerate()
        .map(|(mi, (m, mut x))| {
            for (i, row) in presence.iter().enumerate() {
                if !row[mi] {
                    x.row_mut(i).iter_mut().for_each(|v| *v = 0.0);
                }
            }
            let fw = m.feature_dim.to_string().len().max(3);
            Modality {
                name: m.name.clone(),
                feature_ids: (0..m.feature_dim).map(|j| format!("{}_f{j:0fw$}", m.name)).collect(),
                matrix: x,
            }
        })
        .collect();

    let ds = MaskedDataset {
        modalities,
        sample_ids,
        presence,
        labels,
        n_classes: cfg.n_classes,
    };
    ds.validate()?;
    Ok(ds)
}
