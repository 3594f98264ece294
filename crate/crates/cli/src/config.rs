use std::path::Path;

use clap::Args;
use moira::attribution::AttributionConfig;
use moira::model::ModelConfig;
use moira::training::{PrepareConfig, TrainConfig};
use moira::{MoiraError, Result};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

/// Everything a pipeline command reads from its JSON config.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    /// Base seed: the split uses it directly, run `k` uses `seed + k`.
    pub seed: u64,
    pub runs: usize,
    pub parallel: usize,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub prepare: PrepareConfig,
    pub attribution: AttributionConfig,
    /// Modalities kept by the trimodal ablation rows.
    pub trimodal: Option<Vec<String>>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            runs: 1,
            parallel: 1,
            model: ModelConfig::default(),
            train: TrainConfig::default(),
            prepare: PrepareConfig::default(),
            attribution: AttributionConfig::default(),
            trimodal: None,
        }
    }
}

/// Flags that override the config file.
#[derive(Debug, Clone, Default, Args)]
pub struct Overrides {
    #[arg(long)]
    pub seed: Option<u64>,
    /// Independent runs (attribution campaigns use it as their run count).
    #[arg(long)]
    pub runs: Option<usize>,
    /// Worker threads for independent runs.
    #[arg(long)]
    pub parallel: Option<usize>,
    /// Comma-separated modalities to drop from training and evaluation.
    #[arg(long, value_delimiter = ',')]
    pub silence: Vec<String>,
    #[arg(long)]
    pub no_aux: bool,
    #[arg(long)]
    pub no_clip: bool,
}

/// Parses a JSON file, reporting any problem as a config error.
pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| MoiraError::Config {
            field: "config".into(),
            msg: format!("cannot read {}: {e}", path.display()),
        })?;
    serde_json::from_str(&text).map_err(|e| MoiraError::Config {
        field: "config".into(),
        msg: format!("{}: {e}", path.display()),
    })
}

impl PipelineConfig {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        match path {
            Some(p) => read_json(p),
            None => Ok(Self::default()),
        }
    }

    /// Applies flag overrides, then checks every section.
    pub fn resolve(mut self, o: &Overrides) -> Result<Self> {
        if let Some(s) = o.seed {
            self.seed = s;
        }
        if let Some(r) = o.runs {
            self.runs = r;
            self.attribution.n_runs = r;
        }
        if let Some(p) = o.parallel {
            self.parallel = p;
        }
        for m in &o.silence {
            if !self.train.silenced_modalities.contains(m) {
                self.train.silenced_modalities.push(m.clone());
            }
        }
        if o.no_aux {
            self.train.objective.enable_aux = false;
        }
        if o.no_clip {
            self.train.objective.enable_clip = false;
        }
        self.train.seed = self.seed;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if self.runs == 0 {
            return Err(config_error("runs", "must be >= 1"));
        }
        if self.parallel == 0 {
            return Err(config_error("parallel", "must be >= 1"));
        }
        self.train.validate()?;
        self.prepare.validate()?;
        self.attribution.validate()?;
        Ok(())
    }

    pub fn seeds(&self, n: usize) -> Vec<u64> {
        (0..n as u64).map(|k| self.seed + k).collect()
    }
}

pub fn config_error(field: &str, msg: impl Into<String>) -> MoiraError {
    MoiraError::Config {
        field: field.into(),
        msg: msg.into(),
    }
}
