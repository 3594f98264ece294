use thiserror::Error;

pub type Result<T> = std::result::Result<T, MoiraError>;

#[derive(Debug, Error)]
pub enum MoiraError {
    #[error("dimension mismatch in {op}: {left:?} vs {right:?}")]
    Dimension {
        op: &'static str,
        left: (usize, usize),
        right: (usize, usize),
    },

    #[error("invalid probability {0}: must lie in [0, 1)")]
    InvalidProbability(f64),

    #[error("empty support: row {0} has no unmasked entries")]
    EmptySupport(usize),

    #[error("parse error at row {row}, column {col}: {msg}")]
    Parse { row: usize, col: usize, msg: String },

    #[error("config error in `{field}`: {msg}")]
    Config { field: String, msg: String },

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("input integrity error: {0}")]
    Integrity(String),

    #[error("run with seed {seed} failed: {source}")]
    Run {
        seed: u64,
        #[source]
        source: Box<MoiraError>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl MoiraError {
    pub(crate) fn config(field: impl Into<String>, msg: impl Into<String>) -> Self {
        MoiraError::Config {
            field: field.into(),
            msg: msg.into(),
        }
    }

    pub(crate) fn dim(op: &'static str, left: (usize, usize), right: (usize, usize)) -> Self {
        MoiraError::Dimension { op, left, right }
    }
}
