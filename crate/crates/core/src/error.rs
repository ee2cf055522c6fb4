use thiserror::Error;

/// Errors raised anywhere in the clustering pipeline.
#[derive(Debug, Error)]
pub enum RfcError {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("numerical error: {0}")]
    Numerical(String),

    #[error("basis evaluation matrix is rank deficient ({deficient} of {columns} columns)")]
    RankDeficient { deficient: usize, columns: usize },

    #[error("group {group} is degenerate: total weight {mass}")]
    DegenerateGroup { group: usize, mass: f64 },

    #[error("every group density vanished for observation {0}")]
    DegenerateModel(usize),

    #[error("need at least {needed} curves, got {got}")]
    TooFewCurves { needed: usize, got: usize },

    #[error("all {attempts} starts failed; last failure: {last}")]
    FitFailed { attempts: usize, last: String },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("parse error at row {row}: {msg}")]
    Parse { row: usize, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, RfcError>;
