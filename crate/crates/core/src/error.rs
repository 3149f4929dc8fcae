//! Error type shared by every module of the crate.

use std::path::PathBuf;

use thiserror::Error;

use crate::model::Violation;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("invalid model specification: {}", join_violations(.0))]
    InvalidModel(Vec<Violation>),

    #[error("invalid topology: {0}")]
    Topology(String),

    #[error("model/topology mismatch: {0}")]
    Mismatch(String),

    #[error("simulation would create {requested} persons, above the cap of {cap}")]
    MemoryCap { requested: u64, cap: u64 },

    #[error("singular input: {0}")]
    Singular(String),

    #[error("precondition failed: {0}")]
    Precondition(String),

    #[error("infeasible: {0}")]
    Infeasible(String),

    #[error("collinear regressors: {column} is linearly dependent on [{}]", .against.join(", "))]
    RankDeficient { column: String, against: Vec<String> },

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("panel is missing column `{0}`")]
    MissingColumn(String),

    #[error("{path}: line {line}: {message}")]
    Parse {
        path: PathBuf,
        line: u64,
        message: String,
    },

    #[error("{path}: {message}")]
    Validation { path: PathBuf, message: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Infeasibility and singularities are numerical failures; everything that
    /// comes from bad input data is a validation failure.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::Infeasible(_) | Error::Singular(_) | Error::RankDeficient { .. }
        )
    }
}

fn join_violations(v: &[Violation]) -> String {
    v.iter()
        .map(|x| x.to_string())
        .collect::<Vec<_>>()
        .join("; ")
}
