use std::path::PathBuf;

use serde::Serialize;
use thiserror::Error;

use crate::expr::EvalError;
use crate::spec::SpecErrors;

#[derive(Debug, Error)]
pub enum AppError {
    #[error("invalid specification:\n{0}")]
    Spec(#[from] SpecErrors),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{0}")]
    Input(String),

    #[error("{key} at x={x:?}, t={t}: {source}")]
    Evaluation {
        key: String,
        x: Vec<f64>,
        t: f64,
        #[source]
        source: EvalError,
    },

    #[error(transparent)]
    Core(#[from] fpk_core::Error),
}

/// Exit status of a finished pipeline.
pub const EXIT_PASS: i32 = 0;
pub const EXIT_FAIL: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;

/// Machine-readable form written to `error.json`.
#[derive(Debug, Clone, Serialize)]
pub struct ErrorRecord {
    pub kind: &'static str,
    pub message: String,
    pub exit_code: i32,
}

impl AppError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        AppError::Io {
            path: path.into(),
            source,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            AppError::Spec(_) => "spec",
            AppError::Io { .. } => "io",
            AppError::Input(_) => "input",
            AppError::Evaluation { .. } => "evaluation",
            AppError::Core(_) => "numerical",
        }
    }

    /// 2 for problems with the request itself, 3 for failures of the numerics.
    pub fn exit_code(&self) -> i32 {
        use fpk_core::Error as E;
        match self {
            AppError::Spec(_) | AppError::Io { .. } | AppError::Input(_) => EXIT_USAGE,
            AppError::Core(E::Parameter(_) | E::Dimension { .. } | E::Unsupported(_)) => EXIT_USAGE,
            AppError::Evaluation { .. } | AppError::Core(_) => EXIT_NUMERICAL,
        }
    }

    pub fn record(&self) -> ErrorRecord {
        ErrorRecord {
            kind: self.kind(),
            message: self.to_string(),
            exit_code: self.exit_code(),
        }
    }
}
