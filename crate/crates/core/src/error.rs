use std::path::PathBuf;

use thiserror::Error;

/// Errors raised by the estimation, diagnostics and experiment routines.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("non-finite value at row {row}, column {column}")]
    NonFinite { row: usize, column: usize },

    #[error("column {column} is identically zero")]
    ZeroColumn { column: usize },

    #[error("design has collinear columns {pairs:?}; pass force to proceed")]
    CollinearDesign { pairs: Vec<(usize, usize)> },

    #[error("target is not in the column span of the design (relative residual {residual:e})")]
    Infeasible { residual: f64 },

    #[error("solver did not converge after {sweeps} sweeps (last relative gap {gap:e})")]
    Convergence { sweeps: usize, gap: f64 },

    #[error("degenerate path: active-set system singular at columns {columns:?}")]
    DegeneratePath { columns: Vec<usize> },

    #[error("singular system for column set {columns:?}")]
    Singular { columns: Vec<usize> },

    #[error("bound undefined: {0}")]
    BoundUndefined(String),

    #[error("exhaustive enumeration needs {subsets} subsets, above the cap of {cap}; use heuristic mode")]
    EnumerationCap { subsets: u128, cap: u128 },

    #[error("problem has no stored noise vector")]
    MissingNoise,

    #[error("problem has no stored ground truth")]
    MissingTruth,

    #[error("non-finite value in report field `{0}`")]
    NonFiniteReport(String),

    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    /// True for errors that originate from numerical breakdown rather than bad input or IO.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::Convergence { .. }
                | Error::DegeneratePath { .. }
                | Error::Singular { .. }
                | Error::BoundUndefined(_)
                | Error::Infeasible { .. }
                | Error::NonFiniteReport(_)
        )
    }

    pub fn is_io(&self) -> bool {
        matches!(self, Error::Io { .. })
    }
}

pub type Result<T> = std::result::Result<T, Error>;
