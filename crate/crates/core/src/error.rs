//! Error type shared across the crate.

use ndarray::Array2;
use thiserror::Error;

/// Trace data salvaged from a fit that produced a non-finite objective.
#[derive(Debug, Clone)]
pub struct DivergedFit {
    pub objective_trace: Vec<f64>,
    pub relative_residual_trace: Vec<f64>,
    pub lambda_trace: Vec<f64>,
    pub sweeps_used: usize,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("value count {got} does not match dims {dims:?} ({expected} values expected)")]
    LengthMismatch {
        dims: (usize, usize, usize),
        expected: usize,
        got: usize,
    },
    #[error("non-finite value {value} at linear offset {offset}")]
    NonFinite { offset: usize, value: f64 },
    #[error("invalid matricization mode {0} (expected 1, 2, or 3)")]
    InvalidMode(u8),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("active-set iteration cap exceeded on right-hand-side column {column}")]
    NnlsIterationCap {
        column: usize,
        /// Best feasible iterate found for each column before the cap hit.
        best: Box<Array2<f64>>,
    },
    #[error("objective became non-finite after {} sweeps", .0.sweeps_used)]
    Diverged(Box<DivergedFit>),
    #[error("reference column {0} has zero norm; alignment is undefined")]
    ZeroReferenceColumn(usize),
    #[error("generated tensor had zero norm after {0} attempts")]
    ZeroNormTensor(usize),
    #[error("uncertainties are required but absent")]
    MissingUncertainties,
    #[error("{path}:{line}: {msg}")]
    CsvData {
        path: String,
        line: u64,
        msg: String,
    },
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, Error>;
