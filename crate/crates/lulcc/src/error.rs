//! Crate-wide error type.

use std::path::PathBuf;
use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("failed to read {path}: {source}")]
    Read {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("failed to write {path}: {source}")]
    Write {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("JSON error in {path}: {detail}")]
    Json { path: PathBuf, detail: String },

    // grid
    #[error("malformed header: {0}")]
    MalformedHeader(String),
    #[error("cell count mismatch: expected {expected} values, found {found}")]
    CellCountMismatch { expected: usize, found: usize },
    #[error("non-integer value {token:?} in categorical grid")]
    NonIntegerCell { token: String },
    #[error("non-finite value {token:?} in continuous grid")]
    NonFiniteCell { token: String },
    #[error("grids are not aligned: {field} differs")]
    Unaligned { field: &'static str },
    #[error("no countable cells")]
    NoCountableCells,
    #[error("cell code {code} has no entry in the group map")]
    UnmappedCode { code: i32 },
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("class list is empty")]
    EmptyClassList,

    // radiometry
    #[error("window size must be odd and positive, got {0}")]
    EvenWindow(usize),
    #[error("DN {0} outside [0, 255]")]
    DnOutOfRange(f64),
    #[error("invalid calibration: {0}")]
    InvalidCalibration(String),

    // factors
    #[error("factor table: {0}")]
    FactorTable(String),
    #[error("observation outside [0, 1]: value {value} at row {row}, factor {factor}")]
    Unnormalized {
        value: f64,
        row: usize,
        factor: usize,
    },

    // markov
    #[error("invalid transition matrix: {0}")]
    InvalidMatrix(String),
    #[error("class code {code} at cell ({row}, {col}) is not in the class list")]
    UnexpectedClass { code: i32, row: usize, col: usize },
    #[error("exponent must be positive, got {0}")]
    NonPositiveExponent(f64),

    // hmm
    #[error("invalid HMM parameters: {0}")]
    InvalidParams(String),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("empty observation sequence")]
    EmptyObservations,
    #[error("non-finite value in observation {index}")]
    NanObservation { index: usize },
    #[error("numerical failure at EM iteration {iteration}: {detail}")]
    TrainingDiverged { iteration: usize, detail: String },
    #[error("zero forward probability mass at step {step}")]
    ZeroForwardMass { step: usize },

    // suitability
    #[error("grid too small: need at least {need}x{need}, got {nrows}x{ncols}")]
    GridTooSmall {
        need: usize,
        nrows: usize,
        ncols: usize,
    },
    #[error("negative slope value {0}")]
    NegativeSlope(f64),
    #[error("no cells carry the target code {0}")]
    NoTargetCells(i32),
    #[error("fewer than 2 outcome categories among counted cells")]
    TooFewCategories,

    // lcm
    #[error("zero eligible cells for transition {from} -> {to}")]
    ZeroEligibleCells { from: i32, to: i32 },
    #[error("feature {0:?} is constant; cannot standardize")]
    ConstantFeature(String),
    #[error("non-finite value in feature {0:?}")]
    NonFiniteFeature(String),
    #[error("logistic fit did not converge after {0} iterations")]
    FitDidNotConverge(usize),
    #[error("feature count mismatch: model has {model}, got {given}")]
    FeatureCountMismatch { model: usize, given: usize },
    #[error("no potential map for transition {from} -> {to} with quantum {quantum}")]
    MissingPotential { from: i32, to: i32, quantum: u64 },

    // synth
    #[error("invalid scenario config: {0}")]
    InvalidConfig(String),
}
