use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, HqcsError>;

#[derive(Debug, Error)]
pub enum HqcsError {
    #[error("Duschinsky matrix is not orthogonal: max |SᵀS - I| = {deviation:.3e} at ({row}, {col})")]
    NonOrthogonalDuschinsky {
        deviation: f64,
        row: usize,
        col: usize,
    },
    #[error("non-positive frequency {value} in {surface} surface, mode {mode}")]
    NonPositiveFrequency {
        surface: &'static str,
        mode: usize,
        value: f64,
    },
    #[error("dimension mismatch in {what}: expected {expected}, found {found}")]
    DimensionMismatch {
        what: String,
        expected: usize,
        found: usize,
    },
    #[error("invalid model parameter in mode {mode}: {reason}")]
    InvalidParameter { mode: usize, reason: String },
    #[error("invalid rotation pair ({0}, {1}) for {2} modes")]
    InvalidPair(usize, usize, usize),
    #[error("unknown unit '{0}'")]
    UnknownUnit(String),
    #[error("dimensionless map is singular: min/max singular value ratio {ratio:.3e}")]
    SingularMap { ratio: f64 },
    #[error("Fock space of {requested} amplitudes exceeds the limit of {limit}")]
    CutoffOverflow { requested: u128, limit: u128 },
    #[error("no real logarithm for rotation: {0}")]
    LogBranchFailure(String),
    #[error("amplitude table carries no probability")]
    EmptyTable,
    #[error("overflow: {0}")]
    Overflow(String),
    #[error("ladder path supports only harmonic and polynomial potentials (mode {0})")]
    UnsupportedPotentialForLadder(usize),
    #[error("eigensolver did not converge for mode {0}")]
    NonConvergedEigensolve(usize),
    #[error("overlap row for mode {mode}, quantum {quantum} has zero weight")]
    ZeroWeightRow { mode: usize, quantum: usize },
    #[error("index {index} out of range {bound} for mode {mode}")]
    IndexOutOfRange {
        mode: usize,
        index: usize,
        bound: usize,
    },
    #[error("{operation} supports at most {max} modes, model has {found}")]
    TooManyModes {
        operation: &'static str,
        max: usize,
        found: usize,
    },
    #[error("parse error in {path}: {field}: {message}")]
    Parse {
        path: PathBuf,
        field: String,
        message: String,
    },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
