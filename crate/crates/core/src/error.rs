use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("basis capacity exceeded: more than {limit} occupation vectors")]
    Capacity { limit: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("no closed-form size for this constraint set")]
    UnsupportedConstraints,

    #[error("monomial {monomial} maps vector {vector:?} outside the sector")]
    SectorViolation { monomial: String, vector: Vec<u16> },

    #[error("dimension mismatch: expected {expected}, got {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("state normalization error: {0}")]
    Normalization(String),

    #[error("state does not fit the target sector: {0}")]
    SectorIncompatible(String),

    #[error("operator order {order} exceeds particle number {particles}")]
    OrderTooLarge { order: usize, particles: usize },

    #[error("step size underflow at t = {time}")]
    StepSizeUnderflow { time: f64 },

    #[error("integrator failed to meet tolerance at t = {time}: {reason}")]
    Tolerance { time: f64, reason: String },

    #[error("non-uniform grid: {0}")]
    NonUniformGrid(&'static str),

    #[error("input is not permutation symmetric (asymmetry {asymmetry:e})")]
    NotSymmetric { asymmetry: f64 },

    #[error("oracle dimension cap exceeded: {dimension} > {cap}")]
    OracleCap { dimension: usize, cap: usize },

    #[error("photon-number truncation reached at n = {n_max}")]
    TruncationOverflow { n_max: u16 },

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
