use thiserror::Error;

use crate::field::Field;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("field mismatch: {0} vs {1}")]
    FieldMismatch(Field, Field),
    #[error("dimension mismatch: ambient N = {0} vs N = {1}")]
    DimensionMismatch(usize, usize),
    #[error("division by zero")]
    DivisionByZero,
    #[error("invalid field: {0}")]
    InvalidField(String),
    #[error("term {term} is not divisible by {divisor}")]
    NotDivisible { term: String, divisor: String },
    #[error("parse error at byte {pos}: {msg}")]
    Parse { pos: usize, msg: String },
    #[error("invalid shape: {0}")]
    InvalidShape(String),
    #[error("invalid schedule: {0}")]
    InvalidSchedule(String),
    #[error("degree mismatch: {0}")]
    DegreeMismatch(String),
    #[error("invalid selection: {0}")]
    InvalidSelection(String),
    #[error("budget exceeded: {0}")]
    BudgetExceeded(String),
    #[error("no representation of {d} as p*s + q*(s+1)")]
    NoRepresentation { d: u64, s: u64 },
    #[error("configuration error: {0}")]
    Config(String),
    #[error("witness version mismatch: expected {expected}, found {found}")]
    WitnessVersion { expected: String, found: String },
    #[error("exponent {0} exceeds the supported range")]
    ExponentOverflow(String),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
