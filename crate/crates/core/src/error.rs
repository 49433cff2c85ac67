use std::fmt;

use thiserror::Error;

/// A single violated dataset invariant, located by row and/or column.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ValidationIssue {
    CodeOutOfRange {
        row: usize,
        column: usize,
        code: u32,
        arity: u32,
    },
    NonBinaryTreatment {
        row: usize,
        value: u8,
    },
    NonFiniteOutcome {
        row: usize,
    },
    ArityTooSmall {
        column: usize,
        arity: u32,
    },
    DuplicateName {
        column: usize,
        name: String,
    },
    RaggedRows {
        expected: usize,
        found: usize,
    },
    MaskShape {
        expected: usize,
        found: usize,
    },
    /// A masked cell must carry the reserved missing code `arity - 1`.
    MaskedCellNotSentinel {
        row: usize,
        column: usize,
    },
    NoTreatedUnits,
    NoControlUnits,
    Empty,
}

impl fmt::Display for ValidationIssue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ValidationIssue::CodeOutOfRange {
                row,
                column,
                code,
                arity,
            } => write!(
                f,
                "row {row}, column {column}: code {code} out of range for arity {arity}"
            ),
            ValidationIssue::NonBinaryTreatment { row, value } => {
                write!(f, "row {row}: treatment value {value} is not 0 or 1")
            }
            ValidationIssue::NonFiniteOutcome { row } => write!(f, "row {row}: outcome is not finite"),
            ValidationIssue::ArityTooSmall { column, arity } => {
                write!(f, "column {column}: arity {arity} < 2")
            }
            ValidationIssue::DuplicateName { column, name } => {
                write!(f, "column {column}: duplicate covariate name {name:?}")
            }
            ValidationIssue::RaggedRows { expected, found } => {
                write!(f, "expected {expected} covariate codes, found {found}")
            }
            ValidationIssue::MaskShape { expected, found } => {
                write!(f, "missing mask has {found} cells, expected {expected}")
            }
            ValidationIssue::MaskedCellNotSentinel { row, column } => write!(
                f,
                "row {row}, column {column}: masked cell does not hold the missing code"
            ),
            ValidationIssue::NoTreatedUnits => write!(f, "dataset has no treated units"),
            ValidationIssue::NoControlUnits => write!(f, "dataset has no control units"),
            ValidationIssue::Empty => write!(f, "dataset has no units"),
        }
    }
}

#[derive(Debug, Error)]
pub enum AemrError {
    #[error("covariate index {index} out of range for p = {p}")]
    InvalidCovariate { index: usize, p: usize },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("invalid weight at covariate {index}: {value}")]
    InvalidWeight { index: usize, value: f64 },

    #[error("dataset validation failed: {}", join_issues(.0))]
    Validation(Vec<ValidationIssue>),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("{0}")]
    Empty(&'static str),

    #[error("p = {p} exceeds the enumeration cap of {cap}")]
    OracleCap { p: usize, cap: usize },

    #[error("correlation matrix is not positive semi-definite")]
    NotPsd,

    #[error("column not found: {0}")]
    ColumnNotFound(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

fn join_issues(issues: &[ValidationIssue]) -> String {
    issues
        .iter()
        .map(ToString::to_string)
        .collect::<Vec<_>>()
        .join("; ")
}

pub type Result<T, E = AemrError> = std::result::Result<T, E>;
