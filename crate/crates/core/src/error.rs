use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("row {row} has {found} cells, expected {expected}")]
    RaggedRow {
        row: usize,
        found: usize,
        expected: usize,
    },

    #[error("non-numeric value {value:?} in measure column {column} (row {row})")]
    NonNumericMeasure {
        column: String,
        row: usize,
        value: String,
    },

    #[error("negative value {value} in measure column {column}")]
    NegativeMeasure { column: String, value: f64 },

    #[error("unknown column {0:?}")]
    UnknownColumn(String),

    #[error("unknown measure column {0:?}")]
    UnknownMeasure(String),

    #[error("column {0:?} is not numeric")]
    NotNumeric(String),

    #[error("bucket count must be at least 1")]
    InvalidBins,

    #[error("invalid rule {text:?}: {reason}")]
    InvalidRule { text: String, reason: String },

    #[error("invalid weight configuration: {0}")]
    InvalidWeight(String),

    #[error("column {0:?} is already instantiated in the rule")]
    ColumnInstantiated(String),

    #[error("instance too large for exhaustive search: {0}")]
    InstanceTooLarge(String),

    #[error("node fan-out {0} exceeds the enumeration limit")]
    FanoutTooLarge(usize),

    #[error("selectivity ratio undefined for an empty sub-rule")]
    EmptySubRule,

    #[error("table is empty")]
    EmptyTable,

    #[error("unknown node {0}")]
    UnknownNode(String),

    #[error("node {0} is not expanded")]
    NotExpanded(String),

    #[error("node {0} is already expanded")]
    AlreadyExpanded(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
}
