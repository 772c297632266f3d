use std::fmt;

use thiserror::Error;

use crate::value::DataType;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Left,
    Right,
}

impl Side {
    pub fn as_str(self) -> &'static str {
        match self {
            Side::Left => "left",
            Side::Right => "right",
        }
    }
}

impl fmt::Display for Side {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Schema and type violations raised while validating an operator call.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum EngineError {
    #[error("column names must be non-empty")]
    EmptyColumnName,
    #[error("duplicate column `{0}`")]
    DuplicateColumn(String),
    #[error("unknown column `{0}`")]
    UnknownColumn(String),
    #[error("row {row} has {found} values, schema has {expected} columns")]
    RowArity {
        row: usize,
        expected: usize,
        found: usize,
    },
    #[error("row {row}, column `{column}`: expected {expected} value")]
    RowType {
        row: usize,
        column: String,
        expected: DataType,
    },
    #[error("expression syntax error at offset {offset}: {message}")]
    Syntax { offset: usize, message: String },
    #[error("type error: {0}")]
    Type(String),
    #[error("predicate must be boolean, found {0}")]
    NotBoolean(String),
    #[error("join key `{key}` missing from {side} input")]
    JoinKeyMissing { key: String, side: Side },
    #[error("join key `{key}` has type {left} on the left and {right} on the right")]
    JoinKeyType {
        key: String,
        left: DataType,
        right: DataType,
    },
    #[error("join needs at least one key column")]
    NoJoinKeys,
    #[error("column `{0}` appears on both join sides outside the key")]
    JoinColumnConflict(String),
    #[error("{func} over `{column}` needs a numeric column, found {dtype}")]
    AggNonNumeric {
        func: &'static str,
        column: String,
        dtype: DataType,
    },
    #[error("{func} over `{column}` is not defined for {dtype}")]
    AggUnsupported {
        func: &'static str,
        column: String,
        dtype: DataType,
    },
    #[error("sort lists {columns} columns but {flags} ascending flags")]
    SortArity { columns: usize, flags: usize },
    #[error("union inputs differ: {left} vs {right}")]
    UnionSchemaMismatch { left: String, right: String },
}
