use std::fmt;

use thiserror::Error;

/// Location-tagged syntax error from the network or problem readers.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParseError {
    pub line: usize,
    pub column: usize,
    pub message: String,
}

impl ParseError {
    pub fn new(line: usize, column: usize, message: impl Into<String>) -> Self {
        Self {
            line,
            column,
            message: message.into(),
        }
    }
}

impl fmt::Display for ParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}: {}", self.line, self.column, self.message)
    }
}

impl std::error::Error for ParseError {}

#[derive(Debug, Error)]
pub enum Error {
    #[error("parse error at {0}")]
    Parse(#[from] ParseError),
    #[error("dimension mismatch: expected {expected} {what}, got {got}")]
    Dimension {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("index {index} out of range 1..={max} for {what}")]
    IndexOutOfRange {
        what: &'static str,
        index: usize,
        max: usize,
    },
    #[error("node {0} is not in the flip set")]
    NotInFlipSet(usize),
    #[error("flip set {sub} is not a subset of {sup}")]
    NotSubset { sub: String, sup: String },
    #[error("refusing dense allocation: {0}")]
    TooLarge(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("invalid problem: {0}")]
    InvalidProblem(String),
    #[error("episode already terminated")]
    EpisodeTerminated,
    #[error("target unreachable from {count} initial state(s) after {episodes} episodes")]
    Unreachable { count: usize, episodes: usize },
}

pub type Result<T> = std::result::Result<T, Error>;
