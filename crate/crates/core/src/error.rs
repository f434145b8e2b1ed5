use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// A located, coded message produced by the model-spec front end or graph builder.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Diagnostic {
    pub code: String,
    pub line: usize,
    pub column: usize,
    pub message: String,
}

impl Diagnostic {
    pub fn new(code: &str, line: usize, column: usize, message: impl Into<String>) -> Self {
        Self {
            code: code.to_string(),
            line,
            column,
            message: message.into(),
        }
    }
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "error[{}] {}:{}: {}",
            self.code, self.line, self.column, self.message
        )
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("unknown name `{0}`")]
    UnknownName(String),

    #[error("shape mismatch for `{name}`: expected {expected:?}, got {got:?}")]
    ShapeMismatch {
        name: String,
        expected: Vec<usize>,
        got: Vec<usize>,
    },

    #[error("non-finite value for `{0}`")]
    NonFinite(String),

    #[error("missing conditioning quantity `{0}`")]
    MissingConditioning(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("factor `{factor}`: {message}")]
    Factor { factor: String, message: String },

    #[error("block `{block}`: {source}")]
    Block {
        block: String,
        #[source]
        source: Box<Error>,
    },

    #[error("iteration {iteration}: block `{block}`: {source}")]
    Iteration {
        block: String,
        iteration: u64,
        #[source]
        source: Box<Error>,
    },

    #[error("invalid block layout: {0}")]
    Layout(String),

    #[error("{}", format_diagnostics(.0))]
    Spec(Vec<Diagnostic>),

    #[error("prediction: {0}")]
    Prediction(String),

    #[error("data: {0}")]
    Data(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

fn format_diagnostics(diags: &[Diagnostic]) -> String {
    diags
        .iter()
        .map(ToString::to_string)
        .collect::<Vec<_>>()
        .join("\n")
}

impl Error {
    pub(crate) fn in_block(self, block: &str) -> Self {
        Error::Block {
            block: block.to_string(),
            source: Box::new(self),
        }
    }

    /// Stable machine-readable code, shared by the CLI and any scripting front end.
    pub fn code(&self) -> &str {
        match self {
            Error::Spec(d) => d.first().map(|d| d.code.as_str()).unwrap_or("E0000"),
            Error::UnknownName(_) => "R0001",
            Error::ShapeMismatch { .. } => "R0002",
            Error::NonFinite(_) => "R0003",
            Error::MissingConditioning(_) => "R0004",
            Error::InvalidArgument(_) => "R0005",
            Error::Numerical(_) => "R0006",
            Error::Factor { .. } => "R0007",
            Error::Block { source, .. } | Error::Iteration { source, .. } => source.code(),
            Error::Layout(_) => "R0008",
            Error::Prediction(_) => "R0009",
            Error::Data(_) => "D0001",
            Error::Io(_) => "IO001",
            Error::Json(_) => "IO002",
        }
    }

    /// Diagnostics carried by this error, if it originated in the front end.
    pub fn diagnostics(&self) -> &[Diagnostic] {
        match self {
            Error::Spec(d) => d,
            _ => &[],
        }
    }
}
