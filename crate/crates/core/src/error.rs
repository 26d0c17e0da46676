use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Linear predictor outside the region where the inverse link or the
    /// family's variance function is defined.
    #[error("domain error: {0}")]
    Domain(String),

    /// Normal matrix (weighted information) is singular or numerically so.
    #[error("rank deficient information matrix at column {column}{}", name.as_ref().map(|n| format!(" ({n})")).unwrap_or_default())]
    Rank { column: usize, name: Option<String> },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid data: {0}")]
    Data(String),

    /// Input file could not be parsed. `line` is 1-based and counts the header.
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("generation error: {0}")]
    Generation(String),

    #[error("aggregation error: {0}")]
    Aggregation(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn with_column_name(self, names: &[String]) -> Self {
        match self {
            Error::Rank { column, name: None } => Error::Rank {
                column,
                name: names.get(column).cloned(),
            },
            other => other,
        }
    }
}
