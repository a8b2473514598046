use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error("config error: {0}")]
    Config(String),

    /// Malformed or semantically invalid input data.
    #[error("data error: {0}")]
    Data(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// A partition came out empty after splitting or buffering.
    #[error("empty {partition} partition (raw length {raw_len})")]
    EmptyPartition { partition: String, raw_len: usize },

    #[error("training diverged: non-finite loss at epoch {epoch}")]
    Divergence { epoch: usize },

    #[error("numerical error: {0}")]
    Numerical(String),

    /// A clean-mode split audited with shared raw indices between train and test.
    #[error("clean cell {cell} is contaminated: {overlap} shared raw indices")]
    ContaminatedClean { cell: String, overlap: usize },

    #[error("cell {cell}")]
    Cell {
        cell: String,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Message followed by every underlying source, joined with `: `.
    pub fn chain(&self) -> String {
        let mut msg = self.to_string();
        let mut source = std::error::Error::source(self);
        while let Some(e) = source {
            msg.push_str(": ");
            msg.push_str(&e.to_string());
            source = e.source();
        }
        msg
    }

    /// True when the root cause is a contaminated clean split.
    pub fn is_contamination(&self) -> bool {
        match self {
            Error::ContaminatedClean { .. } => true,
            Error::Cell { source, .. } => source.is_contamination(),
            _ => false,
        }
    }
}
