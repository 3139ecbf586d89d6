use std::path::PathBuf;

use thiserror::Error;

/// Errors surfaced by the simulator, trainers and file formats.
#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error at {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("schema error in field `{field}`: {message}")]
    Schema { field: String, message: String },

    #[error("unsupported schema version `{found}` (expected `{expected}`)")]
    Version { found: String, expected: String },

    #[error("field `{field}` = {value} outside [{lo}, {hi}]")]
    Range {
        field: String,
        value: f64,
        lo: f64,
        hi: f64,
    },

    #[error("numerical blow-up: {quantity} = {value}")]
    NumericalBlowup { quantity: String, value: f64 },

    #[error("episode aborted in world {world_id}: {source}")]
    Episode {
        world_id: String,
        #[source]
        source: Box<Error>,
    },

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("checkpoint error: {0}")]
    Checkpoint(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn schema(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Schema {
            field: field.into(),
            message: message.into(),
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
