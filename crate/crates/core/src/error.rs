use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("schema: {0}")]
    Schema(String),

    #[error("preset {preset}: {message}")]
    InvalidPreset { preset: String, message: String },

    #[error("schema mismatch: {0}")]
    SchemaMismatch(String),

    #[error("unknown preset id {0:?}")]
    UnknownPreset(String),

    #[error("unknown group {0:?}")]
    UnknownGroup(String),

    #[error("preset {0:?} not embedded")]
    NotEmbedded(String),

    #[error("embedding dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("provider: {0}")]
    Provider(String),

    #[error("embedding preset {preset:?} failed: {source}")]
    EmbedFailed {
        preset: String,
        #[source]
        source: Box<Error>,
    },

    #[error("need ≥ 2 favorites to mix, have {0}")]
    NotEnoughFavorites(usize),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            line,
            message: message.into(),
        }
    }

    /// True for failures raised by (or on behalf of) an embedding provider.
    pub fn is_provider_error(&self) -> bool {
        matches!(
            self,
            Error::Provider(_)
                | Error::NotEmbedded(_)
                | Error::DimensionMismatch { .. }
                | Error::EmbedFailed { .. }
        )
    }
}
