use std::path::{Path, PathBuf};

/// Errors of the file, pipeline and harness layer.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error(transparent)]
    Core(#[from] protoclass_core::Error),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("format error: {0}")]
    Format(String),
    #[error("config error: {0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn io(path: impl AsRef<Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().to_path_buf(),
            source,
        }
    }

    /// Short machine-readable category.
    pub fn kind(&self) -> &'static str {
        use protoclass_core::Error as C;
        match self {
            Error::Io { .. } => "io",
            Error::Format(_) => "format",
            Error::Config(_) => "config",
            Error::Core(c) => match c {
                C::InvalidInput(_) => "invalid_input",
                C::DegenerateSignal(_) => "degenerate_signal",
                C::InvalidSpec(_) => "invalid_spec",
                C::InsufficientSamples { .. } => "insufficient_samples",
                C::Shape(_) => "shape",
                C::InvalidLabel(_) => "invalid_label",
                C::TrainingDiverged { .. } => "training_diverged",
                C::InsufficientData(_) => "insufficient_data",
            },
        }
    }

    /// One-line JSON object describing the error.
    pub fn to_json_line(&self) -> String {
        serde_json::json!({ "error": { "kind": self.kind(), "message": self.to_string() } }).to_string()
    }
}

pub(crate) fn format_err(msg: impl Into<String>) -> Error {
    Error::Format(msg.into())
}

pub(crate) fn config_err(msg: impl Into<String>) -> Error {
    Error::Config(msg.into())
}
