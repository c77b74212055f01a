use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("parse error at row {row}: {msg}")]
    Parse { row: usize, msg: String },

    #[error("integrity error: {0}")]
    Integrity(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("rejected input: {0}")]
    Rejected(String),

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("numeric fault at step {step}: {what}")]
    Numeric { step: usize, what: String },

    #[error("evaluation score undefined: truth series is constant")]
    UndefinedScore,

    #[error("divergence undefined: q has an empty bin where p has mass (bin {bin})")]
    DivergenceUndefined { bin: usize },

    #[error("missing artifact {}", .0.display())]
    MissingArtifact(PathBuf),

    #[error("i/o error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("stage `{stage}` failed: {source}")]
    Stage {
        stage: String,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn in_stage(self, stage: &str) -> Self {
        match self {
            e @ Error::Stage { .. } => e,
            e => Error::Stage {
                stage: stage.to_string(),
                source: Box::new(e),
            },
        }
    }

    /// Process exit code: 2 config, 3 data, 4 numeric.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Stage { source, .. } => source.exit_code(),
            Error::Config(_) => 2,
            Error::Numeric { .. } => 4,
            Error::Parse { .. }
            | Error::Integrity(_)
            | Error::Rejected(_)
            | Error::UndefinedScore
            | Error::MissingArtifact(_)
            | Error::Io { .. } => 3,
            Error::Contract(_) | Error::DivergenceUndefined { .. } => 1,
        }
    }
}
