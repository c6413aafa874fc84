use std::path::PathBuf;

use thiserror::Error;

/// All failure modes of the crate.
///
/// Exit-code mapping for command-line frontends: configuration problems map
/// to 2, data problems to 3, and pipeline stage failures to 4.
#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}:{line}: malformed record: {message}")]
    MalformedLine {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("{path}:{line}: duplicate utterance_id \"{id}\"")]
    DuplicateId {
        path: PathBuf,
        line: usize,
        id: String,
    },

    #[error("invalid manifest: {0}")]
    InvalidManifest(String),

    #[error("invalid config: {0}")]
    InvalidConfig(String),

    #[error("simulation: {0}")]
    Simulation(String),

    #[error("regressor: {0}")]
    Regressor(String),

    #[error("selection: {0}")]
    Selection(String),

    #[error("metrics: {0}")]
    Metrics(String),

    #[error("loop engine: {0}")]
    Engine(String),

    #[error("stage {stage} failed: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    /// Tag an error with the pipeline stage it occurred in.
    pub fn in_stage(self, stage: &'static str) -> Error {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }

    /// Process exit code for this error class.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::InvalidConfig(_) => 2,
            Error::Stage { .. } => 4,
            _ => 3,
        }
    }
}
