use std::io;
use std::path::PathBuf;

use dspn_core::Error as CoreError;

/// Errors surfaced by file handling and the pipeline runner. Each maps to
/// a stable process exit code.
#[derive(Debug, thiserror::Error)]
pub enum DspnError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error(transparent)]
    Load(#[from] crate::io::LoadError),
    #[error("{path}:{line}: {msg}")]
    Format { path: PathBuf, line: usize, msg: String },
    #[error("{0}")]
    Spec(CoreError),
    #[error("stage `{stage}` failed: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: CoreError,
    },
}

impl DspnError {
    pub fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        DspnError::Io { path: path.into(), source }
    }

    /// 2 for configuration or validation problems, 3 for I/O, 4 for a
    /// failed pipeline stage.
    pub fn exit_code(&self) -> i32 {
        match self {
            DspnError::Config(_) | DspnError::Format { .. } | DspnError::Spec(_) => 2,
            DspnError::Load(e) if e.is_io() => 3,
            DspnError::Load(_) => 2,
            DspnError::Io { .. } => 3,
            DspnError::Stage { .. } => 4,
        }
    }
}

pub type Result<T> = std::result::Result<T, DspnError>;
