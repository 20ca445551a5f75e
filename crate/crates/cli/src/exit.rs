//! Process exit codes and the error type that carries them.

use std::fmt;

use dualev_core::Error as CoreError;

/// Exit code classes. Command-line usage errors reported by the argument
/// parser also exit with 2.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExitKind {
    /// Unexpected internal failure.
    Internal = 1,
    /// Invalid configuration, arguments or input data.
    Validation = 2,
    /// A prerequisite artifact is missing or was produced by a different configuration.
    Dependency = 3,
    /// Training diverged or evidence fusion hit total conflict.
    Numerical = 4,
    /// An artifact is corrupt or has an unsupported format version.
    Artifact = 5,
    /// Reading or writing a file failed.
    Io = 6,
}

impl ExitKind {
    pub fn code(self) -> i32 {
        self as i32
    }

    pub fn label(self) -> &'static str {
        match self {
            Self::Internal => "internal error",
            Self::Validation => "validation error",
            Self::Dependency => "dependency error",
            Self::Numerical => "numerical failure",
            Self::Artifact => "artifact error",
            Self::Io => "i/o error",
        }
    }
}

#[derive(Debug)]
pub struct CliError {
    pub kind: ExitKind,
    pub error: anyhow::Error,
}

impl CliError {
    pub fn new(kind: ExitKind, error: impl Into<anyhow::Error>) -> Self {
        Self {
            kind,
            error: error.into(),
        }
    }

    pub fn validation(msg: impl fmt::Display) -> Self {
        Self::new(ExitKind::Validation, anyhow::anyhow!("{msg}"))
    }

    pub fn dependency(msg: impl fmt::Display) -> Self {
        Self::new(ExitKind::Dependency, anyhow::anyhow!("{msg}"))
    }

    pub fn io(msg: impl fmt::Display) -> Self {
        Self::new(ExitKind::Io, anyhow::anyhow!("{msg}"))
    }

    pub fn code(&self) -> i32 {
        self.kind.code()
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {:#}", self.kind.label(), self.error)
    }
}

impl std::error::Error for CliError {}

pub fn classify(e: &CoreError) -> ExitKind {
    match e {
        CoreError::InvalidInput(_)
        | CoreError::DimensionMismatch { .. }
        | CoreError::Calibration { .. }
        | CoreError::UnsupportedDimension(_) => ExitKind::Validation,
        CoreError::TotalConflict { .. } | CoreError::NonFiniteLoss { .. } => ExitKind::Numerical,
        CoreError::Format(_) | CoreError::VersionMismatch { .. } | CoreError::Json(_) => {
            ExitKind::Artifact
        }
        CoreError::Io(_) => ExitKind::Io,
    }
}

impl From<CoreError> for CliError {
    fn from(e: CoreError) -> Self {
        let kind = classify(&e);
        let error = match e {
            CoreError::VersionMismatch { .. } => anyhow::Error::new(e).context("migration refused"),
            other => anyhow::Error::new(other),
        };
        Self { kind, error }
    }
}
