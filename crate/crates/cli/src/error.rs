use std::fmt;
use std::path::Path;

use gmrf_tomo::config::ConfigError;
use gmrf_tomo::diagnostics::DiagnosticsError;
use gmrf_tomo::forward::ForwardError;
use gmrf_tomo::io::FormatError;
use gmrf_tomo::sampler::SamplerError;
use gmrf_tomo::sparse::LinalgError;
use gmrf_tomo::spatial::PriorError;
use gmrf_tomo::study::StudyError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Kind {
    Config,
    Numerical,
    Io,
}

impl Kind {
    pub fn exit_code(self) -> i32 {
        match self {
            Kind::Config => 2,
            Kind::Numerical => 3,
            Kind::Io => 4,
        }
    }
}

#[derive(Debug)]
pub struct CliError {
    pub kind: Kind,
    pub message: String,
}

impl CliError {
    pub fn config(msg: impl Into<String>) -> Self {
        Self {
            kind: Kind::Config,
            message: msg.into(),
        }
    }

    pub fn io_at(path: &Path, e: impl fmt::Display) -> Self {
        Self {
            kind: Kind::Io,
            message: format!("{}: {e}", path.display()),
        }
    }

    fn numerical(e: impl fmt::Display) -> Self {
        Self {
            kind: Kind::Numerical,
            message: e.to_string(),
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl std::error::Error for CliError {}

pub type Result<T> = std::result::Result<T, CliError>;

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        match e {
            ConfigError::Read { .. } => Self {
                kind: Kind::Io,
                message: e.to_string(),
            },
            _ => Self::config(e.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        Self {
            kind: Kind::Io,
            message: e.to_string(),
        }
    }
}

impl From<FormatError> for CliError {
    fn from(e: FormatError) -> Self {
        match e {
            FormatError::Linalg(l) => l.into(),
            other => Self {
                kind: Kind::Io,
                message: other.to_string(),
            },
        }
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        Self {
            kind: Kind::Io,
            message: e.to_string(),
        }
    }
}

impl From<LinalgError> for CliError {
    fn from(e: LinalgError) -> Self {
        Self::numerical(e)
    }
}

impl From<PriorError> for CliError {
    fn from(e: PriorError) -> Self {
        Self::numerical(e)
    }
}

impl From<DiagnosticsError> for CliError {
    fn from(e: DiagnosticsError) -> Self {
        match e {
            DiagnosticsError::Dimension { .. } => Self::config(e.to_string()),
            _ => Self::numerical(e),
        }
    }
}

impl From<ForwardError> for CliError {
    fn from(e: ForwardError) -> Self {
        match e {
            // an infeasible layout is a problem with the configuration
            ForwardError::InvalidGrid(_)
            | ForwardError::InvalidGeometry(_)
            | ForwardError::DegenerateRay
            | ForwardError::EmptyRay(_)
            | ForwardError::InvalidNoise(_) => Self::config(e.to_string()),
            ForwardError::Csv(_) => Self {
                kind: Kind::Io,
                message: e.to_string(),
            },
            ForwardError::Linalg(l) => l.into(),
            ForwardError::Prior(p) => p.into(),
        }
    }
}

impl From<SamplerError> for CliError {
    fn from(e: SamplerError) -> Self {
        match e {
            SamplerError::InvalidConfig(_) | SamplerError::InvalidPrior(_) | SamplerError::Dimension(_) => Self::config(e.to_string()),
            _ => Self::numerical(e),
        }
    }
}

impl From<StudyError> for CliError {
    fn from(e: StudyError) -> Self {
        match e {
            StudyError::Invalid(_) => Self::config(e.to_string()),
            StudyError::Forward(f) => f.into(),
            StudyError::Sampler(s) => s.into(),
            StudyError::Prior(p) => p.into(),
            StudyError::Diagnostics(d) => d.into(),
            StudyError::Linalg(l) => l.into(),
        }
    }
}
