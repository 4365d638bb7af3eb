use fracsource_core::laplace::LaplaceError;
use fracsource_core::{InversionError, ModelError, SpecFunError, SpectrumError};
use thiserror::Error;

/// Exit code of a successful run.
pub const EXIT_OK: i32 = 0;
/// Exit code for invalid configuration, arguments or input files.
pub const EXIT_VALIDATION: i32 = 2;
/// Exit code for numerical failures and failed verification checks.
pub const EXIT_NUMERICAL: i32 = 3;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("validation: {0}")]
    Validation(String),
    #[error("numerical: {0}")]
    Numerical(String),
    #[error("io: {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) | CliError::Io { .. } => EXIT_VALIDATION,
            CliError::Numerical(_) => EXIT_NUMERICAL,
        }
    }

    pub fn io(path: &std::path::Path, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.display().to_string(),
            source,
        }
    }
}

impl From<ModelError> for CliError {
    fn from(e: ModelError) -> Self {
        match e {
            ModelError::SpecFun(_) | ModelError::ComplexFlux(_) => CliError::Numerical(e.to_string()),
            _ => CliError::Validation(e.to_string()),
        }
    }
}

impl From<SpectrumError> for CliError {
    fn from(e: SpectrumError) -> Self {
        match e {
            SpectrumError::SpecFun(_) => CliError::Numerical(e.to_string()),
            _ => CliError::Validation(e.to_string()),
        }
    }
}

impl From<SpecFunError> for CliError {
    fn from(e: SpecFunError) -> Self {
        CliError::Numerical(e.to_string())
    }
}

impl From<LaplaceError> for CliError {
    fn from(e: LaplaceError) -> Self {
        match e {
            LaplaceError::Model(m) => m.into(),
            LaplaceError::HalfPlane(_) | LaplaceError::NearPole { .. } | LaplaceError::Length { .. } => {
                CliError::Validation(e.to_string())
            }
            _ => CliError::Numerical(e.to_string()),
        }
    }
}

impl From<InversionError> for CliError {
    fn from(e: InversionError) -> Self {
        match e {
            InversionError::Model(m) => m.into(),
            InversionError::Spectrum(s) => s.into(),
            InversionError::Config(_) | InversionError::Traces(_) | InversionError::SensorGeometry { .. } => {
                CliError::Validation(e.to_string())
            }
            InversionError::EmptySignal { .. } | InversionError::Conditioning { .. } | InversionError::SpecFun(_) => {
                CliError::Numerical(e.to_string())
            }
        }
    }
}
