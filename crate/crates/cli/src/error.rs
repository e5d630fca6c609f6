use scsm_core::estimators::EstimationError;
use scsm_core::inference::InferenceError;
use scsm_core::instrument::InstrumentError;
use scsm_core::simulation::ConfigError;
use scsm_core::DatasetError;
use thiserror::Error;

/// Exit status for bad input.
pub const EXIT_INPUT: i32 = 2;
/// Exit status for numerical or conditioning failures.
pub const EXIT_NUMERICAL: i32 = 3;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Dataset(#[from] DatasetError),
    #[error("{0}")]
    Instrument(#[from] InstrumentError),
    #[error("{0}")]
    Estimation(#[from] EstimationError),
    #[error("{0}")]
    Inference(#[from] InferenceError),
    #[error("{0}")]
    Config(#[from] ConfigError),
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("{0}")]
    Usage(String),
}

impl CliError {
    pub fn io(path: &std::path::Path, source: std::io::Error) -> Self {
        CliError::Io { path: path.display().to_string(), source }
    }

    pub fn name(&self) -> &'static str {
        match self {
            CliError::Dataset(e) => e.name(),
            CliError::Instrument(e) => e.name(),
            CliError::Estimation(e) => e.name(),
            CliError::Inference(e) => e.name(),
            CliError::Config(e) => e.name(),
            CliError::Io { .. } => "Io",
            CliError::Usage(_) => "Usage",
        }
    }

    pub fn exit_code(&self) -> i32 {
        let numerical = match self {
            CliError::Instrument(InstrumentError::LogisticNoConvergence { .. }) => true,
            CliError::Estimation(e) => e.is_numerical(),
            CliError::Inference(InferenceError::TraceMismatch) => true,
            _ => false,
        };
        if numerical {
            EXIT_NUMERICAL
        } else {
            EXIT_INPUT
        }
    }
}
