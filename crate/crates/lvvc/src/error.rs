use std::path::PathBuf;
use std::process::ExitCode;

use lvvc_core::circuit::CircuitError;
use lvvc_core::demand::DemandError;
use lvvc_core::dlnn::DlnnError;
use lvvc_core::experiments::ExperimentError;
use lvvc_core::features::FeatureError;
use lvvc_core::impedance::ImpedanceError;
use lvvc_core::powerflow::PowerFlowError;

/// Process exit status classes.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ExitClass {
    Io = 1,
    Config = 2,
    Simulation = 3,
    Training = 4,
}

impl From<ExitClass> for ExitCode {
    fn from(c: ExitClass) -> ExitCode {
        ExitCode::from(c as u8)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("cannot read {path}: {source}")]
    Read {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("cannot write {path}: {source}")]
    Write {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        source: serde_json::Error,
    },
    #[error("{path}:{line}: {message}")]
    Format {
        path: PathBuf,
        line: u64,
        message: String,
    },
    #[error("{0}")]
    Config(String),
    #[error("invalid circuit: {0}")]
    Circuit(#[from] CircuitError),
    #[error(transparent)]
    Demand(#[from] DemandError),
    #[error(transparent)]
    Impedance(#[from] ImpedanceError),
    #[error(transparent)]
    PowerFlow(#[from] PowerFlowError),
    #[error(transparent)]
    Features(#[from] FeatureError),
    #[error(transparent)]
    Dlnn(#[from] DlnnError),
    #[error(transparent)]
    Experiment(#[from] ExperimentError),
    #[error("{stage}: {source}")]
    Stage {
        stage: &'static str,
        source: Box<Error>,
    },
}

impl Error {
    pub fn format(path: impl Into<PathBuf>, line: u64, message: impl Into<String>) -> Error {
        Error::Format {
            path: path.into(),
            line,
            message: message.into(),
        }
    }

    pub fn in_stage(self, stage: &'static str) -> Error {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }

    pub fn class(&self) -> ExitClass {
        match self {
            Error::Write { .. } => ExitClass::Io,
            Error::Read { .. }
            | Error::Json { .. }
            | Error::Format { .. }
            | Error::Config(_)
            | Error::Circuit(_)
            | Error::Demand(_)
            | Error::Features(_) => ExitClass::Config,
            Error::Impedance(_) | Error::PowerFlow(_) => ExitClass::Simulation,
            Error::Dlnn(_) => ExitClass::Training,
            Error::Experiment(e) => match e {
                ExperimentError::Demand(_)
                | ExperimentError::Features { .. }
                | ExperimentError::TooFewPlacements(_) => ExitClass::Config,
                ExperimentError::PowerFlow(_) | ExperimentError::Impedance(_) => {
                    ExitClass::Simulation
                }
                ExperimentError::Training { .. } | ExperimentError::Stats { .. } => {
                    ExitClass::Training
                }
            },
            Error::Stage { source, .. } => source.class(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
