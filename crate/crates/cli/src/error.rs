use std::process::ExitCode;

use polysquare::{DiophantineError, FlowError, StatsError};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("{0}")]
    Singular(String),
    #[error("budget exceeded: {0}")]
    Budget(String),
    #[error("output error: {0}")]
    Output(String),
}

impl CliError {
    pub fn code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Singular(_) => 3,
            CliError::Budget(_) => 4,
            CliError::Output(_) => 1,
        }
    }

    pub fn exit(&self) -> ExitCode {
        ExitCode::from(self.code())
    }
}

impl From<FlowError> for CliError {
    fn from(e: FlowError) -> Self {
        match e {
            FlowError::HitSingularity { time, .. } => CliError::Singular(format!("HitSingularity at t={time}")),
            FlowError::NumericalDegeneracy(_) => CliError::Singular(e.to_string()),
            other => CliError::Config(other.to_string()),
        }
    }
}

impl From<StatsError> for CliError {
    fn from(e: StatsError) -> Self {
        match e {
            StatsError::PathologicalStart { index } => {
                CliError::Singular(format!("PathologicalStart at index {index}"))
            }
            StatsError::SingularGeodesic { time } => CliError::Singular(format!("HitSingularity at t={time}")),
            StatsError::Flow(f) => f.into(),
            other => CliError::Config(other.to_string()),
        }
    }
}

impl From<DiophantineError> for CliError {
    fn from(e: DiophantineError) -> Self {
        match e {
            DiophantineError::HeightTooLarge { .. } | DiophantineError::BudgetExceeded { .. } => {
                CliError::Budget(e.to_string())
            }
            other => CliError::Config(other.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Output(e.to_string())
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Output(e.to_string())
    }
}
