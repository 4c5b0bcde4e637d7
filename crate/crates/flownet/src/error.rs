//! Command errors and their exit codes.

use flownet_core::{PerturbationError, ResilienceError, RoutingError, SimError};

use crate::spec::SpecParseError;

/// Exit code 1.
pub const ANALYSIS_FAILURE: i32 = 1;
/// Exit code 2.
pub const INPUT_ERROR: i32 = 2;
/// Exit code 3.
pub const INTERNAL_ERROR: i32 = 3;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Spec(#[from] SpecParseError),
    #[error("{0}")]
    Input(String),
    #[error("{0}")]
    Analysis(String),
    #[error("internal consistency error: {0}")]
    Internal(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Spec(_) | Self::Input(_) => INPUT_ERROR,
            Self::Analysis(_) => ANALYSIS_FAILURE,
            Self::Internal(_) => INTERNAL_ERROR,
        }
    }

    pub fn io(what: &str, e: std::io::Error) -> Self {
        Self::Input(format!("cannot write {what}: {e}"))
    }
}

impl From<SimError> for CliError {
    fn from(e: SimError) -> Self {
        match e {
            SimError::NoEquilibrium { .. }
            | SimError::NonConvergence { .. }
            | SimError::StepSizeUnderflow { .. } => Self::Analysis(e.to_string()),
            _ => Self::Input(e.to_string()),
        }
    }
}

impl From<ResilienceError> for CliError {
    fn from(e: ResilienceError) -> Self {
        match e {
            ResilienceError::BoundViolation { .. } => Self::Internal(e.to_string()),
            _ => Self::Input(e.to_string()),
        }
    }
}

impl From<RoutingError> for CliError {
    fn from(e: RoutingError) -> Self {
        Self::Input(e.to_string())
    }
}

impl From<PerturbationError> for CliError {
    fn from(e: PerturbationError) -> Self {
        match e {
            PerturbationError::Simulation(e) => e.into(),
            PerturbationError::Resilience(e) => e.into(),
            e => Self::Input(e.to_string()),
        }
    }
}
