//! Crate-level error type and the process exit codes the CLI maps it to.

use thiserror::Error;

use crate::metrics::MetricsError;
use crate::scheduler::ControllerError;
use crate::trace::TraceError;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid config: {0}")]
    ConfigInvalid(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Trace(TraceError),
    #[error(transparent)]
    Controller(#[from] ControllerError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
}

impl From<TraceError> for SimError {
    fn from(e: TraceError) -> Self {
        match e {
            TraceError::SinkWrite(io) => SimError::Io(io),
            other => SimError::Trace(other),
        }
    }
}

impl SimError {
    /// 0 success, 1 config error, 2 I/O error, 3 malformed trace.
    pub fn exit_code(&self) -> i32 {
        match self {
            SimError::ConfigInvalid(_) => 1,
            SimError::Io(_) => 2,
            SimError::Trace(_) => 3,
            SimError::Controller(_) => 1,
            SimError::Metrics(_) => 1,
        }
    }
}
