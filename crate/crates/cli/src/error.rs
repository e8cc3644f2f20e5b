//! Process-level error taxonomy: every failure maps to one of three exit
//! codes so scripts can distinguish bad input (1), filesystem trouble (2) and
//! internal invariant violations (3).

use std::fmt;
use std::path::Path;

use relm_core::baselines::BaselineError;
use relm_core::container::ContainerError;
use relm_core::corpus::CorpusError;
use relm_core::finetune::FinetuneError;
use relm_core::langmodel::LmError;
use relm_core::metrics::MetricError;
use relm_core::tensor::TensorError;
use relm_core::vectorize::VectorizeError;

#[derive(Debug)]
pub enum CliError {
    /// Bad configuration or input data; exit code 1.
    Validation(String),
    /// Filesystem failure; exit code 2.
    Io(String),
    /// A contract inside the library was broken; exit code 3.
    Internal(String),
}

pub type Result<T> = std::result::Result<T, CliError>;

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) => 1,
            CliError::Io(_) => 2,
            CliError::Internal(_) => 3,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Validation(m) => write!(f, "invalid input: {m}"),
            CliError::Io(m) => write!(f, "i/o error: {m}"),
            CliError::Internal(m) => write!(f, "internal error: {m}"),
        }
    }
}

/// Annotates raw filesystem errors with the path involved.
pub fn io_at(path: &Path, err: std::io::Error) -> CliError {
    CliError::Io(format!("{}: {err}", path.display()))
}

impl From<CorpusError> for CliError {
    fn from(e: CorpusError) -> Self {
        match e {
            CorpusError::Io(io) => CliError::Io(io.to_string()),
            other => CliError::Validation(other.to_string()),
        }
    }
}

impl From<ContainerError> for CliError {
    fn from(e: ContainerError) -> Self {
        match e {
            ContainerError::Io { .. } => CliError::Io(e.to_string()),
            other => CliError::Validation(other.to_string()),
        }
    }
}

impl From<TensorError> for CliError {
    fn from(e: TensorError) -> Self {
        CliError::Internal(e.to_string())
    }
}

impl From<LmError> for CliError {
    fn from(e: LmError) -> Self {
        match e {
            LmError::Tensor(t) => CliError::Internal(t.to_string()),
            other => CliError::Validation(other.to_string()),
        }
    }
}

impl From<FinetuneError> for CliError {
    fn from(e: FinetuneError) -> Self {
        match e {
            FinetuneError::Tensor(t) => CliError::Internal(t.to_string()),
            FinetuneError::Lm(inner) => LmError::from(inner).into(),
            other => CliError::Validation(other.to_string()),
        }
    }
}

impl From<BaselineError> for CliError {
    fn from(e: BaselineError) -> Self {
        match e {
            BaselineError::Tensor(t) => CliError::Internal(t.to_string()),
            other => CliError::Validation(other.to_string()),
        }
    }
}

impl From<MetricError> for CliError {
    fn from(e: MetricError) -> Self {
        CliError::Validation(e.to_string())
    }
}

impl From<VectorizeError> for CliError {
    fn from(e: VectorizeError) -> Self {
        CliError::Validation(e.to_string())
    }
}
