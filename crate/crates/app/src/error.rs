use thiserror::Error;
use umis_core::bn::{BnError, LoadError};
use umis_core::eval::EvalError;
use umis_core::graphgen::GenError;
use umis_core::infer::InferError;
use umis_core::umnet::UmError;

use crate::evidence::EvidenceError;

/// Failure classes, one per process exit code.
#[derive(Debug, Error)]
pub enum AppError {
    #[error("{0}")]
    Usage(String),
    /// Bad inputs: unreadable or invalid files, parameters out of range.
    #[error("{0}")]
    Validation(String),
    /// Well-formed inputs that still could not be processed.
    #[error("{0}")]
    Runtime(String),
}

impl AppError {
    pub fn exit_code(&self) -> i32 {
        match self {
            AppError::Usage(_) => 1,
            AppError::Validation(_) => 2,
            AppError::Runtime(_) => 3,
        }
    }

    pub fn validation(msg: impl std::fmt::Display) -> Self {
        AppError::Validation(msg.to_string())
    }

    pub fn runtime(msg: impl std::fmt::Display) -> Self {
        AppError::Runtime(msg.to_string())
    }
}

impl From<BnError> for AppError {
    fn from(e: BnError) -> Self {
        match e {
            BnError::ZeroProbabilityEvidence => AppError::runtime(e),
            _ => AppError::validation(e),
        }
    }
}

impl From<LoadError> for AppError {
    fn from(e: LoadError) -> Self {
        AppError::validation(e)
    }
}

impl From<GenError> for AppError {
    fn from(e: GenError) -> Self {
        AppError::validation(e)
    }
}

impl From<UmError> for AppError {
    fn from(e: UmError) -> Self {
        match e {
            UmError::Io(_) | UmError::MissingRng => AppError::runtime(e),
            _ => AppError::validation(e),
        }
    }
}

impl From<InferError> for AppError {
    fn from(e: InferError) -> Self {
        match e {
            InferError::Network(e) => e.into(),
            InferError::Model(e) => e.into(),
            InferError::AllWeightsZero => AppError::runtime(e),
            _ => AppError::validation(e),
        }
    }
}

impl From<EvalError> for AppError {
    fn from(e: EvalError) -> Self {
        match e {
            EvalError::Network(e) => e.into(),
            EvalError::Inference(e) => e.into(),
            EvalError::Model(e) => e.into(),
            EvalError::Invalid(_) | EvalError::Json(_) => AppError::validation(e),
            EvalError::Io(_) | EvalError::Csv(_) => AppError::runtime(e),
        }
    }
}

impl From<EvidenceError> for AppError {
    fn from(e: EvidenceError) -> Self {
        AppError::validation(e)
    }
}
