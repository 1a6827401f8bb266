use serde::Serialize;
use thiserror::Error;
use trajql_core::engine::EvalError;
use trajql_core::model::ModelError;
use trajql_core::subgroup::SubgroupError;
use trajql_core::ParseError;

use crate::dataset::LoadError;

#[derive(Debug, Error)]
pub enum WorkbenchError {
    #[error("{0}")]
    Parse(ParseError),
    #[error(transparent)]
    Load(#[from] LoadError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Subgroup(#[from] SubgroupError),
    #[error("{what} `{id}` not found")]
    NotFound { what: &'static str, id: String },
    #[error("{0}")]
    Conflict(String),
    #[error("{0}")]
    Invalid(String),
    #[error("cancelled")]
    Cancelled,
    #[error("{0}")]
    Internal(String),
}

/// Broad class of an error, for HTTP statuses and exit codes.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ErrorClass {
    User,
    NotFound,
    Conflict,
    Internal,
}

/// JSON error body.
#[derive(Clone, Debug, PartialEq, Serialize, serde::Deserialize)]
pub struct ErrorBody {
    pub code: String,
    pub message: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub offset: Option<usize>,
}

impl WorkbenchError {
    pub fn not_found(what: &'static str, id: &str) -> Self {
        WorkbenchError::NotFound { what, id: id.to_string() }
    }

    pub fn internal(e: impl std::fmt::Display) -> Self {
        WorkbenchError::Internal(e.to_string())
    }

    pub fn code(&self) -> &'static str {
        match self {
            WorkbenchError::Parse(_) => "parse_error",
            WorkbenchError::Load(e) => e.code(),
            WorkbenchError::Eval(e) => e.code(),
            WorkbenchError::Model(e) => e.code(),
            WorkbenchError::Subgroup(e) => e.code(),
            WorkbenchError::NotFound { .. } => "not_found",
            WorkbenchError::Conflict(_) => "conflict",
            WorkbenchError::Invalid(_) => "invalid_request",
            WorkbenchError::Cancelled => "cancelled",
            WorkbenchError::Internal(_) => "internal_error",
        }
    }

    pub fn class(&self) -> ErrorClass {
        match self {
            WorkbenchError::NotFound { .. } => ErrorClass::NotFound,
            WorkbenchError::Conflict(_) => ErrorClass::Conflict,
            WorkbenchError::Internal(_) => ErrorClass::Internal,
            _ => ErrorClass::User,
        }
    }

    /// Byte offset of a syntax error, when there is one.
    pub fn offset(&self) -> Option<usize> {
        match self {
            WorkbenchError::Parse(e) => Some(e.offset),
            WorkbenchError::Model(ModelError::Parse { error, .. }) => Some(error.offset),
            _ => None,
        }
    }

    pub fn body(&self) -> ErrorBody {
        ErrorBody { code: self.code().into(), message: self.to_string(), offset: self.offset() }
    }
}

impl From<ParseError> for WorkbenchError {
    fn from(e: ParseError) -> Self {
        WorkbenchError::Parse(e)
    }
}
