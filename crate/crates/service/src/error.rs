use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use serde::{Deserialize, Serialize};
use smartdrill::Error as CoreError;
use thiserror::Error;

/// Error payload of every failed request.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub code: String,
    pub message: String,
}

#[derive(Debug, Error)]
pub enum ServiceError {
    #[error("{kind} {id:?} not found")]
    NotFound { kind: &'static str, id: String },

    #[error("session {0} is busy with another change")]
    Busy(String),

    #[error("{0}")]
    BadRequest(String),

    #[error("configuration: {0}")]
    Config(String),

    #[error(transparent)]
    Core(#[from] CoreError),

    #[error("internal error: {0}")]
    Internal(String),
}

impl ServiceError {
    pub fn status(&self) -> StatusCode {
        match self {
            ServiceError::NotFound { .. } => StatusCode::NOT_FOUND,
            ServiceError::Busy(_) => StatusCode::CONFLICT,
            ServiceError::Internal(_) => StatusCode::INTERNAL_SERVER_ERROR,
            ServiceError::Core(CoreError::FanoutTooLarge(_) | CoreError::InstanceTooLarge(_)) => {
                StatusCode::INTERNAL_SERVER_ERROR
            }
            _ => StatusCode::BAD_REQUEST,
        }
    }

    pub fn code(&self) -> &'static str {
        match self {
            ServiceError::NotFound { .. } => "not_found",
            ServiceError::Busy(_) => "session_busy",
            ServiceError::BadRequest(_) => "bad_request",
            ServiceError::Config(_) => "invalid_config",
            ServiceError::Internal(_) => "internal",
            ServiceError::Core(e) => match e {
                CoreError::UnknownNode(_) => "unknown_node",
                CoreError::UnknownColumn(_) | CoreError::UnknownMeasure(_) => "unknown_column",
                CoreError::ColumnInstantiated(_) => "column_instantiated",
                CoreError::AlreadyExpanded(_) => "already_expanded",
                CoreError::NotExpanded(_) => "not_expanded",
                CoreError::InvalidRule { .. } => "invalid_rule",
                CoreError::InvalidConfig(_) | CoreError::InvalidWeight(_) | CoreError::NotNumeric(_) => {
                    "invalid_config"
                }
                CoreError::FanoutTooLarge(_) | CoreError::InstanceTooLarge(_) => "internal",
                _ => "invalid_dataset",
            },
        }
    }

    pub fn body(&self) -> ErrorBody {
        ErrorBody {
            code: self.code().into(),
            message: self.to_string(),
        }
    }
}

impl IntoResponse for ServiceError {
    fn into_response(self) -> Response {
        (self.status(), Json(self.body())).into_response()
    }
}

impl From<axum::extract::rejection::JsonRejection> for ServiceError {
    fn from(r: axum::extract::rejection::JsonRejection) -> Self {
        ServiceError::BadRequest(r.body_text())
    }
}
