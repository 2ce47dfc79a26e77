use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use reputex_core::{ModelError, StoreError};
use serde::{Deserialize, Serialize};

/// Machine-readable error codes returned by the API.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorCode {
    BadSlug,
    BadRequest,
    BadPaging,
    BadParameters,
    UnknownCompany,
    UnknownJob,
    NoReport,
    EmptyCorpus,
    Internal,
}

impl ErrorCode {
    pub fn status(self) -> StatusCode {
        match self {
            ErrorCode::BadSlug
            | ErrorCode::BadRequest
            | ErrorCode::BadPaging
            | ErrorCode::BadParameters => StatusCode::BAD_REQUEST,
            ErrorCode::UnknownCompany | ErrorCode::UnknownJob | ErrorCode::NoReport => {
                StatusCode::NOT_FOUND
            }
            ErrorCode::EmptyCorpus => StatusCode::UNPROCESSABLE_ENTITY,
            ErrorCode::Internal => StatusCode::INTERNAL_SERVER_ERROR,
        }
    }
}

/// Body of every error response.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ApiError {
    pub status: u16,
    pub code: ErrorCode,
    pub message: String,
}

impl ApiError {
    pub fn new(code: ErrorCode, message: impl Into<String>) -> Self {
        ApiError {
            status: code.status().as_u16(),
            code,
            message: message.into(),
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.code.status(), Json(self)).into_response()
    }
}

impl From<StoreError> for ApiError {
    fn from(e: StoreError) -> Self {
        let code = match e {
            StoreError::UnknownCompany(_) => ErrorCode::UnknownCompany,
            StoreError::NoReport(_) => ErrorCode::NoReport,
            StoreError::InvalidPaging(_) => ErrorCode::BadPaging,
            StoreError::InvalidRecord(_) => ErrorCode::BadRequest,
            StoreError::Io { .. } | StoreError::Corrupt { .. } => {
                tracing::error!("store failure: {e}");
                ErrorCode::Internal
            }
        };
        ApiError::new(code, e.to_string())
    }
}

impl From<ModelError> for ApiError {
    fn from(e: ModelError) -> Self {
        match e {
            ModelError::Store(s) => s.into(),
            ModelError::EmptyCorpus(_) => ApiError::new(ErrorCode::EmptyCorpus, e.to_string()),
            ModelError::InvalidParameters(_) => {
                ApiError::new(ErrorCode::BadParameters, e.to_string())
            }
        }
    }
}
