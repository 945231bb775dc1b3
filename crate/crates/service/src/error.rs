use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use neurowarp_client::api::ErrorBody;

/// An error response: status plus a JSON `{"error": ...}` body.
#[derive(Debug, thiserror::Error)]
#[error("{status}: {message}")]
pub struct ApiError {
    pub status: StatusCode,
    pub message: String,
}

impl ApiError {
    pub fn new(status: StatusCode, message: impl Into<String>) -> Self {
        ApiError {
            status,
            message: message.into(),
        }
    }

    pub fn not_found(what: impl Into<String>) -> Self {
        Self::new(StatusCode::NOT_FOUND, what)
    }

    pub fn bad_request(message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, message)
    }

    pub fn conflict(message: impl Into<String>) -> Self {
        Self::new(StatusCode::CONFLICT, message)
    }

    pub fn unprocessable(message: impl Into<String>) -> Self {
        Self::new(StatusCode::UNPROCESSABLE_ENTITY, message)
    }

    pub fn internal(message: impl Into<String>) -> Self {
        Self::new(StatusCode::INTERNAL_SERVER_ERROR, message)
    }
}

impl From<neurowarp_pipeline::Error> for ApiError {
    fn from(e: neurowarp_pipeline::Error) -> Self {
        use neurowarp_pipeline::Error as E;
        match e {
            E::Config(_) | E::ConfigFile { .. } => ApiError::unprocessable(e.to_string()),
            E::MissingArtifact { .. } => ApiError::conflict(e.to_string()),
            _ => ApiError::internal(e.to_string()),
        }
    }
}

impl From<neurowarp_core::Error> for ApiError {
    fn from(e: neurowarp_core::Error) -> Self {
        match e {
            neurowarp_core::Error::Invalid(_) | neurowarp_core::Error::Json(_) => ApiError::unprocessable(e.to_string()),
            _ => ApiError::internal(e.to_string()),
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        if self.status.is_server_error() {
            tracing::error!(status = %self.status, "{}", self.message);
        }
        (self.status, Json(ErrorBody { error: self.message })).into_response()
    }
}

pub type ApiResult<T> = Result<T, ApiError>;
