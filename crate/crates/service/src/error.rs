use std::path::PathBuf;

use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use serde::Serialize;
use thiserror::Error;

/// A request failure with its HTTP status.
#[derive(Debug, Error)]
pub enum ApiError {
    #[error("{0}")]
    BadRequest(String),
    #[error("{0}")]
    NotFound(String),
    #[error("{0}")]
    Unprocessable(String),
    #[error("{0}")]
    Internal(String),
}

impl ApiError {
    pub fn status(&self) -> StatusCode {
        match self {
            ApiError::BadRequest(_) => StatusCode::BAD_REQUEST,
            ApiError::NotFound(_) => StatusCode::NOT_FOUND,
            ApiError::Unprocessable(_) => StatusCode::UNPROCESSABLE_ENTITY,
            ApiError::Internal(_) => StatusCode::INTERNAL_SERVER_ERROR,
        }
    }

    /// Classify a pipeline error raised while processing client-supplied data.
    pub(crate) fn from_input(e: textfuse_core::Error) -> Self {
        use textfuse_core::Error as E;
        match e {
            E::InvalidParameter(_) | E::Config(_) | E::MissingMetric(_) => ApiError::BadRequest(e.to_string()),
            _ => ApiError::Unprocessable(e.to_string()),
        }
    }

    /// Errors on server-side data, such as a dataset file that went missing.
    pub(crate) fn from_server(e: textfuse_core::Error) -> Self {
        ApiError::Internal(e.to_string())
    }
}

#[derive(Serialize)]
struct ErrorBody {
    error: String,
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let status = self.status();
        if status.is_server_error() {
            tracing::error!(error = %self, "request failed");
        }
        (status, Json(ErrorBody { error: self.to_string() })).into_response()
    }
}

/// Startup failures.
#[derive(Debug, Error)]
pub enum ServiceError {
    #[error("dataset: {0}")]
    Dataset(#[from] textfuse_core::Error),
    #[error("ui directory {} does not exist", .0.display())]
    MissingUi(PathBuf),
    #[error("workers must be at least 1")]
    NoWorkers,
    #[error("server i/o: {0}")]
    Io(#[from] std::io::Error),
}
