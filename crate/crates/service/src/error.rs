use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;

use motifsmith_core::api::ErrorBody;
use motifsmith_core::pipeline::PipelineError;

#[derive(Debug, thiserror::Error)]
pub enum ServiceError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// An error response with its status code.
#[derive(Debug)]
pub struct ApiError {
    pub status: StatusCode,
    pub body: ErrorBody,
}

impl ApiError {
    pub fn bad_request(kind: &str, message: impl Into<String>) -> Self {
        ApiError {
            status: StatusCode::BAD_REQUEST,
            body: ErrorBody::new(kind, None, message),
        }
    }

    pub fn unprocessable(kind: &str, message: impl Into<String>) -> Self {
        ApiError {
            status: StatusCode::UNPROCESSABLE_ENTITY,
            body: ErrorBody::new(kind, None, message),
        }
    }

    pub fn internal(message: impl Into<String>) -> Self {
        ApiError {
            status: StatusCode::INTERNAL_SERVER_ERROR,
            body: ErrorBody::new("internal", None, message),
        }
    }
}

fn status_for(kind: &str) -> StatusCode {
    match kind {
        "invalid_argument" => StatusCode::BAD_REQUEST,
        "no_meta_program" => StatusCode::NOT_FOUND,
        "exhausted" | "parse" => StatusCode::UNPROCESSABLE_ENTITY,
        "budget_exceeded" => StatusCode::PAYMENT_REQUIRED,
        "llm" | "missing_fixture" | "executor" => StatusCode::BAD_GATEWAY,
        _ => StatusCode::INTERNAL_SERVER_ERROR,
    }
}

impl From<PipelineError> for ApiError {
    fn from(e: PipelineError) -> Self {
        let body = ErrorBody::from(&e);
        ApiError {
            status: status_for(&body.error.kind),
            body,
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(self.body)).into_response()
    }
}
