use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use petwalk_core::Error;
use serde::Serialize;

/// Error body returned by every endpoint.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ErrorBody {
    pub error: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub field: Option<String>,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ApiError {
    pub status: StatusCode,
    pub body: ErrorBody,
}

impl ApiError {
    pub fn bad_request(field: Option<&str>, reason: impl Into<String>) -> Self {
        Self {
            status: StatusCode::BAD_REQUEST,
            body: ErrorBody {
                error: "invalid_input",
                field: field.map(str::to_string),
                reason: reason.into(),
            },
        }
    }

    pub fn conflict(reason: impl Into<String>) -> Self {
        Self {
            status: StatusCode::CONFLICT,
            body: ErrorBody {
                error: "conflict",
                field: None,
                reason: reason.into(),
            },
        }
    }
}

impl From<Error> for ApiError {
    fn from(e: Error) -> Self {
        let reason = e.to_string();
        let (status, error, field) = match &e {
            Error::InvalidInput { field, .. } => (StatusCode::BAD_REQUEST, "invalid_input", Some(field.clone())),
            Error::Parse { location, .. } => (StatusCode::BAD_REQUEST, "parse_error", Some(location.clone())),
            Error::UnsupportedType(_) => (StatusCode::BAD_REQUEST, "unsupported_type", Some("type".to_string())),
            Error::Degenerate(_) => (StatusCode::BAD_REQUEST, "degenerate", None),
            Error::Template(_) | Error::Config(_) => (StatusCode::INTERNAL_SERVER_ERROR, "internal", None),
            Error::NotFound(_) => (StatusCode::NOT_FOUND, "not_found", None),
            Error::Expired(_) => (StatusCode::GONE, "expired", None),
            Error::Conflict(_) => (StatusCode::CONFLICT, "conflict", None),
            Error::Ordering { .. } => (StatusCode::CONFLICT, "ordering", Some("t".to_string())),
        };
        Self {
            status,
            body: ErrorBody { error, field, reason },
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(self.body)).into_response()
    }
}
