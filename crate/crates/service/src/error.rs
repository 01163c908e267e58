use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use serde::{Deserialize, Serialize};

use presetlab_core::Error;

/// Wire form of every error response.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ErrorRecord {
    pub code: String,
    pub message: String,
    pub detail: Option<String>,
}

#[derive(Debug)]
pub struct ApiError {
    pub status: StatusCode,
    pub record: ErrorRecord,
}

impl ApiError {
    pub fn new(status: StatusCode, code: &str, message: impl Into<String>, detail: Option<String>) -> Self {
        Self {
            status,
            record: ErrorRecord {
                code: code.into(),
                message: message.into(),
                detail,
            },
        }
    }

    pub fn bad_request(message: impl Into<String>, detail: Option<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, "bad_request", message, detail)
    }

    pub fn unknown_session(id: &str) -> Self {
        Self::new(StatusCode::NOT_FOUND, "unknown_session", format!("unknown session {id:?}"), None)
    }

    pub fn not_found(message: impl Into<String>) -> Self {
        Self::new(StatusCode::NOT_FOUND, "not_found", message, None)
    }

    pub fn internal(message: impl Into<String>) -> Self {
        Self::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", message, None)
    }
}

impl From<Error> for ApiError {
    fn from(e: Error) -> Self {
        let (status, code) = match &e {
            Error::UnknownPreset(_) => (StatusCode::NOT_FOUND, "unknown_preset"),
            Error::UnknownGroup(_) => (StatusCode::NOT_FOUND, "unknown_group"),
            Error::NotEnoughFavorites(_) => (StatusCode::UNPROCESSABLE_ENTITY, "not_enough_favorites"),
            Error::InvalidArgument(_) => (StatusCode::BAD_REQUEST, "invalid_argument"),
            Error::SchemaMismatch(_) | Error::InvalidPreset { .. } => (StatusCode::UNPROCESSABLE_ENTITY, "invalid_preset"),
            e if e.is_provider_error() => (StatusCode::BAD_GATEWAY, "provider_error"),
            _ => (StatusCode::INTERNAL_SERVER_ERROR, "internal"),
        };
        let detail = match &e {
            Error::EmbedFailed { preset, .. } => Some(format!("preset {preset}")),
            _ => None,
        };
        ApiError::new(status, code, e.to_string(), detail)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(self.record)).into_response()
    }
}
