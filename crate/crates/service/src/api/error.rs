use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use serde::{Deserialize, Serialize};
use tokenlattice::client::ClientError;
use tokenlattice::embedding::EmbeddingError;
use tokenlattice::layout::LayoutError;
use tokenlattice::session::SessionError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorCode {
    BadRequest,
    NotFound,
    Conflict,
    ProviderError,
    Internal,
}

impl ErrorCode {
    pub fn status(self) -> StatusCode {
        match self {
            Self::BadRequest => StatusCode::BAD_REQUEST,
            Self::NotFound => StatusCode::NOT_FOUND,
            Self::Conflict => StatusCode::CONFLICT,
            Self::ProviderError => StatusCode::BAD_GATEWAY,
            Self::Internal => StatusCode::INTERNAL_SERVER_ERROR,
        }
    }
}

/// Body of every error response: `{"error": {code, message, detail}}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ApiError {
    pub code: ErrorCode,
    pub message: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detail: Option<serde_json::Value>,
}

#[derive(Serialize, Deserialize)]
pub struct ErrorBody {
    pub error: ApiError,
}

impl ApiError {
    pub fn new(code: ErrorCode, message: impl Into<String>) -> Self {
        Self {
            code,
            message: message.into(),
            detail: None,
        }
    }

    pub fn bad_request(message: impl Into<String>) -> Self {
        Self::new(ErrorCode::BadRequest, message)
    }

    pub fn not_found(message: impl Into<String>) -> Self {
        Self::new(ErrorCode::NotFound, message)
    }

    pub fn internal(message: impl Into<String>) -> Self {
        Self::new(ErrorCode::Internal, message)
    }

    pub fn with_detail(mut self, detail: serde_json::Value) -> Self {
        self.detail = Some(detail);
        self
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        if self.code == ErrorCode::Internal {
            log::error!("{}", self.message);
        }
        (self.code.status(), Json(ErrorBody { error: self })).into_response()
    }
}

impl From<SessionError> for ApiError {
    fn from(e: SessionError) -> Self {
        let code = match &e {
            SessionError::Conflict(_) | SessionError::NothingToUndo => ErrorCode::Conflict,
            SessionError::NotFound(_) => ErrorCode::NotFound,
            SessionError::InvalidArgument(_) | SessionError::Layout(LayoutError::InvalidParams(_)) => {
                ErrorCode::BadRequest
            }
            SessionError::Embedding(EmbeddingError::Provider { .. }) => ErrorCode::ProviderError,
            _ => ErrorCode::Internal,
        };
        Self::new(code, e.to_string())
    }
}

impl From<ClientError> for ApiError {
    fn from(e: ClientError) -> Self {
        let code = match &e {
            ClientError::InvalidRequest(_) | ClientError::Parse { .. } => ErrorCode::BadRequest,
            e if e.is_external() => ErrorCode::ProviderError,
            _ => ErrorCode::Internal,
        };
        let detail = match &e {
            ClientError::Configuration { status, .. } => Some(serde_json::json!({ "status": status })),
            ClientError::Transport { attempts, .. } => Some(serde_json::json!({ "attempts": attempts })),
            ClientError::PartialBatch {
                completed, expected, ..
            } => Some(serde_json::json!({ "completed": completed.len(), "expected": expected })),
            ClientError::Parse { line, .. } => Some(serde_json::json!({ "line": line })),
            _ => None,
        };
        Self {
            detail,
            ..Self::new(code, e.to_string())
        }
    }
}
