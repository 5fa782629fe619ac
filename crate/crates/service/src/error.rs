use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use schemars::JsonSchema;
use serde::Serialize;
use serde_json::Value;
use souschef_core::assistant::AssistantError;
use souschef_core::i18n::I18nError;
use souschef_core::llm::extract::ExtractError;
use souschef_core::perception::PerceptionError;
use souschef_core::recipes::RecipeError;
use souschef_core::{LlmError, ModelError};

use crate::store::StoreError;
use crate::timers::TimerError;

/// Error body returned by every endpoint.
#[derive(Debug, Serialize, JsonSchema)]
pub struct ErrorBody {
    pub error: ErrorDetail,
}

#[derive(Debug, Serialize, JsonSchema)]
pub struct ErrorDetail {
    pub code: String,
    pub message: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub details: Option<Value>,
}

#[derive(Debug)]
pub struct ApiError {
    pub status: StatusCode,
    pub code: &'static str,
    pub message: String,
    pub details: Option<Value>,
}

impl ApiError {
    pub fn new(status: StatusCode, code: &'static str, message: impl Into<String>) -> Self {
        Self {
            status,
            code,
            message: message.into(),
            details: None,
        }
    }

    pub fn bad_request(message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, "invalid_input", message)
    }

    pub fn not_found(what: &str, id: impl std::fmt::Display) -> Self {
        Self::new(StatusCode::NOT_FOUND, "not_found", format!("{what} {id} not found"))
    }

    pub fn llm_deadline(secs: u64) -> Self {
        Self::new(
            StatusCode::GATEWAY_TIMEOUT,
            "llm_timeout",
            format!("model did not answer within {secs} s"),
        )
    }

    fn with_details(mut self, details: Value) -> Self {
        self.details = Some(details);
        self
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = ErrorBody {
            error: ErrorDetail {
                code: self.code.to_string(),
                message: self.message,
                details: self.details,
            },
        };
        (self.status, Json(body)).into_response()
    }
}

impl From<LlmError> for ApiError {
    fn from(e: LlmError) -> Self {
        let (status, code) = match &e {
            LlmError::Timeout { .. } => (StatusCode::GATEWAY_TIMEOUT, "llm_timeout"),
            LlmError::RateLimitExhausted { .. } => (StatusCode::SERVICE_UNAVAILABLE, "llm_rate_limited"),
            LlmError::ProviderRejection { .. } => (StatusCode::BAD_GATEWAY, "llm_rejected"),
            LlmError::InvalidRequest(_) => (StatusCode::INTERNAL_SERVER_ERROR, "llm_invalid_request"),
        };
        Self::new(status, code, e.to_string())
    }
}

impl From<ExtractError> for ApiError {
    fn from(e: ExtractError) -> Self {
        Self::new(StatusCode::BAD_GATEWAY, "unparseable_model_output", e.to_string())
    }
}

impl From<ModelError> for ApiError {
    fn from(e: ModelError) -> Self {
        Self::new(StatusCode::UNPROCESSABLE_ENTITY, "invalid_input", e.to_string())
    }
}

impl From<PerceptionError> for ApiError {
    fn from(e: PerceptionError) -> Self {
        match e {
            PerceptionError::Llm(e) => e.into(),
            PerceptionError::Extract(e) => e.into(),
            PerceptionError::Model(e) => e.into(),
            PerceptionError::NotFound(key) => Self::not_found("pantry item", key),
            PerceptionError::InvalidStep { .. } => {
                Self::new(StatusCode::UNPROCESSABLE_ENTITY, "invalid_step", e.to_string())
            }
            PerceptionError::InvalidSnapshot(_) => {
                Self::new(StatusCode::UNPROCESSABLE_ENTITY, "invalid_snapshot", e.to_string())
            }
        }
    }
}

impl From<RecipeError> for ApiError {
    fn from(e: RecipeError) -> Self {
        match e {
            RecipeError::Llm(e) => e.into(),
            RecipeError::Extract(e) => e.into(),
            RecipeError::NotFound(id) => Self::not_found("recipe", id),
            RecipeError::NoValidRecipes(ref rejected) => {
                let details = serde_json::to_value(rejected).unwrap_or(Value::Null);
                Self::new(StatusCode::UNPROCESSABLE_ENTITY, "no_valid_recipes", e.to_string()).with_details(details)
            }
            RecipeError::EmptyPantry => Self::new(StatusCode::CONFLICT, "empty_pantry", e.to_string()),
            RecipeError::InvalidCount | RecipeError::RatingOutOfRange(_) => {
                Self::new(StatusCode::UNPROCESSABLE_ENTITY, "invalid_input", e.to_string())
            }
        }
    }
}

impl From<AssistantError> for ApiError {
    fn from(e: AssistantError) -> Self {
        match e {
            AssistantError::Llm(e) => e.into(),
            AssistantError::InvalidInput => Self::new(StatusCode::UNPROCESSABLE_ENTITY, "invalid_input", e.to_string()),
            AssistantError::EmptyReply => Self::new(StatusCode::BAD_GATEWAY, "empty_reply", e.to_string()),
        }
    }
}

impl From<I18nError> for ApiError {
    fn from(e: I18nError) -> Self {
        match e {
            I18nError::Llm(e) => e.into(),
            I18nError::Extract(e) => e.into(),
            I18nError::MissingKey(_) | I18nError::UnsupportedLanguage(_) => {
                Self::new(StatusCode::NOT_FOUND, "not_found", e.to_string())
            }
            I18nError::EmptyText => Self::new(StatusCode::UNPROCESSABLE_ENTITY, "invalid_input", e.to_string()),
        }
    }
}

impl From<TimerError> for ApiError {
    fn from(e: TimerError) -> Self {
        match e {
            TimerError::InvalidState { .. } => Self::new(StatusCode::CONFLICT, "invalid_state", e.to_string()),
            _ => Self::new(StatusCode::UNPROCESSABLE_ENTITY, "invalid_input", e.to_string()),
        }
    }
}

impl From<StoreError> for ApiError {
    fn from(e: StoreError) -> Self {
        tracing::error!(error = %e, "store write failed");
        Self::new(StatusCode::INTERNAL_SERVER_ERROR, "store_failure", e.to_string())
    }
}
