//! Provider-agnostic multimodal completion.
//!
//! [`Gateway`] is the handle the rest of the crate calls. It validates a
//! request and forwards it to an [`LlmProvider`]: either [`LiveProvider`]
//! (HTTPS, Gemini-style wire format, retried) or [`MockProvider`]
//! (fixture files, bit-deterministic).

pub mod extract;
pub mod live;
pub mod mock;
pub mod template;

use std::fmt;
use std::sync::Arc;

use async_trait::async_trait;
use schemars::JsonSchema;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::i18n::LanguageTag;
pub use live::{LiveConfig, LiveProvider, RetryPolicy, API_KEY_ENV};
pub use mock::MockProvider;
pub use template::{render_prompt, PromptContext, TemplateError, TemplateId};

pub const DEFAULT_MAX_OUTPUT_TOKENS: u32 = 2048;

#[derive(Clone, PartialEq, Eq)]
pub struct ImageInput {
    pub bytes: Vec<u8>,
    pub mime_type: String,
    pub width_px: u32,
    pub height_px: u32,
}

impl fmt::Debug for ImageInput {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ImageInput")
            .field("bytes", &format_args!("<{} bytes>", self.bytes.len()))
            .field("mime_type", &self.mime_type)
            .field("width_px", &self.width_px)
            .field("height_px", &self.height_px)
            .finish()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LlmRequest {
    pub template_id: TemplateId,
    pub system_instruction: String,
    pub user_text: String,
    pub image: Option<ImageInput>,
    pub language: LanguageTag,
    pub max_output_tokens: u32,
    /// Selects the mock fixture `{template_id}__{tag}`; the live provider ignores it.
    pub fixture_tag: Option<String>,
}

impl LlmRequest {
    pub fn new(template_id: TemplateId, user_text: impl Into<String>, language: LanguageTag) -> Self {
        Self {
            template_id,
            system_instruction: template_id.default_system_instruction().to_string(),
            user_text: user_text.into(),
            image: None,
            language,
            max_output_tokens: DEFAULT_MAX_OUTPUT_TOKENS,
            fixture_tag: None,
        }
    }

    pub fn with_system_instruction(mut self, instruction: impl Into<String>) -> Self {
        self.system_instruction = instruction.into();
        self
    }

    pub fn with_image(mut self, image: ImageInput) -> Self {
        self.image = Some(image);
        self
    }

    pub fn with_max_output_tokens(mut self, tokens: u32) -> Self {
        self.max_output_tokens = tokens;
        self
    }

    pub fn with_fixture(mut self, tag: impl Into<String>) -> Self {
        self.fixture_tag = Some(tag.into());
        self
    }

    pub fn validate(&self) -> Result<(), LlmError> {
        let needs_image = self.template_id.needs_image();
        match (&self.image, needs_image) {
            (None, true) => {
                return Err(LlmError::InvalidRequest(format!(
                    "{} requires an image",
                    self.template_id
                )))
            }
            (Some(_), false) => {
                return Err(LlmError::InvalidRequest(format!(
                    "{} does not take an image",
                    self.template_id
                )))
            }
            _ => {}
        }
        if let Some(image) = &self.image {
            if image.bytes.is_empty() || image.width_px == 0 || image.height_px == 0 {
                return Err(LlmError::InvalidRequest("image is empty".into()));
            }
        }
        if self.max_output_tokens == 0 {
            return Err(LlmError::InvalidRequest(
                "max_output_tokens must be positive".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
#[serde(rename_all = "snake_case")]
pub enum ProviderKind {
    Live,
    Mock,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LlmResponse {
    /// May contain prose around the structured payload.
    pub raw_text: String,
    pub provider: ProviderKind,
    pub latency_ms: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LlmError {
    #[error("provider timed out after {attempts} attempt(s)")]
    Timeout { attempts: u32 },
    #[error("provider rate limit still exceeded after {attempts} attempt(s)")]
    RateLimitExhausted { attempts: u32 },
    #[error("provider rejected the request after {attempts} attempt(s): {message}")]
    ProviderRejection { attempts: u32, message: String },
    #[error("invalid request: {0}")]
    InvalidRequest(String),
}

impl LlmError {
    pub fn attempts(&self) -> u32 {
        match self {
            LlmError::Timeout { attempts }
            | LlmError::RateLimitExhausted { attempts }
            | LlmError::ProviderRejection { attempts, .. } => *attempts,
            LlmError::InvalidRequest(_) => 0,
        }
    }
}

#[async_trait]
pub trait LlmProvider: Send + Sync {
    fn kind(&self) -> ProviderKind;

    async fn complete(&self, request: &LlmRequest) -> Result<LlmResponse, LlmError>;
}

/// Cheap-to-clone handle over a shared provider.
#[derive(Clone)]
pub struct Gateway {
    provider: Arc<dyn LlmProvider>,
    fixture_tag: Option<String>,
}

impl fmt::Debug for Gateway {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Gateway")
            .field("provider", &self.provider.kind())
            .field("fixture_tag", &self.fixture_tag)
            .finish()
    }
}

impl Gateway {
    pub fn new<P: LlmProvider + 'static>(provider: P) -> Self {
        Self::from_arc(Arc::new(provider))
    }

    pub fn from_arc(provider: Arc<dyn LlmProvider>) -> Self {
        Self {
            provider,
            fixture_tag: None,
        }
    }

    /// A handle that stamps `tag` on every request that does not carry one.
    pub fn with_fixture(&self, tag: impl Into<String>) -> Self {
        Self {
            provider: Arc::clone(&self.provider),
            fixture_tag: Some(tag.into()),
        }
    }

    pub fn kind(&self) -> ProviderKind {
        self.provider.kind()
    }

    pub async fn complete(&self, mut request: LlmRequest) -> Result<LlmResponse, LlmError> {
        request.validate()?;
        if request.fixture_tag.is_none() {
            request.fixture_tag = self.fixture_tag.clone();
        }
        tracing::debug!(template = %request.template_id, fixture = ?request.fixture_tag, "completion");
        self.provider.complete(&request).await
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn image() -> ImageInput {
        ImageInput {
            bytes: vec![1, 2, 3],
            mime_type: "image/png".into(),
            width_px: 4,
            height_px: 4,
        }
    }

    #[test]
    fn image_required_only_for_vision_templates() {
        let req = LlmRequest::new(TemplateId::DetectIngredients, "x", LanguageTag::En);
        assert!(req.validate().is_err());
        assert!(req.with_image(image()).validate().is_ok());

        let req = LlmRequest::new(TemplateId::AssistantChat, "x", LanguageTag::En);
        assert!(req.validate().is_ok());
        assert!(req.with_image(image()).validate().is_err());

        let req = LlmRequest::new(TemplateId::StepFeedback, "x", LanguageTag::En).with_image(image());
        assert!(req.validate().is_ok());
    }

    #[test]
    fn zero_token_budget_rejected() {
        let req = LlmRequest::new(TemplateId::Translate, "x", LanguageTag::Fr).with_max_output_tokens(0);
        assert!(matches!(req.validate(), Err(LlmError::InvalidRequest(_))));
    }

    #[test]
    fn attempts_reported() {
        assert_eq!(LlmError::Timeout { attempts: 3 }.attempts(), 3);
        assert_eq!(
            LlmError::ProviderRejection {
                attempts: 1,
                message: "x".into()
            }
            .attempts(),
            1
        );
    }
}
