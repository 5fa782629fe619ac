//! HTTPS provider speaking the Gemini `generateContent` wire format.

use std::time::{Duration, Instant};

use async_trait::async_trait;
use base64::Engine as _;
use serde::Deserialize;
use serde_json::{json, Value};

use super::{LlmError, LlmProvider, LlmRequest, LlmResponse, ProviderKind};

/// Environment variable holding the provider API key.
pub const API_KEY_ENV: &str = "SOUS_CHEF_API_KEY";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RetryPolicy {
    pub max_attempts: u32,
    /// Delay before attempt `n + 1` is `backoff[n - 1]` (last entry repeats).
    pub backoff: Vec<Duration>,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            max_attempts: 3,
            backoff: vec![
                Duration::from_millis(500),
                Duration::from_secs(1),
                Duration::from_secs(2),
            ],
        }
    }
}

impl RetryPolicy {
    fn delay_after(&self, attempt: u32) -> Duration {
        let idx = (attempt as usize).saturating_sub(1);
        self.backoff
            .get(idx)
            .or(self.backoff.last())
            .copied()
            .unwrap_or_default()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Deserialize)]
pub struct LiveConfig {
    /// Base URL, e.g. `https://generativelanguage.googleapis.com/v1beta`.
    pub endpoint: String,
    #[serde(default = "default_model")]
    pub model: String,
    /// Falls back to `SOUS_CHEF_API_KEY` when absent.
    #[serde(default)]
    pub api_key: Option<String>,
    #[serde(default = "default_request_timeout", with = "secs")]
    pub request_timeout: Duration,
    #[serde(skip)]
    pub retry: RetryPolicy,
}

fn default_model() -> String {
    "gemini-1.5-flash".into()
}

fn default_request_timeout() -> Duration {
    Duration::from_secs(30)
}

mod secs {
    use serde::{Deserialize, Deserializer};
    use std::time::Duration;

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Duration, D::Error> {
        Ok(Duration::from_secs_f64(f64::deserialize(d)?))
    }
}

impl LiveConfig {
    pub fn new(endpoint: impl Into<String>) -> Self {
        Self {
            endpoint: endpoint.into(),
            model: default_model(),
            api_key: None,
            request_timeout: default_request_timeout(),
            retry: RetryPolicy::default(),
        }
    }
}

pub struct LiveProvider {
    client: reqwest::Client,
    url: String,
    api_key: Option<String>,
    retry: RetryPolicy,
}

enum Failure {
    Timeout,
    RateLimited,
    Unavailable(String),
    Fatal(String),
}

impl LiveProvider {
    pub fn new(config: LiveConfig) -> Result<Self, LlmError> {
        let client = reqwest::Client::builder()
            .timeout(config.request_timeout)
            .connect_timeout(config.request_timeout)
            .build()
            .map_err(|e| LlmError::InvalidRequest(format!("http client: {e}")))?;
        let api_key = config
            .api_key
            .or_else(|| std::env::var(API_KEY_ENV).ok())
            .filter(|k| !k.is_empty());
        if api_key.is_none() {
            tracing::warn!("{API_KEY_ENV} is not set; requests will be sent without a key");
        }
        let url = format!(
            "{}/models/{}:generateContent",
            config.endpoint.trim_end_matches('/'),
            config.model
        );
        Ok(Self {
            client,
            url,
            api_key,
            retry: config.retry,
        })
    }

    async fn attempt(&self, body: &Value) -> Result<String, Failure> {
        let mut req = self.client.post(&self.url).json(body);
        if let Some(key) = &self.api_key {
            req = req.header("x-goog-api-key", key);
        }
        let resp = match req.send().await {
            Ok(resp) => resp,
            Err(e) if e.is_timeout() || e.is_connect() => return Err(Failure::Timeout),
            Err(e) => return Err(Failure::Unavailable(e.to_string())),
        };
        let status = resp.status();
        if status.as_u16() == 429 {
            return Err(Failure::RateLimited);
        }
        if status.is_server_error() {
            return Err(Failure::Unavailable(format!("HTTP {status}")));
        }
        let text = match resp.text().await {
            Ok(text) => text,
            Err(e) if e.is_timeout() => return Err(Failure::Timeout),
            Err(e) => return Err(Failure::Unavailable(e.to_string())),
        };
        if !status.is_success() {
            return Err(Failure::Fatal(format!("HTTP {status}: {}", truncate(&text, 300))));
        }
        candidate_text(&text).map_err(Failure::Fatal)
    }
}

#[async_trait]
impl LlmProvider for LiveProvider {
    fn kind(&self) -> ProviderKind {
        ProviderKind::Live
    }

    async fn complete(&self, request: &LlmRequest) -> Result<LlmResponse, LlmError> {
        let body = request_body(request);
        let started = Instant::now();
        let max = self.retry.max_attempts.max(1);
        let mut last = Failure::Timeout;
        for attempt in 1..=max {
            match self.attempt(&body).await {
                Ok(raw_text) => {
                    return Ok(LlmResponse {
                        raw_text,
                        provider: ProviderKind::Live,
                        latency_ms: started.elapsed().as_millis() as u64,
                    })
                }
                Err(Failure::Fatal(message)) => {
                    return Err(LlmError::ProviderRejection {
                        attempts: attempt,
                        message,
                    })
                }
                Err(transient) => {
                    last = transient;
                    if attempt < max {
                        let delay = self.retry.delay_after(attempt);
                        tracing::warn!(attempt, ?delay, "transient provider failure, retrying");
                        tokio::time::sleep(delay).await;
                    }
                }
            }
        }
        Err(match last {
            Failure::RateLimited => LlmError::RateLimitExhausted { attempts: max },
            Failure::Unavailable(message) | Failure::Fatal(message) => {
                LlmError::ProviderRejection {
                    attempts: max,
                    message,
                }
            }
            Failure::Timeout => LlmError::Timeout { attempts: max },
        })
    }
}

pub(crate) fn request_body(request: &LlmRequest) -> Value {
    let mut parts = vec![json!({ "text": request.user_text })];
    if let Some(image) = &request.image {
        parts.push(json!({
            "inlineData": {
                "mimeType": image.mime_type,
                "data": base64::engine::general_purpose::STANDARD.encode(&image.bytes),
            }
        }));
    }
    json!({
        "systemInstruction": { "parts": [{ "text": request.system_instruction }] },
        "contents": [{ "role": "user", "parts": parts }],
        "generationConfig": { "maxOutputTokens": request.max_output_tokens },
    })
}

#[derive(Deserialize)]
struct GenerateResponse {
    #[serde(default)]
    candidates: Vec<Candidate>,
}

#[derive(Deserialize)]
struct Candidate {
    content: Option<Content>,
}

#[derive(Deserialize)]
struct Content {
    #[serde(default)]
    parts: Vec<Part>,
}

#[derive(Deserialize)]
struct Part {
    text: Option<String>,
}

fn candidate_text(body: &str) -> Result<String, String> {
    let parsed: GenerateResponse =
        serde_json::from_str(body).map_err(|e| format!("unreadable response: {e}"))?;
    let content = parsed
        .candidates
        .into_iter()
        .next()
        .and_then(|c| c.content)
        .ok_or_else(|| "response has no candidates".to_string())?;
    let text: String = content.parts.into_iter().filter_map(|p| p.text).collect();
    if text.is_empty() {
        return Err("response candidate has no text".into());
    }
    Ok(text)
}

fn truncate(s: &str, max: usize) -> &str {
    match s.char_indices().nth(max) {
        Some((i, _)) => &s[..i],
        None => s,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::i18n::LanguageTag;
    use crate::llm::{ImageInput, TemplateId};

    #[test]
    fn body_carries_image_inline() {
        let req = LlmRequest::new(TemplateId::DetectIngredients, "find things", LanguageTag::En)
            .with_image(ImageInput {
                bytes: vec![0xff, 0xd8, 0xff],
                mime_type: "image/jpeg".into(),
                width_px: 2,
                height_px: 2,
            });
        let body = request_body(&req);
        let parts = &body["contents"][0]["parts"];
        assert_eq!(parts[0]["text"], "find things");
        assert_eq!(parts[1]["inlineData"]["mimeType"], "image/jpeg");
        assert_eq!(parts[1]["inlineData"]["data"], "/9j/");
        assert_eq!(body["generationConfig"]["maxOutputTokens"], 2048);
    }

    #[test]
    fn candidate_parts_are_concatenated() {
        let body = r#"{"candidates":[{"content":{"parts":[{"text":"a"},{"text":"b"}]}}]}"#;
        assert_eq!(candidate_text(body).unwrap(), "ab");
        assert!(candidate_text(r#"{"candidates":[]}"#).is_err());
        assert!(candidate_text("not json").is_err());
    }

    #[test]
    fn backoff_schedule() {
        let policy = RetryPolicy::default();
        assert_eq!(policy.delay_after(1), Duration::from_millis(500));
        assert_eq!(policy.delay_after(2), Duration::from_secs(1));
        assert_eq!(policy.delay_after(3), Duration::from_secs(2));
        assert_eq!(policy.delay_after(9), Duration::from_secs(2));
    }
}
