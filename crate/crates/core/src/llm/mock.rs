//! Fixture-backed provider for offline runs.
//!
//! A fixture directory holds one text file per canned response, named
//! `{template_id}__{tag}.txt` (the extension is optional). A request is
//! answered with the file for its template and fixture tag, verbatim;
//! requests without a tag use the `default` tag.

use std::collections::BTreeMap;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use async_trait::async_trait;

use super::{LlmError, LlmProvider, LlmRequest, LlmResponse, ProviderKind, TemplateId};

pub const DEFAULT_TAG: &str = "default";

#[derive(Debug, Default)]
pub struct MockProvider {
    fixtures: BTreeMap<(TemplateId, String), String>,
    requests: Mutex<Vec<LlmRequest>>,
}

impl MockProvider {
    pub fn new() -> Self {
        Self::default()
    }

    /// Loads every `{template_id}__{tag}` file directly inside `dir`.
    /// Files whose names do not follow the pattern are skipped.
    pub fn from_dir(dir: impl AsRef<Path>) -> io::Result<Self> {
        let mut provider = Self::new();
        for entry in fs::read_dir(dir.as_ref())? {
            let entry = entry?;
            if !entry.file_type()?.is_file() {
                continue;
            }
            let path = entry.path();
            let Some((template, tag)) = parse_fixture_name(&path) else {
                continue;
            };
            let text = fs::read_to_string(&path)?;
            provider.fixtures.insert((template, tag), text);
        }
        Ok(provider)
    }

    pub fn with_fixture(mut self, template: TemplateId, tag: &str, text: impl Into<String>) -> Self {
        self.fixtures.insert((template, tag.to_string()), text.into());
        self
    }

    pub fn has_fixture(&self, template: TemplateId, tag: &str) -> bool {
        self.fixtures.contains_key(&(template, tag.to_string()))
    }

    pub fn fixture(&self, template: TemplateId, tag: &str) -> Option<&str> {
        self.fixtures.get(&(template, tag.to_string())).map(String::as_str)
    }

    /// Tags available for `template`, sorted.
    pub fn tags(&self, template: TemplateId) -> Vec<&str> {
        self.fixtures
            .keys()
            .filter(|(t, _)| *t == template)
            .map(|(_, tag)| tag.as_str())
            .collect()
    }

    /// Every request seen so far, in arrival order.
    pub fn requests(&self) -> Vec<LlmRequest> {
        self.requests.lock().expect("request log poisoned").clone()
    }
}

/// `dir/{template}__{tag}[.ext]` → `(template, tag)`.
pub fn parse_fixture_name(path: &Path) -> Option<(TemplateId, String)> {
    let stem = path.file_stem()?.to_str()?;
    let (template, tag) = stem.split_once("__")?;
    let template = template.parse().ok()?;
    if tag.is_empty() {
        return None;
    }
    Some((template, tag.to_string()))
}

pub fn fixture_path(dir: &Path, template: TemplateId, tag: &str) -> PathBuf {
    dir.join(format!("{template}__{tag}.txt"))
}

#[async_trait]
impl LlmProvider for MockProvider {
    fn kind(&self) -> ProviderKind {
        ProviderKind::Mock
    }

    async fn complete(&self, request: &LlmRequest) -> Result<LlmResponse, LlmError> {
        self.requests
            .lock()
            .expect("request log poisoned")
            .push(request.clone());
        let tag = request.fixture_tag.as_deref().unwrap_or(DEFAULT_TAG);
        match self.fixture(request.template_id, tag) {
            Some(text) => Ok(LlmResponse {
                raw_text: text.to_string(),
                provider: ProviderKind::Mock,
                latency_ms: 0,
            }),
            None => Err(LlmError::ProviderRejection {
                attempts: 1,
                message: format!("no mock fixture {}__{tag}", request.template_id),
            }),
        }
    }
}
