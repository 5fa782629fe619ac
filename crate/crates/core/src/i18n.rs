//! Static interface strings for the eight supported languages, plus
//! model-backed translation of generated text.
//!
//! Catalogs live in `i18n/<tag>.toml` and are compiled into the binary; the
//! build script rejects a catalog set whose key sets differ.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;
use std::sync::LazyLock;

use schemars::JsonSchema;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::llm::extract::{extract_translation, ExtractError};
use crate::llm::template::{render_prompt, PromptContext, TemplateId};
use crate::llm::{Gateway, LlmError, LlmRequest};

#[derive(
    Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize, JsonSchema,
)]
#[serde(rename_all = "lowercase")]
pub enum LanguageTag {
    En,
    Es,
    Fr,
    Zh,
    Ja,
    Ar,
    Fa,
    Hi,
}

impl LanguageTag {
    pub const ALL: [LanguageTag; 8] = [
        LanguageTag::En,
        LanguageTag::Es,
        LanguageTag::Fr,
        LanguageTag::Zh,
        LanguageTag::Ja,
        LanguageTag::Ar,
        LanguageTag::Fa,
        LanguageTag::Hi,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            LanguageTag::En => "en",
            LanguageTag::Es => "es",
            LanguageTag::Fr => "fr",
            LanguageTag::Zh => "zh",
            LanguageTag::Ja => "ja",
            LanguageTag::Ar => "ar",
            LanguageTag::Fa => "fa",
            LanguageTag::Hi => "hi",
        }
    }

    /// English name, used inside prompts.
    pub fn english_name(self) -> &'static str {
        match self {
            LanguageTag::En => "English",
            LanguageTag::Es => "Spanish",
            LanguageTag::Fr => "French",
            LanguageTag::Zh => "Chinese",
            LanguageTag::Ja => "Japanese",
            LanguageTag::Ar => "Arabic",
            LanguageTag::Fa => "Persian",
            LanguageTag::Hi => "Hindi",
        }
    }

    pub fn direction(self) -> TextDirection {
        catalog(self).direction
    }

    /// "Persian (fa)", as embedded in prompts.
    pub fn prompt_label(self) -> String {
        format!("{} ({})", self.english_name(), self.as_str())
    }
}

impl fmt::Display for LanguageTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for LanguageTag {
    type Err = I18nError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        LanguageTag::ALL
            .into_iter()
            .find(|t| t.as_str().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| I18nError::UnsupportedLanguage(s.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
#[serde(rename_all = "lowercase")]
pub enum TextDirection {
    Ltr,
    Rtl,
}

#[derive(Debug, Error)]
pub enum I18nError {
    #[error("missing catalog key {0:?}")]
    MissingKey(String),
    #[error("unsupported language {0:?}")]
    UnsupportedLanguage(String),
    #[error("text to localize is empty")]
    EmptyText,
    #[error(transparent)]
    Llm(#[from] LlmError),
    #[error(transparent)]
    Extract(#[from] ExtractError),
}

/// One language's fixed interface strings.
#[derive(Debug, Clone, PartialEq, Serialize, JsonSchema)]
pub struct Catalog {
    pub language: LanguageTag,
    pub name: String,
    pub direction: TextDirection,
    pub strings: BTreeMap<String, String>,
}

#[derive(Deserialize)]
struct CatalogFile {
    meta: CatalogMeta,
    strings: BTreeMap<String, String>,
}

#[derive(Deserialize)]
struct CatalogMeta {
    name: String,
    direction: TextDirection,
}

const SOURCES: [(LanguageTag, &str); 8] = [
    (LanguageTag::En, include_str!("../i18n/en.toml")),
    (LanguageTag::Es, include_str!("../i18n/es.toml")),
    (LanguageTag::Fr, include_str!("../i18n/fr.toml")),
    (LanguageTag::Zh, include_str!("../i18n/zh.toml")),
    (LanguageTag::Ja, include_str!("../i18n/ja.toml")),
    (LanguageTag::Ar, include_str!("../i18n/ar.toml")),
    (LanguageTag::Fa, include_str!("../i18n/fa.toml")),
    (LanguageTag::Hi, include_str!("../i18n/hi.toml")),
];

static CATALOGS: LazyLock<Vec<Catalog>> = LazyLock::new(|| {
    SOURCES
        .iter()
        .map(|(language, text)| {
            // Validated by build.rs; a parse failure here is a build bug.
            let file: CatalogFile = toml::from_str(text)
                .unwrap_or_else(|e| panic!("catalog {language} failed to parse: {e}"));
            Catalog {
                language: *language,
                name: file.meta.name,
                direction: file.meta.direction,
                strings: file.strings,
            }
        })
        .collect()
});

pub fn catalog(language: LanguageTag) -> &'static Catalog {
    CATALOGS
        .iter()
        .find(|c| c.language == language)
        .expect("every language has a compiled catalog")
}

/// Every key defined by the catalogs (identical across languages).
pub fn catalog_keys() -> impl Iterator<Item = &'static str> {
    catalog(LanguageTag::En).strings.keys().map(String::as_str)
}

pub fn static_string(key: &str, language: LanguageTag) -> Result<&'static str, I18nError> {
    catalog(language)
        .strings
        .get(key)
        .map(String::as_str)
        .ok_or_else(|| I18nError::MissingKey(key.to_string()))
}

/// Translates generated text into `language`. English input is returned as-is.
pub async fn localize_dynamic(
    gateway: &Gateway,
    text: &str,
    language: LanguageTag,
) -> Result<String, I18nError> {
    if text.trim().is_empty() {
        return Err(I18nError::EmptyText);
    }
    if language == LanguageTag::En {
        return Ok(text.to_string());
    }
    let prompt = render_prompt(
        TemplateId::Translate,
        &PromptContext::new()
            .with("language", language.prompt_label())
            .with("text", text),
    )
    .expect("translate template placeholders are all supplied");
    let request = LlmRequest::new(TemplateId::Translate, prompt, language);
    let response = gateway.complete(request).await?;
    Ok(extract_translation(&response.raw_text)?)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, JsonSchema)]
pub struct Localized {
    pub text: String,
    /// True when translation failed and `text` is the untranslated input.
    pub fell_back: bool,
}

/// Like [`localize_dynamic`], but falls back to the original text on
/// gateway or extraction failure and says so.
pub async fn localize_or_original(
    gateway: &Gateway,
    text: &str,
    language: LanguageTag,
) -> Result<Localized, I18nError> {
    match localize_dynamic(gateway, text, language).await {
        Ok(text) => Ok(Localized {
            text,
            fell_back: false,
        }),
        Err(I18nError::EmptyText) => Err(I18nError::EmptyText),
        Err(e) => {
            tracing::warn!(error = %e, %language, "translation failed, using original text");
            Ok(Localized {
                text: text.to_string(),
                fell_back: true,
            })
        }
    }
}
