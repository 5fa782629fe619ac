//! Pulls a JSON payload out of free-form model output and decodes it
//! against one of the known schemas.
//!
//! Candidates are tried in order: the contents of each fenced code block,
//! then balanced `{...}` / `[...]` spans, longest first. Nothing after an
//! unterminated JSON opener is a candidate, so truncated output is rejected
//! rather than mined for fragments.
//! The only repair applied is dropping trailing commas before `]` or `}`.
//! The first candidate that parses and decodes wins; if some candidate
//! parsed but none decoded, the first schema violation is reported.

use std::borrow::Cow;

use schemars::JsonSchema;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::model::{NutritionFacts, Verdict};

/// Balanced-span scanning stops after this many opening brackets.
const MAX_SPAN_STARTS: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
#[serde(rename_all = "snake_case")]
pub enum SchemaId {
    Labels,
    Recipes,
    Feedback,
    Translation,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ExtractError {
    #[error("no structured payload found in model output")]
    NoPayloadFound,
    #[error("payload violates schema at {path}: {message}")]
    SchemaViolation { path: String, message: String },
}

/// One detection as the model reports it. Box sanity is checked by the
/// caller so that one bad label does not sink the whole payload.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct RawLabel {
    pub name: String,
    #[serde(rename = "box", alias = "box_2d")]
    pub bbox: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub confidence: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct DraftIngredient {
    pub name: String,
    #[serde(default)]
    pub amount: String,
}

/// A recipe as generated, before ids and canonical keys are assigned.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct RecipeDraft {
    pub title: String,
    #[serde(default)]
    pub cuisine: String,
    #[serde(default = "one")]
    pub servings: u32,
    pub ingredients: Vec<DraftIngredient>,
    #[serde(default)]
    pub steps: Vec<String>,
    #[serde(default)]
    pub nutrition: NutritionFacts,
    #[serde(default)]
    pub allergens: Vec<String>,
}

fn one() -> u32 {
    1
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
pub struct FeedbackDraft {
    pub verdict: Verdict,
    #[serde(default)]
    pub explanation: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
pub struct TranslationDraft {
    pub translation: String,
}

#[derive(Debug, Clone, PartialEq)]
pub enum StructuredPayload {
    Labels(Vec<RawLabel>),
    Recipes(Vec<RecipeDraft>),
    Feedback(FeedbackDraft),
    Translation(String),
}

pub fn extract_structured(raw_text: &str, schema: SchemaId) -> Result<StructuredPayload, ExtractError> {
    let mut first_violation = None;
    for candidate in candidates(raw_text) {
        let Some(value) = parse_lenient(candidate) else {
            continue;
        };
        match decode(value, schema) {
            Ok(payload) => return Ok(payload),
            Err(violation) => {
                first_violation.get_or_insert(violation);
            }
        }
    }
    Err(first_violation.unwrap_or(ExtractError::NoPayloadFound))
}

pub fn extract_labels(raw_text: &str) -> Result<Vec<RawLabel>, ExtractError> {
    match extract_structured(raw_text, SchemaId::Labels)? {
        StructuredPayload::Labels(labels) => Ok(labels),
        _ => unreachable!("labels schema yields labels"),
    }
}

pub fn extract_recipes(raw_text: &str) -> Result<Vec<RecipeDraft>, ExtractError> {
    match extract_structured(raw_text, SchemaId::Recipes)? {
        StructuredPayload::Recipes(recipes) => Ok(recipes),
        _ => unreachable!("recipes schema yields recipes"),
    }
}

pub fn extract_feedback(raw_text: &str) -> Result<FeedbackDraft, ExtractError> {
    match extract_structured(raw_text, SchemaId::Feedback)? {
        StructuredPayload::Feedback(feedback) => Ok(feedback),
        _ => unreachable!("feedback schema yields feedback"),
    }
}

pub fn extract_translation(raw_text: &str) -> Result<String, ExtractError> {
    match extract_structured(raw_text, SchemaId::Translation)? {
        StructuredPayload::Translation(text) => Ok(text),
        _ => unreachable!("translation schema yields translation"),
    }
}

fn decode(value: Value, schema: SchemaId) -> Result<StructuredPayload, ExtractError> {
    match schema {
        SchemaId::Labels => decode_list(value, "labels").map(StructuredPayload::Labels),
        SchemaId::Recipes => decode_list(value, "recipes").map(StructuredPayload::Recipes),
        SchemaId::Feedback => {
            let draft: FeedbackDraft = decode_as(value, "")?;
            if draft.verdict == Verdict::NeedsAdjustment && draft.explanation.trim().is_empty() {
                return Err(ExtractError::SchemaViolation {
                    path: "explanation".into(),
                    message: "required when verdict is needs_adjustment".into(),
                });
            }
            Ok(StructuredPayload::Feedback(draft))
        }
        SchemaId::Translation => {
            let draft: TranslationDraft = decode_as(value, "")?;
            if draft.translation.trim().is_empty() {
                return Err(ExtractError::SchemaViolation {
                    path: "translation".into(),
                    message: "empty translation".into(),
                });
            }
            Ok(StructuredPayload::Translation(draft.translation))
        }
    }
}

/// Accepts a bare array or an object wrapping the array under `key`.
fn decode_list<T: DeserializeOwned>(value: Value, key: &str) -> Result<Vec<T>, ExtractError> {
    match value {
        Value::Object(mut map) if map.contains_key(key) => {
            let inner = map.remove(key).unwrap_or(Value::Null);
            decode_as(inner, key)
        }
        Value::Array(_) => decode_as(value, ""),
        other => Err(ExtractError::SchemaViolation {
            path: ".".into(),
            message: format!("expected an array or an object with {key:?}, found {}", kind(&other)),
        }),
    }
}

fn decode_as<T: DeserializeOwned>(value: Value, prefix: &str) -> Result<T, ExtractError> {
    serde_path_to_error::deserialize(value).map_err(|e| {
        let inner = e.path().to_string();
        let path = match (prefix.is_empty(), inner == ".") {
            (true, _) => inner,
            (false, true) => prefix.to_string(),
            (false, false) => format!("{prefix}.{inner}"),
        };
        ExtractError::SchemaViolation {
            path,
            message: e.into_inner().to_string(),
        }
    })
}

fn kind(value: &Value) -> &'static str {
    match value {
        Value::Null => "null",
        Value::Bool(_) => "a boolean",
        Value::Number(_) => "a number",
        Value::String(_) => "a string",
        Value::Array(_) => "an array",
        Value::Object(_) => "an object",
    }
}

fn parse_lenient(candidate: &str) -> Option<Value> {
    let repaired = strip_trailing_commas(candidate.trim());
    match serde_json::from_str::<Value>(&repaired) {
        Ok(value @ (Value::Object(_) | Value::Array(_))) => Some(value),
        _ => None,
    }
}

/// Whole fenced blocks first, then balanced spans largest first. Size
/// order matters: a fence cut short by a stray ``` inside a string would
/// otherwise offer fragments such as `[ ]` from string contents before
/// the intact outer payload.
fn candidates(text: &str) -> Vec<&str> {
    let blocks = fenced_blocks(text);
    let mut spans: Vec<&str> = blocks.iter().flat_map(|b| balanced_spans(b)).collect();
    spans.extend(balanced_spans(text));
    // Stable: equal lengths keep their order of appearance.
    spans.sort_by_key(|s| std::cmp::Reverse(s.len()));
    spans.dedup();
    let mut out = blocks;
    out.extend(spans);
    out
}

/// Contents of each ``` fence; the info string on the opening line is skipped.
/// An unclosed fence runs to the end of the text.
fn fenced_blocks(text: &str) -> Vec<&str> {
    const FENCE: &str = "```";
    let mut blocks = Vec::new();
    let mut rest = text;
    while let Some(open) = rest.find(FENCE) {
        let after = &rest[open + FENCE.len()..];
        let body_start = after.find('\n').map(|i| i + 1).unwrap_or(after.len());
        let body = &after[body_start..];
        match body.find(FENCE) {
            Some(close) => {
                blocks.push(&body[..close]);
                rest = &body[close + FENCE.len()..];
            }
            None => {
                blocks.push(body);
                break;
            }
        }
    }
    blocks
}

fn balanced_spans(text: &str) -> Vec<&str> {
    let bytes = text.as_bytes();
    let mut spans = Vec::new();
    let mut starts = 0;
    for (i, &b) in bytes.iter().enumerate() {
        if b != b'{' && b != b'[' {
            continue;
        }
        starts += 1;
        if starts > MAX_SPAN_STARTS {
            break;
        }
        match matching_close(bytes, i) {
            Some(end) => spans.push(&text[i..=end]),
            // Everything after an unterminated payload belongs to it; fragments
            // of a truncated document are not payloads in their own right.
            None if opens_json_value(&bytes[i + 1..]) => break,
            None => {}
        }
    }
    spans
}

/// Whether the text after an opening bracket looks like JSON rather than prose.
fn opens_json_value(rest: &[u8]) -> bool {
    rest.iter()
        .find(|b| !b.is_ascii_whitespace())
        .map_or(false, |b| matches!(b, b'{' | b'[' | b'"' | b']' | b'}' | b'-' | b'0'..=b'9' | b't' | b'f' | b'n'))
}

/// Index of the bracket closing the one at `start`, honoring JSON strings.
fn matching_close(bytes: &[u8], start: usize) -> Option<usize> {
    let mut stack = Vec::new();
    let mut in_string = false;
    let mut escaped = false;
    for (offset, &b) in bytes[start..].iter().enumerate() {
        if in_string {
            match (escaped, b) {
                (true, _) => escaped = false,
                (false, b'\\') => escaped = true,
                (false, b'"') => in_string = false,
                _ => {}
            }
            continue;
        }
        match b {
            b'"' => in_string = true,
            b'{' => stack.push(b'}'),
            b'[' => stack.push(b']'),
            b'}' | b']' => {
                if stack.pop() != Some(b) {
                    return None;
                }
                if stack.is_empty() {
                    return Some(start + offset);
                }
            }
            _ => {}
        }
    }
    None
}

/// Removes commas that directly precede `]` or `}` (ignoring whitespace),
/// outside of string literals.
pub(crate) fn strip_trailing_commas(text: &str) -> Cow<'_, str> {
    let bytes = text.as_bytes();
    let mut drop = Vec::new();
    let mut in_string = false;
    let mut escaped = false;
    for (i, &b) in bytes.iter().enumerate() {
        if in_string {
            match (escaped, b) {
                (true, _) => escaped = false,
                (false, b'\\') => escaped = true,
                (false, b'"') => in_string = false,
                _ => {}
            }
            continue;
        }
        match b {
            b'"' => in_string = true,
            b',' => {
                let next = bytes[i + 1..].iter().find(|c| !c.is_ascii_whitespace());
                if matches!(next, Some(b']') | Some(b'}')) {
                    drop.push(i);
                }
            }
            _ => {}
        }
    }
    if drop.is_empty() {
        return Cow::Borrowed(text);
    }
    let mut out = String::with_capacity(text.len());
    let mut last = 0;
    for i in drop {
        out.push_str(&text[last..i]);
        last = i + 1;
    }
    out.push_str(&text[last..]);
    Cow::Owned(out)
}
