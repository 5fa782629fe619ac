//! Snapshot-driven ingredient detection, overlay projection, pantry
//! accumulation and recipe-step checks.

use chrono::{DateTime, Utc};
use schemars::JsonSchema;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::i18n::LanguageTag;
use crate::llm::extract::{extract_feedback, extract_labels, ExtractError, RawLabel};
use crate::llm::template::{render_prompt, PromptContext, TemplateId};
use crate::llm::{Gateway, ImageInput, LlmError, LlmRequest};
use crate::model::{
    canonicalize, DetectionLabel, Ingredient, IngredientSource, ModelError, NormBox,
    PantrySession, Recipe, StepFeedback,
};
use crate::recipes::describe_recipe;

#[derive(Debug, Error)]
pub enum PerceptionError {
    #[error("invalid snapshot: {0}")]
    InvalidSnapshot(String),
    #[error("invalid step {index}: recipe has {len} step(s)")]
    InvalidStep { index: usize, len: usize },
    #[error("ingredient {0:?} is not in the pantry")]
    NotFound(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Llm(#[from] LlmError),
    #[error(transparent)]
    Extract(#[from] ExtractError),
}

pub const PNG_MIME: &str = "image/png";
pub const JPEG_MIME: &str = "image/jpeg";

/// Identifies PNG and JPEG payloads by their magic bytes.
pub fn sniff_mime(bytes: &[u8]) -> Option<&'static str> {
    if bytes.starts_with(&[0x89, b'P', b'N', b'G', 0x0d, 0x0a, 0x1a, 0x0a]) {
        Some(PNG_MIME)
    } else if bytes.starts_with(&[0xff, 0xd8, 0xff]) {
        Some(JPEG_MIME)
    } else {
        None
    }
}

/// A captured frame of the cook's screen or workspace.
#[derive(Clone, PartialEq, Eq)]
pub struct Snapshot {
    pub bytes: Vec<u8>,
    pub mime_type: String,
    pub width_px: u32,
    pub height_px: u32,
    pub captured_at: DateTime<Utc>,
}

impl std::fmt::Debug for Snapshot {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Snapshot")
            .field("bytes", &format_args!("<{} bytes>", self.bytes.len()))
            .field("mime_type", &self.mime_type)
            .field("width_px", &self.width_px)
            .field("height_px", &self.height_px)
            .field("captured_at", &self.captured_at)
            .finish()
    }
}

impl Snapshot {
    /// Builds a snapshot, taking the mime type from the image's magic bytes.
    pub fn new(
        bytes: Vec<u8>,
        width_px: u32,
        height_px: u32,
        captured_at: DateTime<Utc>,
    ) -> Result<Self, PerceptionError> {
        let mime_type = sniff_mime(&bytes)
            .ok_or_else(|| PerceptionError::InvalidSnapshot("not a PNG or JPEG image".into()))?
            .to_string();
        let snapshot = Self {
            bytes,
            mime_type,
            width_px,
            height_px,
            captured_at,
        };
        snapshot.validate()?;
        Ok(snapshot)
    }

    pub fn validate(&self) -> Result<(), PerceptionError> {
        if self.bytes.is_empty() {
            return Err(PerceptionError::InvalidSnapshot("image is empty".into()));
        }
        if self.width_px == 0 || self.height_px == 0 {
            return Err(PerceptionError::InvalidSnapshot(format!(
                "dimensions {}x{} must be positive",
                self.width_px, self.height_px
            )));
        }
        match sniff_mime(&self.bytes) {
            Some(sniffed) if sniffed == self.mime_type => Ok(()),
            Some(sniffed) => Err(PerceptionError::InvalidSnapshot(format!(
                "declared {} but bytes are {sniffed}",
                self.mime_type
            ))),
            None => Err(PerceptionError::InvalidSnapshot(
                "not a PNG or JPEG image".into(),
            )),
        }
    }

    fn to_image(&self) -> ImageInput {
        ImageInput {
            bytes: self.bytes.clone(),
            mime_type: self.mime_type.clone(),
            width_px: self.width_px,
            height_px: self.height_px,
        }
    }
}

/// Target surface for overlay labels, in pixels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
#[serde(try_from = "ViewportWire")]
pub struct Viewport {
    width_px: u32,
    height_px: u32,
}

#[derive(Deserialize, JsonSchema)]
#[schemars(rename = "Viewport")]
struct ViewportWire {
    #[schemars(range(min = 1))]
    width_px: u32,
    #[schemars(range(min = 1))]
    height_px: u32,
}

impl TryFrom<ViewportWire> for Viewport {
    type Error = PerceptionError;
    fn try_from(w: ViewportWire) -> Result<Self, Self::Error> {
        Viewport::new(w.width_px, w.height_px)
    }
}

impl Viewport {
    pub fn new(width_px: u32, height_px: u32) -> Result<Self, PerceptionError> {
        if width_px == 0 || height_px == 0 {
            return Err(PerceptionError::InvalidSnapshot(format!(
                "viewport {width_px}x{height_px} must be positive"
            )));
        }
        Ok(Self {
            width_px,
            height_px,
        })
    }

    pub fn width_px(&self) -> u32 {
        self.width_px
    }

    pub fn height_px(&self) -> u32 {
        self.height_px
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
pub struct RectPx {
    pub x: u32,
    pub y: u32,
    pub w: u32,
    pub h: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
pub struct PointPx {
    pub x: u32,
    pub y: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
pub struct Projection {
    pub rect_px: RectPx,
    /// Top-center of `rect_px`; the label is drawn above this point.
    pub anchor_px: PointPx,
}

/// `round(unit / 1000 * extent)` with halves rounded up, in exact integer math.
fn to_px(unit: u16, extent: u32) -> u32 {
    ((2 * unit as u64 * extent as u64 + 1000) / 2000) as u32
}

/// Middle of the set of normalized units that `to_px` maps onto `px`.
fn to_unit(px: u32, extent: u32) -> u16 {
    let two_w = 2 * extent as i64;
    let ceil_div = |n: i64| n.div_euclid(two_w) + i64::from(n.rem_euclid(two_w) != 0);
    let p = px as i64;
    let lo = ceil_div(2000 * p - 1000).max(0);
    let hi = (ceil_div(2000 * p + 1000) - 1).min(NormBox::EXTENT as i64);
    let unit = if lo <= hi {
        (lo + hi) / 2
    } else {
        (p * 1000 * 2 + extent as i64) / two_w
    };
    unit.clamp(0, NormBox::EXTENT as i64) as u16
}

pub fn project_label(bbox: &NormBox, viewport: &Viewport) -> Projection {
    let (w, h) = (viewport.width_px, viewport.height_px);
    let x0 = to_px(bbox.x_min(), w);
    let x1 = to_px(bbox.x_max(), w);
    let y0 = to_px(bbox.y_min(), h);
    let y1 = to_px(bbox.y_max(), h);
    let rect_px = RectPx {
        x: x0,
        y: y0,
        w: x1 - x0,
        h: y1 - y0,
    };
    Projection {
        rect_px,
        anchor_px: PointPx {
            x: x0 + rect_px.w / 2,
            y: y0,
        },
    }
}

/// Maps a projected rect back to the normalized frame as
/// `[y_min, x_min, y_max, x_max]`.
///
/// Each coordinate is the midpoint of the units that project onto the same
/// pixel, so the result is within one unit of the original whenever the
/// viewport side is at least 334 px.
pub fn unproject_rect(rect: &RectPx, viewport: &Viewport) -> [u16; 4] {
    let (w, h) = (viewport.width_px, viewport.height_px);
    [
        to_unit(rect.y, h),
        to_unit(rect.x, w),
        to_unit(rect.y + rect.h, h),
        to_unit(rect.x + rect.w, w),
    ]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct DetectionOutcome {
    pub labels: Vec<DetectionLabel>,
    /// Labels the model returned that failed validation.
    pub dropped_count: usize,
    /// Set when the model output held no payload at all.
    pub warning: bool,
}

fn validate_label(raw: RawLabel) -> Option<DetectionLabel> {
    let name = raw.name.trim();
    if name.is_empty() || raw.bbox.len() != 4 {
        return None;
    }
    let mut coords = [0i64; 4];
    for (slot, v) in coords.iter_mut().zip(&raw.bbox) {
        if !v.is_finite() || v.fract() != 0.0 {
            return None;
        }
        *slot = *v as i64;
    }
    let bbox = NormBox::new(coords[0], coords[1], coords[2], coords[3]).ok()?;
    let confidence = raw.confidence.filter(|c| (0.0..=1.0).contains(c));
    Some(DetectionLabel {
        name: name.to_string(),
        bbox,
        confidence,
    })
}

pub async fn detect_ingredients(
    gateway: &Gateway,
    snapshot: &Snapshot,
    language: LanguageTag,
) -> Result<DetectionOutcome, PerceptionError> {
    snapshot.validate()?;
    let prompt = render_prompt(
        TemplateId::DetectIngredients,
        &PromptContext::new().with("language", language.prompt_label()),
    )
    .expect("detect template placeholders are all supplied");
    let request =
        LlmRequest::new(TemplateId::DetectIngredients, prompt, language).with_image(snapshot.to_image());
    let response = gateway.complete(request).await?;

    let raw = match extract_labels(&response.raw_text) {
        Ok(raw) => raw,
        Err(ExtractError::NoPayloadFound) => {
            tracing::info!("model reported no ingredients");
            return Ok(DetectionOutcome {
                labels: Vec::new(),
                dropped_count: 0,
                warning: true,
            });
        }
        Err(e) => return Err(e.into()),
    };
    let total = raw.len();
    let labels: Vec<_> = raw.into_iter().filter_map(validate_label).collect();
    let dropped_count = total - labels.len();
    if dropped_count > 0 {
        tracing::warn!(dropped_count, "dropped invalid detection labels");
    }
    Ok(DetectionOutcome {
        labels,
        dropped_count,
        warning: false,
    })
}

/// Adds each label's ingredient to the pantry unless its key is already
/// present. Returns the keys that were added, in order.
pub fn merge_into_pantry(
    session: &mut PantrySession,
    labels: &[DetectionLabel],
    now: DateTime<Utc>,
) -> Vec<String> {
    let mut added = Vec::new();
    for label in labels {
        let Ok(ingredient) = Ingredient::new(&label.name, IngredientSource::Scanned, now) else {
            continue;
        };
        let key = ingredient.canonical_key().to_string();
        if session.ingredients.insert(ingredient) {
            added.push(key);
        }
    }
    added
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
#[serde(tag = "action", rename_all = "snake_case")]
pub enum PantryEdit {
    Add { name: String },
    Remove { canonical_key: String },
}

pub fn edit_pantry(
    session: &mut PantrySession,
    edit: &PantryEdit,
    now: DateTime<Utc>,
) -> Result<(), PerceptionError> {
    match edit {
        PantryEdit::Add { name } => {
            let ingredient = Ingredient::new(name, IngredientSource::Manual, now)?;
            session.ingredients.insert(ingredient);
            Ok(())
        }
        PantryEdit::Remove { canonical_key } => {
            let key = canonicalize(canonical_key)?;
            session
                .ingredients
                .remove(&key)
                .map(|_| ())
                .ok_or(PerceptionError::NotFound(key))
        }
    }
}

pub async fn verify_step(
    gateway: &Gateway,
    snapshot: &Snapshot,
    recipe: &Recipe,
    step_index: usize,
    language: LanguageTag,
) -> Result<StepFeedback, PerceptionError> {
    let step = recipe
        .steps
        .get(step_index)
        .ok_or(PerceptionError::InvalidStep {
            index: step_index,
            len: recipe.steps.len(),
        })?;
    snapshot.validate()?;
    let prompt = render_prompt(
        TemplateId::StepFeedback,
        &PromptContext::new()
            .with("recipe", describe_recipe(recipe))
            .with("step", format!("Step {}: {step}", step_index + 1))
            .with("language", language.prompt_label()),
    )
    .expect("step template placeholders are all supplied");
    let request =
        LlmRequest::new(TemplateId::StepFeedback, prompt, language).with_image(snapshot.to_image());
    let response = gateway.complete(request).await?;
    let draft = extract_feedback(&response.raw_text)?;
    Ok(StepFeedback {
        step_index,
        verdict: draft.verdict,
        explanation: draft.explanation.trim().to_string(),
    })
}
