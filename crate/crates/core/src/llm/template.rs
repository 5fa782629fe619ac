//! Prompt templates and placeholder rendering.
//!
//! A placeholder is `{name}` where `name` is lowercase ASCII letters and
//! underscores. Any other brace is literal text, so JSON examples inside a
//! template body need no escaping. Rendering is single-pass: substituted
//! values are never re-scanned.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use schemars::JsonSchema;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize, JsonSchema)]
#[serde(rename_all = "snake_case")]
pub enum TemplateId {
    DetectIngredients,
    GenerateRecipes,
    StepFeedback,
    AssistantChat,
    Translate,
}

impl TemplateId {
    pub const ALL: [TemplateId; 5] = [
        TemplateId::DetectIngredients,
        TemplateId::GenerateRecipes,
        TemplateId::StepFeedback,
        TemplateId::AssistantChat,
        TemplateId::Translate,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            TemplateId::DetectIngredients => "detect_ingredients",
            TemplateId::GenerateRecipes => "generate_recipes",
            TemplateId::StepFeedback => "step_feedback",
            TemplateId::AssistantChat => "assistant_chat",
            TemplateId::Translate => "translate",
        }
    }

    pub fn needs_image(self) -> bool {
        matches!(self, TemplateId::DetectIngredients | TemplateId::StepFeedback)
    }

    pub fn default_system_instruction(self) -> &'static str {
        match self {
            TemplateId::DetectIngredients => {
                "You identify food ingredients in photos of kitchens and report where each one is. \
                 Answer with JSON only."
            }
            TemplateId::GenerateRecipes => {
                "You are a recipe developer. You only use ingredients the cook already has, \
                 and you always give amounts and nutrition. Answer with JSON only."
            }
            TemplateId::StepFeedback => {
                "You are a cooking instructor checking a student's work from a photo. \
                 Be specific and encouraging. Answer with JSON only."
            }
            TemplateId::AssistantChat => "You are a helpful sous chef.",
            TemplateId::Translate => {
                "You translate cooking content faithfully. Answer with JSON only."
            }
        }
    }

    pub fn template(self) -> PromptTemplate {
        PromptTemplate {
            template_id: self,
            body: match self {
                TemplateId::DetectIngredients => DETECT_INGREDIENTS,
                TemplateId::GenerateRecipes => GENERATE_RECIPES,
                TemplateId::StepFeedback => STEP_FEEDBACK,
                TemplateId::AssistantChat => ASSISTANT_CHAT,
                TemplateId::Translate => TRANSLATE,
            },
        }
    }
}

impl fmt::Display for TemplateId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TemplateId {
    type Err = TemplateError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        TemplateId::ALL
            .into_iter()
            .find(|t| t.as_str() == s)
            .ok_or_else(|| TemplateError::UnknownTemplate(s.to_string()))
    }
}

const DETECT_INGREDIENTS: &str = r#"Look at this snapshot of the cook's kitchen.
Find every food ingredient that is visible and return the coordinates of each one.

Respond with a JSON array and nothing else, one object per ingredient:
[{"name": "tomato", "box": [y_min, x_min, y_max, x_max]}]

Coordinates are integers from 0 to 1000, relative to the image height (y) and width (x).
Use a short common name for each ingredient, written in {language}.
If no ingredients are visible, say so in one sentence and return no JSON."#;

const GENERATE_RECIPES: &str = r#"The cook has exactly these ingredients: {ingredients}
Cook profile: {profile}

Suggest {count} recipes the cook can make using only those ingredients. Respect every dietary
restriction and never include an ingredient the cook is allergic to. Match the recipes to the
cook's level and favorite cuisines where possible.

For each recipe list every ingredient with the amount needed, the steps in order, the nutrition
per serving, and every allergen it contains.

Respond with a JSON array and nothing else:
[{"title": "...", "cuisine": "...", "servings": 2,
  "ingredients": [{"name": "...", "amount": "..."}],
  "steps": ["...", "..."],
  "nutrition": {"calories": 0, "fat_g": 0, "carbohydrates_g": 0, "fiber_g": 0, "protein_g": 0,
                "vitamins": {"vitamin c": "10 mg"}},
  "allergens": ["..."]}]

Write titles, amounts and steps in {language}; keep the JSON keys in English."#;

const STEP_FEEDBACK: &str = r#"The cook is following this recipe:
{recipe}

They say they have just finished this step:
{step}

Look at the snapshot of their workspace and judge whether the step was done correctly.
Respond with a JSON object and nothing else:
{"verdict": "correct" or "needs_adjustment", "explanation": "..."}

If the step needs adjustment, explain what to change. Write the explanation in {language}."#;

const ASSISTANT_CHAT: &str = r#"Conversation so far:
{history}

Cook: {message}
Sous chef:"#;

const TRANSLATE: &str = r#"Translate the following cooking text into {language}.
Keep quantities, temperatures and ingredient names accurate.
Respond with a JSON object and nothing else: {"translation": "..."}

Text:
{text}"#;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PromptTemplate {
    pub template_id: TemplateId,
    pub body: &'static str,
}

impl PromptTemplate {
    /// Placeholder names in order of first appearance.
    pub fn placeholders(&self) -> Vec<&'static str> {
        let mut names = Vec::new();
        for segment in parse(self.body) {
            if let Segment::Placeholder(name) = segment {
                if !names.contains(&name) {
                    names.push(name);
                }
            }
        }
        names
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TemplateError {
    #[error("missing placeholder {0:?}")]
    MissingPlaceholder(String),
    #[error("unknown template {0:?}")]
    UnknownTemplate(String),
}

/// Placeholder values for one render.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct PromptContext(BTreeMap<String, String>);

impl PromptContext {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with(mut self, name: impl Into<String>, value: impl Into<String>) -> Self {
        self.insert(name, value);
        self
    }

    pub fn insert(&mut self, name: impl Into<String>, value: impl Into<String>) {
        self.0.insert(name.into(), value.into());
    }

    pub fn get(&self, name: &str) -> Option<&str> {
        self.0.get(name).map(String::as_str)
    }
}

impl<K: Into<String>, V: Into<String>> FromIterator<(K, V)> for PromptContext {
    fn from_iter<I: IntoIterator<Item = (K, V)>>(iter: I) -> Self {
        Self(iter.into_iter().map(|(k, v)| (k.into(), v.into())).collect())
    }
}

pub fn render_prompt(template_id: TemplateId, context: &PromptContext) -> Result<String, TemplateError> {
    render(template_id.template().body, context)
}

pub(crate) fn render(body: &str, context: &PromptContext) -> Result<String, TemplateError> {
    let mut out = String::with_capacity(body.len());
    for segment in parse(body) {
        match segment {
            Segment::Literal(text) => out.push_str(text),
            Segment::Placeholder(name) => {
                let value = context
                    .get(name)
                    .ok_or_else(|| TemplateError::MissingPlaceholder(name.to_string()))?;
                out.push_str(value);
            }
        }
    }
    Ok(out)
}

#[derive(Debug, PartialEq, Eq)]
enum Segment<'a> {
    Literal(&'a str),
    Placeholder(&'a str),
}

fn parse(body: &str) -> Vec<Segment<'_>> {
    let bytes = body.as_bytes();
    let mut segments = Vec::new();
    let mut literal_start = 0;
    let mut i = 0;
    while i < bytes.len() {
        if bytes[i] == b'{' {
            let name_start = i + 1;
            let mut j = name_start;
            while j < bytes.len() && (bytes[j].is_ascii_lowercase() || bytes[j] == b'_') {
                j += 1;
            }
            if j > name_start && j < bytes.len() && bytes[j] == b'}' {
                if literal_start < i {
                    segments.push(Segment::Literal(&body[literal_start..i]));
                }
                segments.push(Segment::Placeholder(&body[name_start..j]));
                i = j + 1;
                literal_start = i;
                continue;
            }
        }
        i += 1;
    }
    if literal_start < body.len() {
        segments.push(Segment::Literal(&body[literal_start..]));
    }
    segments
}
