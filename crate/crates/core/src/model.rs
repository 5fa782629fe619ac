//! Domain types shared by the whole service.
//!
//! Every type here has a canonical JSON form with snake_case field names.
//! Types that carry invariants (`Ingredient`, `NormBox`, `Scale5`, `Pantry`)
//! validate on construction and on deserialization, so a decoded value is
//! always a valid one.

use std::collections::BTreeMap;
use std::fmt;

use chrono::{DateTime, Utc};
use indexmap::IndexMap;
use schemars::JsonSchema;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::i18n::LanguageTag;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ModelError {
    #[error("invalid name: {0:?} is blank")]
    InvalidName(String),
    #[error("value {value} outside {min}..={max} for {field}")]
    OutOfRange {
        field: &'static str,
        value: i64,
        min: i64,
        max: i64,
    },
    #[error("invalid box: {0}")]
    InvalidBox(String),
    #[error("duplicate ingredient key {0:?}")]
    DuplicateKey(String),
    #[error("ingredient key {key:?} does not match canonical form of {display_name:?}")]
    KeyMismatch { key: String, display_name: String },
}

/// Lowercases, trims and collapses internal whitespace runs to one space.
///
/// Nothing else is folded: "tomatoes" and "tomato" stay distinct.
pub fn canonicalize(name: &str) -> Result<String, ModelError> {
    let collapsed = name.split_whitespace().collect::<Vec<_>>().join(" ");
    if collapsed.is_empty() {
        return Err(ModelError::InvalidName(name.to_string()));
    }
    Ok(collapsed.to_lowercase())
}

macro_rules! string_id {
    ($(#[$meta:meta])* $name:ident) => {
        $(#[$meta])*
        #[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize, JsonSchema)]
        #[serde(transparent)]
        pub struct $name(pub String);

        impl $name {
            pub fn as_str(&self) -> &str {
                &self.0
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(&self.0)
            }
        }

        impl From<&str> for $name {
            fn from(s: &str) -> Self {
                Self(s.to_string())
            }
        }

        impl From<String> for $name {
            fn from(s: String) -> Self {
                Self(s)
            }
        }
    };
}

string_id!(SessionId);
string_id!(ProfileId);
string_id!(RecipeId);
string_id!(TimerId);
string_id!(
    /// Identifies a participant in survey data; opaque.
    ParticipantId
);

/// An integer on a one-to-five scale: cooking level, meal rating, Likert answer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "i64", into = "u8")]
pub struct Scale5(u8);

impl JsonSchema for Scale5 {
    fn schema_name() -> std::borrow::Cow<'static, str> {
        "Scale5".into()
    }

    fn json_schema(_: &mut schemars::SchemaGenerator) -> schemars::Schema {
        schemars::json_schema!({ "type": "integer", "minimum": 1, "maximum": 5 })
    }
}

impl Scale5 {
    pub fn new(value: i64) -> Result<Self, ModelError> {
        if (1..=5).contains(&value) {
            Ok(Self(value as u8))
        } else {
            Err(ModelError::OutOfRange {
                field: "scale",
                value,
                min: 1,
                max: 5,
            })
        }
    }

    pub fn get(self) -> u8 {
        self.0
    }
}

impl TryFrom<i64> for Scale5 {
    type Error = ModelError;
    fn try_from(value: i64) -> Result<Self, Self::Error> {
        Self::new(value)
    }
}

impl From<Scale5> for u8 {
    fn from(s: Scale5) -> u8 {
        s.0
    }
}

impl fmt::Display for Scale5 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, JsonSchema)]
#[serde(rename_all = "snake_case")]
pub enum IngredientSource {
    Scanned,
    Manual,
}

/// One pantry entry. `canonical_key` always equals `canonicalize(display_name)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(try_from = "IngredientWire")]
pub struct Ingredient {
    display_name: String,
    canonical_key: String,
    /// Free-form amount, e.g. "2 cups".
    quantity: Option<String>,
    source: IngredientSource,
    first_seen: DateTime<Utc>,
}

#[derive(Deserialize, JsonSchema)]
#[schemars(rename = "Ingredient")]
struct IngredientWire {
    display_name: String,
    canonical_key: String,
    #[serde(default)]
    quantity: Option<String>,
    source: IngredientSource,
    first_seen: DateTime<Utc>,
}

impl TryFrom<IngredientWire> for Ingredient {
    type Error = ModelError;
    fn try_from(w: IngredientWire) -> Result<Self, Self::Error> {
        let key = canonicalize(&w.display_name)?;
        if key != w.canonical_key {
            return Err(ModelError::KeyMismatch {
                key: w.canonical_key,
                display_name: w.display_name,
            });
        }
        Ok(Self {
            display_name: w.display_name,
            canonical_key: key,
            quantity: w.quantity,
            source: w.source,
            first_seen: w.first_seen,
        })
    }
}

impl Ingredient {
    pub fn new(
        display_name: &str,
        source: IngredientSource,
        first_seen: DateTime<Utc>,
    ) -> Result<Self, ModelError> {
        let canonical_key = canonicalize(display_name)?;
        Ok(Self {
            display_name: display_name.trim().to_string(),
            canonical_key,
            quantity: None,
            source,
            first_seen,
        })
    }

    pub fn with_quantity(mut self, quantity: impl Into<String>) -> Self {
        self.quantity = Some(quantity.into());
        self
    }

    pub fn display_name(&self) -> &str {
        &self.display_name
    }

    pub fn canonical_key(&self) -> &str {
        &self.canonical_key
    }

    pub fn quantity(&self) -> Option<&str> {
        self.quantity.as_deref()
    }

    pub fn source(&self) -> IngredientSource {
        self.source
    }

    pub fn first_seen(&self) -> DateTime<Utc> {
        self.first_seen
    }
}

/// Bounding box in a 0..=1000 frame, ordered `[y_min, x_min, y_max, x_max]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, JsonSchema)]
#[serde(try_from = "NormBoxWire")]
pub struct NormBox {
    y_min: u16,
    x_min: u16,
    y_max: u16,
    x_max: u16,
}

#[derive(Deserialize, JsonSchema)]
#[schemars(rename = "NormBox")]
struct NormBoxWire {
    #[schemars(range(min = 0, max = 1000))]
    y_min: i64,
    #[schemars(range(min = 0, max = 1000))]
    x_min: i64,
    #[schemars(range(min = 0, max = 1000))]
    y_max: i64,
    #[schemars(range(min = 0, max = 1000))]
    x_max: i64,
}

impl TryFrom<NormBoxWire> for NormBox {
    type Error = ModelError;
    fn try_from(w: NormBoxWire) -> Result<Self, Self::Error> {
        NormBox::new(w.y_min, w.x_min, w.y_max, w.x_max)
    }
}

impl NormBox {
    pub const EXTENT: u16 = 1000;

    pub fn new(y_min: i64, x_min: i64, y_max: i64, x_max: i64) -> Result<Self, ModelError> {
        let in_frame = |v: i64| (0..=Self::EXTENT as i64).contains(&v);
        if ![y_min, x_min, y_max, x_max].into_iter().all(in_frame) {
            return Err(ModelError::InvalidBox(format!(
                "coordinates [{y_min}, {x_min}, {y_max}, {x_max}] outside 0..=1000"
            )));
        }
        if y_min >= y_max || x_min >= x_max {
            return Err(ModelError::InvalidBox(format!(
                "[{y_min}, {x_min}, {y_max}, {x_max}] is empty or inverted"
            )));
        }
        Ok(Self {
            y_min: y_min as u16,
            x_min: x_min as u16,
            y_max: y_max as u16,
            x_max: x_max as u16,
        })
    }

    pub fn y_min(&self) -> u16 {
        self.y_min
    }
    pub fn x_min(&self) -> u16 {
        self.x_min
    }
    pub fn y_max(&self) -> u16 {
        self.y_max
    }
    pub fn x_max(&self) -> u16 {
        self.x_max
    }

    pub fn as_array(&self) -> [u16; 4] {
        [self.y_min, self.x_min, self.y_max, self.x_max]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct DetectionLabel {
    pub name: String,
    pub bbox: NormBox,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    #[schemars(range(min = 0.0, max = 1.0))]
    pub confidence: Option<f64>,
}

/// Nutrition as reported by the model. The four macro fields are optional
/// on the wire so that validation can report an incomplete recipe instead
/// of failing to decode it.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct NutritionFacts {
    #[serde(default)]
    pub calories: Option<f64>,
    #[serde(default)]
    pub fat_g: Option<f64>,
    #[serde(default)]
    pub carbohydrates_g: Option<f64>,
    #[serde(default)]
    pub fiber_g: Option<f64>,
    #[serde(default)]
    pub protein_g: Option<f64>,
    #[serde(default)]
    pub vitamins: BTreeMap<String, String>,
}

impl NutritionFacts {
    pub fn is_complete(&self) -> bool {
        self.calories.is_some()
            && self.fat_g.is_some()
            && self.carbohydrates_g.is_some()
            && self.protein_g.is_some()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
pub struct RequiredIngredient {
    pub canonical_key: String,
    pub display_name: String,
    pub amount: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct Recipe {
    pub id: RecipeId,
    pub title: String,
    pub cuisine: String,
    pub servings: u32,
    pub required: Vec<RequiredIngredient>,
    pub steps: Vec<String>,
    pub nutrition: NutritionFacts,
    pub allergens: Vec<String>,
    #[serde(default)]
    pub rating: Option<Scale5>,
}

/// Missing fields take their defaults (level 3, English).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
#[serde(default)]
pub struct UserProfile {
    pub dietary_restrictions: Vec<String>,
    pub allergies: Vec<String>,
    pub favorite_cuisines: Vec<String>,
    pub cooking_level: Scale5,
    pub language: LanguageTag,
}

impl Default for UserProfile {
    fn default() -> Self {
        Self {
            dietary_restrictions: Vec::new(),
            allergies: Vec::new(),
            favorite_cuisines: Vec::new(),
            cooking_level: Scale5(3),
            language: LanguageTag::En,
        }
    }
}

/// Insertion-ordered ingredient set keyed by canonical key.
///
/// Serialized as a JSON array of [`Ingredient`]; decoding rejects duplicate keys.
#[derive(Debug, Clone, Default, PartialEq, JsonSchema)]
#[schemars(transparent)]
pub struct Pantry(#[schemars(with = "Vec<Ingredient>")] IndexMap<String, Ingredient>);

impl Pantry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn contains_key(&self, key: &str) -> bool {
        self.0.contains_key(key)
    }

    pub fn get(&self, key: &str) -> Option<&Ingredient> {
        self.0.get(key)
    }

    /// Inserts unless the key is already present; returns whether it was added.
    pub fn insert(&mut self, ingredient: Ingredient) -> bool {
        if self.0.contains_key(ingredient.canonical_key()) {
            return false;
        }
        self.0
            .insert(ingredient.canonical_key().to_string(), ingredient);
        true
    }

    pub fn remove(&mut self, key: &str) -> Option<Ingredient> {
        self.0.shift_remove(key)
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.0.keys().map(String::as_str)
    }

    pub fn iter(&self) -> impl Iterator<Item = &Ingredient> {
        self.0.values()
    }
}

impl Serialize for Pantry {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_seq(self.0.values())
    }
}

impl<'de> Deserialize<'de> for Pantry {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let items = Vec::<Ingredient>::deserialize(deserializer)?;
        let mut pantry = Pantry::new();
        for item in items {
            let key = item.canonical_key().to_string();
            if !pantry.insert(item) {
                return Err(serde::de::Error::custom(ModelError::DuplicateKey(key)));
            }
        }
        Ok(pantry)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    User,
    Assistant,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
#[serde(rename_all = "snake_case")]
pub enum Modality {
    Text,
    VoiceTranscript,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct ChatTurn {
    pub role: Role,
    pub modality: Modality,
    pub content: String,
    pub timestamp: DateTime<Utc>,
    /// Set on a user turn whose completion failed.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub unanswered: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct PantrySession {
    pub id: SessionId,
    pub ingredients: Pantry,
    pub offered_recipes: Vec<Recipe>,
    pub selected_recipe: Option<RecipeId>,
    pub chat_history: Vec<ChatTurn>,
    pub profile_id: ProfileId,
    pub created_at: DateTime<Utc>,
}

impl PantrySession {
    pub fn new(id: SessionId, profile_id: ProfileId, created_at: DateTime<Utc>) -> Self {
        Self {
            id,
            ingredients: Pantry::new(),
            offered_recipes: Vec::new(),
            selected_recipe: None,
            chat_history: Vec::new(),
            profile_id,
            created_at,
        }
    }

    pub fn offered(&self, id: &RecipeId) -> Option<&Recipe> {
        self.offered_recipes.iter().find(|r| &r.id == id)
    }

    pub fn offered_mut(&mut self, id: &RecipeId) -> Option<&mut Recipe> {
        self.offered_recipes.iter_mut().find(|r| &r.id == id)
    }

    pub fn selected(&self) -> Option<&Recipe> {
        self.selected_recipe.as_ref().and_then(|id| self.offered(id))
    }

    /// Marks an offered recipe as selected; returns false if `id` was never offered.
    pub fn select(&mut self, id: &RecipeId) -> bool {
        if self.offered(id).is_none() {
            return false;
        }
        self.selected_recipe = Some(id.clone());
        true
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Correct,
    NeedsAdjustment,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
pub struct StepFeedback {
    pub step_index: usize,
    pub verdict: Verdict,
    pub explanation: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize, JsonSchema)]
#[serde(rename_all = "snake_case")]
pub enum SurveySection {
    Background,
    Usability,
}

impl fmt::Display for SurveySection {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SurveySection::Background => "background",
            SurveySection::Usability => "usability",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
pub struct LikertResponse {
    pub participant_id: ParticipantId,
    #[schemars(range(min = 1, max = 3))]
    pub round: u8,
    pub section: SurveySection,
    pub question_id: String,
    pub score: Scale5,
}

impl LikertResponse {
    pub const ROUNDS: std::ops::RangeInclusive<u8> = 1..=3;

    pub fn validate(&self) -> Result<(), ModelError> {
        if !Self::ROUNDS.contains(&self.round) {
            return Err(ModelError::OutOfRange {
                field: "round",
                value: self.round as i64,
                min: 1,
                max: 3,
            });
        }
        Ok(())
    }
}
