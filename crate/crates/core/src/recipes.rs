//! Recipe generation constrained to the pantry and the cook's profile.
//!
//! The model is asked to respect every constraint, and every recipe it
//! returns is then re-checked here. Failing recipes are discarded and
//! reported, never repaired.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use schemars::JsonSchema;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::llm::extract::{extract_recipes, ExtractError, RecipeDraft};
use crate::llm::template::{render_prompt, PromptContext, TemplateId};
use crate::llm::{Gateway, LlmError, LlmRequest};
use crate::model::{
    canonicalize, Pantry, PantrySession, Recipe, RecipeId, RequiredIngredient, Scale5, UserProfile,
};

#[derive(Debug, Error)]
pub enum RecipeError {
    #[error("the pantry is empty; scan or add ingredients first")]
    EmptyPantry,
    #[error("recipe count must be at least 1")]
    InvalidCount,
    #[error("none of the {} generated recipe(s) passed validation", .0.len())]
    NoValidRecipes(Vec<RejectedRecipe>),
    #[error("recipe {0:?} was not offered in this session")]
    NotFound(RecipeId),
    #[error("rating {0} outside 1..=5")]
    RatingOutOfRange(i64),
    #[error(transparent)]
    Llm(#[from] LlmError),
    #[error(transparent)]
    Extract(#[from] ExtractError),
}

/// Ingredients assumed available without being in the pantry (salt, water...).
/// Empty by default.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
#[serde(try_from = "Vec<String>", into = "Vec<String>")]
#[schemars(with = "Vec<String>")]
pub struct StaplesPolicy {
    allowed_keys: BTreeSet<String>,
}

impl StaplesPolicy {
    pub fn new<I, S>(names: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        Self {
            allowed_keys: names
                .into_iter()
                .filter_map(|n| canonicalize(n.as_ref()).ok())
                .collect(),
        }
    }

    pub fn allows(&self, key: &str) -> bool {
        self.allowed_keys.contains(key)
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.allowed_keys.iter().map(String::as_str)
    }
}

impl TryFrom<Vec<String>> for StaplesPolicy {
    type Error = std::convert::Infallible;
    fn try_from(names: Vec<String>) -> Result<Self, Self::Error> {
        Ok(Self::new(names))
    }
}

impl From<StaplesPolicy> for Vec<String> {
    fn from(p: StaplesPolicy) -> Self {
        p.allowed_keys.into_iter().collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
pub struct ValidationReport {
    pub recipe_id: RecipeId,
    pub ok: bool,
    pub missing_ingredients: Vec<String>,
    pub nutrition_complete: bool,
    pub schema_errors: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
#[serde(rename_all = "snake_case")]
pub enum MatchSource {
    DeclaredAllergenList,
    IngredientName,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
pub struct AllergenHit {
    pub allergen: String,
    pub matched_in: MatchSource,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
pub struct AllergenReport {
    pub recipe_id: RecipeId,
    pub hits: Vec<AllergenHit>,
}

impl AllergenReport {
    pub fn is_safe(&self) -> bool {
        self.hits.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct RejectedRecipe {
    pub recipe: Recipe,
    pub validation: ValidationReport,
    pub allergens: AllergenReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct GenerationOutcome {
    /// Recipes that passed every check; also appended to the session.
    pub recipes: Vec<Recipe>,
    pub rejected: Vec<RejectedRecipe>,
    /// How many fewer recipes than requested survived.
    pub shortfall: usize,
}

pub fn recipe_from_draft(draft: RecipeDraft, id: RecipeId) -> Recipe {
    let required = draft
        .ingredients
        .into_iter()
        .map(|ing| RequiredIngredient {
            // A blank name keeps an empty key; validation reports it.
            canonical_key: canonicalize(&ing.name).unwrap_or_default(),
            display_name: ing.name.trim().to_string(),
            amount: ing.amount.trim().to_string(),
        })
        .collect();
    Recipe {
        id,
        title: draft.title.trim().to_string(),
        cuisine: draft.cuisine.trim().to_string(),
        servings: draft.servings,
        required,
        steps: draft.steps,
        nutrition: draft.nutrition,
        allergens: draft.allergens,
        rating: None,
    }
}

pub fn validate_recipe(recipe: &Recipe, pantry: &Pantry, staples: &StaplesPolicy) -> ValidationReport {
    let mut missing = Vec::new();
    let mut schema_errors = Vec::new();

    if recipe.title.trim().is_empty() {
        schema_errors.push("title is empty".to_string());
    }
    if recipe.servings == 0 {
        schema_errors.push("servings must be positive".to_string());
    }
    if recipe.required.is_empty() {
        schema_errors.push("no ingredients listed".to_string());
    }
    for (i, req) in recipe.required.iter().enumerate() {
        if req.canonical_key.is_empty() {
            schema_errors.push(format!("ingredient {i} has no name"));
            continue;
        }
        if req.amount.trim().is_empty() {
            schema_errors.push(format!("ingredient {:?} has no amount", req.display_name));
        }
        let key = req.canonical_key.as_str();
        if !pantry.contains_key(key) && !staples.allows(key) && !missing.iter().any(|m| m == key) {
            missing.push(key.to_string());
        }
    }
    if recipe.steps.is_empty() {
        schema_errors.push("no steps listed".to_string());
    }
    for (i, step) in recipe.steps.iter().enumerate() {
        if step.trim().is_empty() {
            schema_errors.push(format!("step {} is empty", i + 1));
        }
    }
    let n = &recipe.nutrition;
    for (name, value) in [
        ("calories", n.calories),
        ("fat_g", n.fat_g),
        ("carbohydrates_g", n.carbohydrates_g),
        ("fiber_g", n.fiber_g),
        ("protein_g", n.protein_g),
    ] {
        if let Some(v) = value {
            if !v.is_finite() || v < 0.0 {
                schema_errors.push(format!("nutrition.{name} must be a non-negative number"));
            }
        }
    }

    let nutrition_complete = n.is_complete();
    ValidationReport {
        recipe_id: recipe.id.clone(),
        ok: missing.is_empty() && nutrition_complete && schema_errors.is_empty(),
        missing_ingredients: missing,
        nutrition_complete,
        schema_errors,
    }
}

/// Case-insensitive substring match of every allergy against the declared
/// allergens and the required ingredient keys. Deliberately over-reports.
pub fn check_allergens(recipe: &Recipe, profile: &UserProfile) -> AllergenReport {
    let mut hits = Vec::new();
    for allergy in &profile.allergies {
        let needle = allergy.trim().to_lowercase();
        if needle.is_empty() {
            continue;
        }
        let sources = [
            (
                MatchSource::DeclaredAllergenList,
                recipe
                    .allergens
                    .iter()
                    .any(|a| a.to_lowercase().contains(&needle)),
            ),
            (
                MatchSource::IngredientName,
                recipe
                    .required
                    .iter()
                    .any(|r| r.canonical_key.contains(&needle)),
            ),
        ];
        for (matched_in, matched) in sources {
            if matched {
                hits.push(AllergenHit {
                    allergen: allergy.trim().to_string(),
                    matched_in,
                });
            }
        }
    }
    AllergenReport {
        recipe_id: recipe.id.clone(),
        hits,
    }
}

/// Required entries not in the pantry, in recipe order, with their amounts.
pub fn shopping_list(recipe: &Recipe, pantry: &Pantry) -> Vec<RequiredIngredient> {
    recipe
        .required
        .iter()
        .filter(|r| !pantry.contains_key(&r.canonical_key))
        .cloned()
        .collect()
}

pub fn rate_recipe(session: &mut PantrySession, recipe_id: &RecipeId, stars: i64) -> Result<(), RecipeError> {
    let recipe = session
        .offered_mut(recipe_id)
        .ok_or_else(|| RecipeError::NotFound(recipe_id.clone()))?;
    let stars = Scale5::new(stars).map_err(|_| RecipeError::RatingOutOfRange(stars))?;
    recipe.rating = Some(stars);
    Ok(())
}

/// The profile line embedded in generation prompts, including past ratings.
pub fn profile_context(profile: &UserProfile, session: &PantrySession) -> String {
    let list = |items: &[String]| {
        if items.is_empty() {
            "none".to_string()
        } else {
            items.join(", ")
        }
    };
    let mut text = format!(
        "dietary restrictions: {}; allergies: {}; favorite cuisines: {}; cooking level: {} of 5",
        list(&profile.dietary_restrictions),
        list(&profile.allergies),
        list(&profile.favorite_cuisines),
        profile.cooking_level,
    );
    let ratings: Vec<_> = session
        .offered_recipes
        .iter()
        .filter_map(|r| r.rating.map(|s| format!("{} {s}/5", r.title)))
        .collect();
    if !ratings.is_empty() {
        let _ = write!(text, "; past meal ratings: {}", ratings.join(", "));
    }
    text
}

/// Plain-text rendering used inside prompts.
pub fn describe_recipe(recipe: &Recipe) -> String {
    let mut text = format!("{} ({} servings)\nIngredients:\n", recipe.title, recipe.servings);
    for req in &recipe.required {
        let _ = writeln!(text, "- {} {}", req.amount, req.display_name);
    }
    text.push_str("Steps:\n");
    for (i, step) in recipe.steps.iter().enumerate() {
        let _ = writeln!(text, "{}. {step}", i + 1);
    }
    text
}

pub async fn generate_recipes(
    gateway: &Gateway,
    session: &mut PantrySession,
    profile: &UserProfile,
    count: usize,
    staples: &StaplesPolicy,
) -> Result<GenerationOutcome, RecipeError> {
    if session.ingredients.is_empty() {
        return Err(RecipeError::EmptyPantry);
    }
    if count == 0 {
        return Err(RecipeError::InvalidCount);
    }

    let pantry_keys: Vec<_> = session.ingredients.keys().collect();
    let prompt = render_prompt(
        TemplateId::GenerateRecipes,
        &PromptContext::new()
            .with("ingredients", pantry_keys.join(", "))
            .with("profile", profile_context(profile, session))
            .with("count", count.to_string())
            .with("language", profile.language.prompt_label()),
    )
    .expect("generate template placeholders are all supplied");
    let request = LlmRequest::new(TemplateId::GenerateRecipes, prompt, profile.language);
    let response = gateway.complete(request).await?;
    let drafts = extract_recipes(&response.raw_text)?;

    let mut next_id = session.offered_recipes.len() + 1;
    let mut accepted = Vec::new();
    let mut rejected = Vec::new();
    for draft in drafts {
        let recipe = recipe_from_draft(draft, RecipeId(format!("r{next_id}")));
        next_id += 1;
        let validation = validate_recipe(&recipe, &session.ingredients, staples);
        let allergens = check_allergens(&recipe, profile);
        if validation.ok && allergens.is_safe() {
            if accepted.len() < count {
                accepted.push(recipe);
            }
        } else {
            tracing::info!(
                title = %recipe.title,
                missing = ?validation.missing_ingredients,
                hits = allergens.hits.len(),
                "discarding generated recipe"
            );
            rejected.push(RejectedRecipe {
                recipe,
                validation,
                allergens,
            });
        }
    }

    if accepted.is_empty() {
        return Err(RecipeError::NoValidRecipes(rejected));
    }
    session.offered_recipes.extend(accepted.iter().cloned());
    Ok(GenerationOutcome {
        shortfall: count - accepted.len(),
        recipes: accepted,
        rejected,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Ingredient, IngredientSource, NutritionFacts};
    use chrono::DateTime;

    fn pantry(keys: &[&str]) -> Pantry {
        let mut p = Pantry::new();
        for k in keys {
            p.insert(Ingredient::new(k, IngredientSource::Scanned, DateTime::UNIX_EPOCH).unwrap());
        }
        p
    }

    fn recipe(keys: &[&str]) -> Recipe {
        Recipe {
            id: "r1".into(),
            title: "Test".into(),
            cuisine: "any".into(),
            servings: 2,
            required: keys
                .iter()
                .map(|k| RequiredIngredient {
                    canonical_key: k.to_string(),
                    display_name: k.to_string(),
                    amount: "1".into(),
                })
                .collect(),
            steps: vec!["Cook.".into()],
            nutrition: NutritionFacts {
                calories: Some(100.0),
                fat_g: Some(1.0),
                carbohydrates_g: Some(2.0),
                protein_g: Some(3.0),
                ..Default::default()
            },
            allergens: Vec::new(),
            rating: None,
        }
    }

    fn allergic_to(allergies: &[&str]) -> UserProfile {
        UserProfile {
            allergies: allergies.iter().map(|s| s.to_string()).collect(),
            ..Default::default()
        }
    }

    #[test]
    fn subset_passes() {
        let r = validate_recipe(&recipe(&["tomato", "egg"]), &pantry(&["tomato", "egg", "onion"]), &StaplesPolicy::default());
        assert!(r.ok);
        assert!(r.missing_ingredients.is_empty());
    }

    #[test]
    fn set_difference_reported() {
        let r = validate_recipe(&recipe(&["tomato", "butter"]), &pantry(&["tomato"]), &StaplesPolicy::default());
        assert!(!r.ok);
        assert_eq!(r.missing_ingredients, vec!["butter"]);
    }

    #[test]
    fn staples_admitted() {
        let r = validate_recipe(&recipe(&["tomato", "salt"]), &pantry(&["tomato"]), &StaplesPolicy::new(["Salt"]));
        assert!(r.ok);
    }

    #[test]
    fn incomplete_nutrition_fails_but_fiber_optional() {
        let mut rec = recipe(&["egg"]);
        assert!(rec.nutrition.fiber_g.is_none());
        assert!(validate_recipe(&rec, &pantry(&["egg"]), &StaplesPolicy::default()).ok);
        rec.nutrition.protein_g = None;
        let r = validate_recipe(&rec, &pantry(&["egg"]), &StaplesPolicy::default());
        assert!(!r.ok);
        assert!(!r.nutrition_complete);
        assert!(r.schema_errors.is_empty());
    }

    #[test]
    fn schema_errors_for_empty_steps_and_amounts() {
        let mut rec = recipe(&["egg"]);
        rec.steps.clear();
        rec.required[0].amount = " ".into();
        rec.nutrition.fat_g = Some(-1.0);
        let r = validate_recipe(&rec, &pantry(&["egg"]), &StaplesPolicy::default());
        assert!(!r.ok);
        assert_eq!(r.schema_errors.len(), 3, "{:?}", r.schema_errors);
    }

    #[test]
    fn allergen_declared_match() {
        let mut rec = recipe(&["noodles"]);
        rec.allergens = vec!["peanut".into()];
        let rep = check_allergens(&rec, &allergic_to(&["peanut"]));
        assert_eq!(
            rep.hits,
            vec![AllergenHit {
                allergen: "peanut".into(),
                matched_in: MatchSource::DeclaredAllergenList
            }]
        );
    }

    #[test]
    fn allergen_ingredient_substring_match() {
        let rep = check_allergens(&recipe(&["peanut butter", "bread"]), &allergic_to(&["Peanut"]));
        assert_eq!(rep.hits.len(), 1);
        assert_eq!(rep.hits[0].matched_in, MatchSource::IngredientName);
    }

    #[test]
    fn no_allergies_no_hits() {
        let mut rec = recipe(&["peanut butter"]);
        rec.allergens = vec!["peanuts".into(), "gluten".into()];
        assert!(check_allergens(&rec, &allergic_to(&[])).is_safe());
        assert!(check_allergens(&rec, &allergic_to(&["  "])).is_safe());
    }

    #[test]
    fn shopping_list_examples() {
        let rec = recipe(&["flour", "eggs", "milk"]);
        let keys = |items: Vec<RequiredIngredient>| items.into_iter().map(|r| r.canonical_key).collect::<Vec<_>>();
        assert_eq!(keys(shopping_list(&rec, &pantry(&["eggs"]))), vec!["flour", "milk"]);
        assert!(shopping_list(&rec, &pantry(&["flour", "eggs", "milk", "salt"])).is_empty());
        assert_eq!(shopping_list(&rec, &pantry(&[])), rec.required);
    }

    #[test]
    fn rating() {
        let mut s = PantrySession::new("s".into(), "p".into(), DateTime::UNIX_EPOCH);
        s.offered_recipes.push(recipe(&["egg"]));
        rate_recipe(&mut s, &"r1".into(), 5).unwrap();
        assert_eq!(s.offered_recipes[0].rating.unwrap().get(), 5);
        assert!(matches!(rate_recipe(&mut s, &"r9".into(), 5), Err(RecipeError::NotFound(_))));
        assert!(matches!(rate_recipe(&mut s, &"r1".into(), 0), Err(RecipeError::RatingOutOfRange(0))));
        assert!(profile_context(&UserProfile::default(), &s).contains("past meal ratings: Test 5/5"));
    }

    #[test]
    fn draft_conversion_canonicalizes() {
        let draft: RecipeDraft = serde_json::from_str(
            r#"{"title":" Omelette ","ingredients":[{"name":"Green  Onion","amount":"2"},{"name":" ","amount":"1"}],"steps":["Beat."]}"#,
        )
        .unwrap();
        let rec = recipe_from_draft(draft, "r7".into());
        assert_eq!(rec.title, "Omelette");
        assert_eq!(rec.servings, 1);
        assert_eq!(rec.required[0].canonical_key, "green onion");
        assert_eq!(rec.required[1].canonical_key, "");
        let r = validate_recipe(&rec, &pantry(&["green onion"]), &StaplesPolicy::default());
        assert!(r.schema_errors.iter().any(|e| e.contains("no name")));
    }

    #[test]
    fn staples_serde_canonicalizes() {
        let p: StaplesPolicy = serde_json::from_str(r#"["  Sea Salt", "WATER"]"#).unwrap();
        assert_eq!(p.keys().collect::<Vec<_>>(), vec!["sea salt", "water"]);
    }
}
