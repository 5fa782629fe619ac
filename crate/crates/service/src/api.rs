//! Route table and handlers.

use axum::extract::{DefaultBodyLimit, FromRequest, Multipart, Path, Request, State};
use axum::http::{header, StatusCode};
use axum::routing::{get, post};
use axum::{Json, Router};
use base64::Engine as _;
use schemars::JsonSchema;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use souschef_core::assistant::ask;
use souschef_core::i18n::{catalog, localize_or_original, Catalog, Localized};
use souschef_core::llm::ProviderKind;
use souschef_core::perception::{
    detect_ingredients, edit_pantry, merge_into_pantry, project_label, verify_step, PantryEdit, Projection, Snapshot,
    Viewport,
};
use souschef_core::recipes::{
    check_allergens, generate_recipes, rate_recipe, shopping_list, validate_recipe, AllergenReport, RejectedRecipe,
    ValidationReport,
};
use souschef_core::{
    ChatTurn, DetectionLabel, LanguageTag, Modality, Pantry, PantrySession, ProfileId, Recipe, RecipeId,
    RequiredIngredient, Role, SessionId, StepFeedback, TimerId, UserProfile,
};

use crate::error::ApiError;
use crate::state::AppState;
use crate::timers::Timer;

/// Largest accepted request body; snapshots dominate.
pub const MAX_BODY_BYTES: usize = 20 * 1024 * 1024;

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/health", get(health))
        .route("/profiles", post(create_profile))
        .route("/profiles/{id}", get(get_profile).put(put_profile))
        .route("/sessions", post(create_session))
        .route("/sessions/{id}", get(get_session))
        .route("/sessions/{id}/scan", post(scan))
        .route("/sessions/{id}/pantry", post(pantry_edit))
        .route("/sessions/{id}/recipes", post(recipes))
        .route("/sessions/{id}/recipes/{rid}/select", post(select))
        .route("/sessions/{id}/recipes/{rid}/rate", post(rate))
        .route("/sessions/{id}/recipes/{rid}/shopping-list", post(shopping))
        .route("/sessions/{id}/chat", post(chat))
        .route("/sessions/{id}/step-check", post(step_check))
        .route("/sessions/{id}/timers", post(create_timer))
        .route("/timers/{tid}", get(get_timer))
        .route("/timers/{tid}/pause", post(pause_timer))
        .route("/timers/{tid}/resume", post(resume_timer))
        .route("/i18n/translate", post(translate))
        .route("/i18n/{lang}", get(get_catalog))
        .layer(DefaultBodyLimit::max(MAX_BODY_BYTES))
        .with_state(state)
}

/// JSON body extractor whose rejections use the service error format.
pub struct ApiJson<T>(pub T);

impl<S: Send + Sync, T: DeserializeOwned> FromRequest<S> for ApiJson<T> {
    type Rejection = ApiError;

    async fn from_request(req: Request, state: &S) -> Result<Self, Self::Rejection> {
        match Json::<T>::from_request(req, state).await {
            Ok(Json(v)) => Ok(Self(v)),
            Err(rejection) => Err(ApiError::new(rejection.status(), "invalid_input", rejection.body_text())),
        }
    }
}

/// Accepts the body as JSON, or as multipart form data converted to the
/// same JSON shape: dotted field names nest (`viewport.width_px`), a field
/// ending in `image` becomes base64 `..._base64`, and fields ending in
/// `_px` or `index` are read as numbers.
pub struct JsonOrForm<T>(pub T);

impl<S: Send + Sync, T: DeserializeOwned> FromRequest<S> for JsonOrForm<T> {
    type Rejection = ApiError;

    async fn from_request(req: Request, state: &S) -> Result<Self, Self::Rejection> {
        let is_multipart = req
            .headers()
            .get(header::CONTENT_TYPE)
            .and_then(|v| v.to_str().ok())
            .is_some_and(|v| v.starts_with("multipart/form-data"));
        if !is_multipart {
            return ApiJson::from_request(req, state).await.map(|ApiJson(v)| Self(v));
        }
        let mut form = Multipart::from_request(req, state)
            .await
            .map_err(|e| ApiError::bad_request(e.body_text()))?;
        let mut root = Map::new();
        while let Some(field) = form.next_field().await.map_err(|e| ApiError::bad_request(e.body_text()))? {
            let name = field.name().unwrap_or_default().to_string();
            let bytes = field.bytes().await.map_err(|e| ApiError::bad_request(e.body_text()))?;
            let (key, value) = if name == "image" || name.ends_with(".image") {
                (
                    format!("{name}_base64"),
                    Value::String(base64::engine::general_purpose::STANDARD.encode(&bytes)),
                )
            } else {
                let text = String::from_utf8(bytes.to_vec())
                    .map_err(|_| ApiError::bad_request(format!("field {name} is not UTF-8")))?;
                let value = if name.ends_with("_px") || name.ends_with("index") {
                    text.trim()
                        .parse::<u64>()
                        .map(Value::from)
                        .map_err(|_| ApiError::bad_request(format!("field {name} must be a non-negative integer")))?
                } else {
                    Value::String(text)
                };
                (name, value)
            };
            insert_dotted(&mut root, &key, value);
        }
        serde_json::from_value(Value::Object(root))
            .map(Self)
            .map_err(|e| ApiError::bad_request(e.to_string()))
    }
}

fn insert_dotted(root: &mut Map<String, Value>, key: &str, value: Value) {
    match key.split_once('.') {
        None => {
            root.insert(key.to_string(), value);
        }
        Some((head, rest)) => {
            let child = root
                .entry(head.to_string())
                .or_insert_with(|| Value::Object(Map::new()));
            if !child.is_object() {
                *child = Value::Object(Map::new());
            }
            if let Value::Object(map) = child {
                insert_dotted(map, rest, value);
            }
        }
    }
}

// ---- request and response bodies ----

#[derive(Debug, Serialize, Deserialize, JsonSchema)]
pub struct Health {
    pub status: String,
    pub provider: ProviderKind,
}

#[derive(Debug, Serialize, Deserialize, JsonSchema)]
pub struct ProfileView {
    pub id: ProfileId,
    #[serde(flatten)]
    pub profile: UserProfile,
}

#[derive(Debug, Serialize, Deserialize, JsonSchema)]
pub struct CreateSession {
    pub profile_id: ProfileId,
}

/// An uploaded image, base64-encoded.
#[derive(Debug, Clone, Serialize, Deserialize, JsonSchema)]
pub struct SnapshotUpload {
    pub image_base64: String,
    /// Checked against the image bytes when given.
    #[serde(default)]
    pub mime_type: Option<String>,
    pub width_px: u32,
    pub height_px: u32,
}

impl SnapshotUpload {
    fn decode(&self, now: chrono::DateTime<chrono::Utc>) -> Result<Snapshot, ApiError> {
        let bytes = base64::engine::general_purpose::STANDARD
            .decode(self.image_base64.trim())
            .map_err(|e| ApiError::bad_request(format!("image_base64: {e}")))?;
        let mut snapshot = Snapshot::new(bytes, self.width_px, self.height_px, now)?;
        if let Some(mime) = &self.mime_type {
            snapshot.mime_type = mime.clone();
            snapshot.validate()?;
        }
        Ok(snapshot)
    }
}

#[derive(Debug, Serialize, Deserialize, JsonSchema)]
pub struct ScanRequest {
    #[serde(flatten)]
    pub snapshot: SnapshotUpload,
    /// Surface the labels will be drawn on; defaults to the image size.
    #[serde(default)]
    pub viewport: Option<Viewport>,
    #[serde(default)]
    pub fixture: Option<String>,
}

#[derive(Debug, Serialize, Deserialize, JsonSchema)]
pub struct ScannedLabel {
    #[serde(flatten)]
    pub label: DetectionLabel,
    pub projection: Projection,
}

#[derive(Debug, Serialize, Deserialize, JsonSchema)]
pub struct ScanResponse {
    pub labels: Vec<ScannedLabel>,
    pub viewport: Viewport,
    pub dropped_count: usize,
    /// True when the model reported nothing at all.
    pub warning: bool,
    /// Canonical keys newly added to the pantry by this scan.
    pub added: Vec<String>,
    pub pantry: Pantry,
}

#[derive(Debug, Serialize, Deserialize, JsonSchema)]
pub struct PantryResponse {
    pub pantry: Pantry,
}

fn default_count() -> usize {
    3
}

#[derive(Debug, Serialize, Deserialize, JsonSchema)]
pub struct GenerateRequest {
    #[serde(default = "default_count")]
    pub count: usize,
    #[serde(default)]
    pub fixture: Option<String>,
}

#[derive(Debug, Serialize, Deserialize, JsonSchema)]
pub struct RecipeReport {
    pub recipe: Recipe,
    pub validation: ValidationReport,
    pub allergens: AllergenReport,
}

#[derive(Debug, Serialize, Deserialize, JsonSchema)]
pub struct RecipesResponse {
    pub recipes: Vec<RecipeReport>,
    pub rejected: Vec<RejectedRecipe>,
    pub shortfall: usize,
}

#[derive(Debug, Serialize, Deserialize, JsonSchema)]
pub struct SelectResponse {
    pub selected_recipe: Recipe,
}

#[derive(Debug, Serialize, Deserialize, JsonSchema)]
pub struct RateRequest {
    pub stars: i64,
}

#[derive(Debug, Serialize, Deserialize, JsonSchema)]
pub struct ShoppingListResponse {
    pub recipe_id: RecipeId,
    pub items: Vec<RequiredIngredient>,
}

fn text_modality() -> Modality {
    Modality::Text
}

#[derive(Debug, Serialize, Deserialize, JsonSchema)]
pub struct ChatRequest {
    pub text: String,
    #[serde(default = "text_modality")]
    pub modality: Modality,
    #[serde(default)]
    pub fixture: Option<String>,
}

#[derive(Debug, Serialize, Deserialize, JsonSchema)]
pub struct StepCheckRequest {
    pub recipe_id: RecipeId,
    pub step_index: usize,
    pub snapshot: SnapshotUpload,
    #[serde(default)]
    pub fixture: Option<String>,
}

#[derive(Debug, Serialize, Deserialize, JsonSchema)]
pub struct TimerRequest {
    pub label: String,
    pub duration_s: u64,
}

#[derive(Debug, Serialize, Deserialize, JsonSchema)]
pub struct TranslateRequest {
    pub text: String,
    pub language: LanguageTag,
    #[serde(default)]
    pub fixture: Option<String>,
}

type ApiResult<T> = Result<Json<T>, ApiError>;

// ---- handlers ----

async fn health(State(state): State<AppState>) -> Json<Health> {
    Json(Health {
        status: "ok".into(),
        provider: state.gateway().kind(),
    })
}

async fn create_profile(
    State(state): State<AppState>,
    ApiJson(profile): ApiJson<UserProfile>,
) -> Result<(StatusCode, Json<ProfileView>), ApiError> {
    let id = ProfileId(state.mint_id("p"));
    state.put_profile(id.clone(), profile.clone()).await?;
    Ok((StatusCode::CREATED, Json(ProfileView { id, profile })))
}

async fn get_profile(State(state): State<AppState>, Path(id): Path<ProfileId>) -> ApiResult<ProfileView> {
    let profile = state.profile(&id).await?;
    Ok(Json(ProfileView { id, profile }))
}

async fn put_profile(
    State(state): State<AppState>,
    Path(id): Path<ProfileId>,
    ApiJson(profile): ApiJson<UserProfile>,
) -> ApiResult<ProfileView> {
    state.profile(&id).await?;
    state.put_profile(id.clone(), profile.clone()).await?;
    Ok(Json(ProfileView { id, profile }))
}

async fn create_session(
    State(state): State<AppState>,
    ApiJson(body): ApiJson<CreateSession>,
) -> Result<(StatusCode, Json<PantrySession>), ApiError> {
    state.profile(&body.profile_id).await?;
    let session = PantrySession::new(SessionId(state.mint_id("s")), body.profile_id, state.now());
    state.insert_session(session.clone()).await?;
    Ok((StatusCode::CREATED, Json(session)))
}

async fn get_session(State(state): State<AppState>, Path(id): Path<SessionId>) -> ApiResult<PantrySession> {
    let handle = state.session(&id).await?;
    let session = handle.lock().await;
    Ok(Json(session.clone()))
}

async fn scan(
    State(state): State<AppState>,
    Path(id): Path<SessionId>,
    JsonOrForm(body): JsonOrForm<ScanRequest>,
) -> ApiResult<ScanResponse> {
    let snapshot = body.snapshot.decode(state.now())?;
    let viewport = match body.viewport {
        Some(v) => v,
        None => Viewport::new(snapshot.width_px, snapshot.height_px)?,
    };
    let handle = state.session(&id).await?;
    let mut session = handle.lock().await;
    let profile = state.profile(&session.profile_id).await?;
    let gateway = state.gateway_for(body.fixture.as_deref());
    let outcome = state
        .with_llm_deadline(detect_ingredients(&gateway, &snapshot, profile.language))
        .await?;
    let added = merge_into_pantry(&mut session, &outcome.labels, state.now());
    if !added.is_empty() {
        state.persist_session(&session)?;
    }
    let labels = outcome
        .labels
        .into_iter()
        .map(|label| ScannedLabel {
            projection: project_label(&label.bbox, &viewport),
            label,
        })
        .collect();
    Ok(Json(ScanResponse {
        labels,
        viewport,
        dropped_count: outcome.dropped_count,
        warning: outcome.warning,
        added,
        pantry: session.ingredients.clone(),
    }))
}

async fn pantry_edit(
    State(state): State<AppState>,
    Path(id): Path<SessionId>,
    ApiJson(edit): ApiJson<PantryEdit>,
) -> ApiResult<PantryResponse> {
    let handle = state.session(&id).await?;
    let mut session = handle.lock().await;
    edit_pantry(&mut session, &edit, state.now())?;
    state.persist_session(&session)?;
    Ok(Json(PantryResponse {
        pantry: session.ingredients.clone(),
    }))
}

async fn recipes(
    State(state): State<AppState>,
    Path(id): Path<SessionId>,
    ApiJson(body): ApiJson<GenerateRequest>,
) -> ApiResult<RecipesResponse> {
    let handle = state.session(&id).await?;
    let mut session = handle.lock().await;
    let profile = state.profile(&session.profile_id).await?;
    let gateway = state.gateway_for(body.fixture.as_deref());
    let staples = &state.settings().staples;
    let result = state
        .with_llm_deadline(generate_recipes(&gateway, &mut session, &profile, body.count, staples))
        .await;
    // Rejected drafts consume ids, so persist even on failure.
    state.persist_session(&session)?;
    let outcome = result?;
    let recipes = outcome
        .recipes
        .into_iter()
        .map(|recipe| RecipeReport {
            validation: validate_recipe(&recipe, &session.ingredients, staples),
            allergens: check_allergens(&recipe, &profile),
            recipe,
        })
        .collect();
    Ok(Json(RecipesResponse {
        recipes,
        rejected: outcome.rejected,
        shortfall: outcome.shortfall,
    }))
}

async fn select(
    State(state): State<AppState>,
    Path((id, rid)): Path<(SessionId, RecipeId)>,
) -> ApiResult<SelectResponse> {
    let handle = state.session(&id).await?;
    let mut session = handle.lock().await;
    if !session.select(&rid) {
        return Err(ApiError::not_found("recipe", rid));
    }
    state.persist_session(&session)?;
    let selected_recipe = session.selected().cloned().expect("just selected");
    Ok(Json(SelectResponse { selected_recipe }))
}

async fn rate(
    State(state): State<AppState>,
    Path((id, rid)): Path<(SessionId, RecipeId)>,
    ApiJson(body): ApiJson<RateRequest>,
) -> ApiResult<Recipe> {
    let handle = state.session(&id).await?;
    let mut session = handle.lock().await;
    rate_recipe(&mut session, &rid, body.stars)?;
    state.persist_session(&session)?;
    Ok(Json(session.offered(&rid).cloned().expect("just rated")))
}

async fn shopping(
    State(state): State<AppState>,
    Path((id, rid)): Path<(SessionId, RecipeId)>,
) -> ApiResult<ShoppingListResponse> {
    let handle = state.session(&id).await?;
    let session = handle.lock().await;
    let recipe = session.offered(&rid).ok_or_else(|| ApiError::not_found("recipe", &rid))?;
    Ok(Json(ShoppingListResponse {
        items: shopping_list(recipe, &session.ingredients),
        recipe_id: rid,
    }))
}

async fn chat(
    State(state): State<AppState>,
    Path(id): Path<SessionId>,
    ApiJson(body): ApiJson<ChatRequest>,
) -> ApiResult<ChatTurn> {
    let handle = state.session(&id).await?;
    let mut session = handle.lock().await;
    let profile = state.profile(&session.profile_id).await?;
    let gateway = state.gateway_for(body.fixture.as_deref());
    let before = session.chat_history.len();
    let now = state.now();
    let budget = state.settings().history_budget;
    let result = state
        .with_llm_deadline(ask(&gateway, &mut session, &profile, &body.text, body.modality, budget, now))
        .await;
    if result.is_err() && session.chat_history.len() > before {
        // A deadline drops the call before it can flag the turn itself.
        if let Some(turn) = session.chat_history.last_mut().filter(|t| t.role == Role::User) {
            turn.unanswered = true;
        }
    }
    if session.chat_history.len() > before {
        state.persist_session(&session)?;
    }
    Ok(Json(result?))
}

async fn step_check(
    State(state): State<AppState>,
    Path(id): Path<SessionId>,
    JsonOrForm(body): JsonOrForm<StepCheckRequest>,
) -> ApiResult<StepFeedback> {
    let snapshot = body.snapshot.decode(state.now())?;
    let handle = state.session(&id).await?;
    let session = handle.lock().await;
    let profile = state.profile(&session.profile_id).await?;
    let recipe = session
        .offered(&body.recipe_id)
        .ok_or_else(|| ApiError::not_found("recipe", &body.recipe_id))?;
    let gateway = state.gateway_for(body.fixture.as_deref());
    let feedback = state
        .with_llm_deadline(verify_step(&gateway, &snapshot, recipe, body.step_index, profile.language))
        .await?;
    Ok(Json(feedback))
}

async fn create_timer(
    State(state): State<AppState>,
    Path(id): Path<SessionId>,
    ApiJson(body): ApiJson<TimerRequest>,
) -> Result<(StatusCode, Json<Timer>), ApiError> {
    state.session(&id).await?;
    let timer = Timer::new(TimerId(state.mint_id("t")), id, &body.label, body.duration_s, state.now())?;
    let timer = state.insert_timer(timer).await?;
    Ok((StatusCode::CREATED, Json(timer)))
}

async fn get_timer(State(state): State<AppState>, Path(tid): Path<TimerId>) -> ApiResult<Timer> {
    let timer = state
        .update_timer(&tid, |_, _| Ok::<_, ApiError>(()))
        .await?;
    Ok(Json(timer))
}

async fn pause_timer(State(state): State<AppState>, Path(tid): Path<TimerId>) -> ApiResult<Timer> {
    Ok(Json(state.update_timer(&tid, |t, now| t.pause(now)).await?))
}

async fn resume_timer(State(state): State<AppState>, Path(tid): Path<TimerId>) -> ApiResult<Timer> {
    Ok(Json(state.update_timer(&tid, |t, now| t.resume(now)).await?))
}

async fn get_catalog(Path(lang): Path<String>) -> ApiResult<Catalog> {
    let language: LanguageTag = lang
        .parse()
        .map_err(|_| ApiError::not_found("language", &lang))?;
    Ok(Json(catalog(language).clone()))
}

async fn translate(State(state): State<AppState>, ApiJson(body): ApiJson<TranslateRequest>) -> ApiResult<Localized> {
    let gateway = state.gateway_for(body.fixture.as_deref());
    let localized = state
        .with_llm_deadline(localize_or_original(&gateway, &body.text, body.language))
        .await?;
    Ok(Json(localized))
}
