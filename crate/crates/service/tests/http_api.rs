use std::path::PathBuf;
use std::sync::Arc;
use std::time::Duration;

use axum::body::Body;
use axum::http::{header, Method, Request, StatusCode};
use axum::Router;
use base64::Engine as _;
use chrono::DateTime;
use schemars::JsonSchema;
use serde_json::{json, Value};
use souschef_core::i18n::{catalog_keys, Catalog, Localized};
use souschef_core::llm::{LlmProvider, LlmRequest, LlmResponse, ProviderKind};
use souschef_core::{ChatTurn, Gateway, LlmError, MockProvider, PantrySession, Recipe, StepFeedback};
use souschef_service::api::{
    Health, PantryResponse, ProfileView, RecipesResponse, ScanResponse, SelectResponse, ShoppingListResponse,
};
use souschef_service::error::ErrorBody;
use souschef_service::timers::{Timer, TimerState};
use souschef_service::{router, AppState, IdStyle, ManualClock, Settings};
use tower::ServiceExt;

/// Never answers within any sane deadline.
struct SlowProvider;

#[async_trait::async_trait]
impl LlmProvider for SlowProvider {
    fn kind(&self) -> ProviderKind {
        ProviderKind::Live
    }

    async fn complete(&self, _request: &LlmRequest) -> Result<LlmResponse, LlmError> {
        tokio::time::sleep(Duration::from_secs(3600)).await;
        unreachable!()
    }
}

fn fixtures() -> PathBuf {
    PathBuf::from(concat!(env!("CARGO_MANIFEST_DIR"), "/../core/fixtures"))
}

fn snapshot_b64(name: &str) -> String {
    let bytes = std::fs::read(fixtures().join("snapshots").join(name)).unwrap();
    base64::engine::general_purpose::STANDARD.encode(bytes)
}

struct Harness {
    app: Router,
    state: AppState,
    clock: Arc<ManualClock>,
    _dir: tempfile::TempDir,
}

fn harness_with(gateway: Gateway, settings: Settings) -> Harness {
    let dir = tempfile::tempdir().unwrap();
    let clock = Arc::new(ManualClock::new(DateTime::from_timestamp(1_760_000_000, 0).unwrap()));
    let (state, errors) = AppState::builder(gateway)
        .settings(settings)
        .clock(clock.clone())
        .id_style(IdStyle::Sequential)
        .open(dir.path().join("store.jsonl"))
        .unwrap();
    assert!(errors.is_empty());
    Harness {
        app: router(state.clone()),
        state,
        clock,
        _dir: dir,
    }
}

fn harness() -> Harness {
    let settings = Settings {
        staples: souschef_core::recipes::StaplesPolicy::new(["salt", "black pepper"]),
        ..Settings::default()
    };
    harness_with(Gateway::new(MockProvider::from_dir(fixtures()).unwrap()), settings)
}

fn assert_schema<T: JsonSchema>(body: &Value) {
    let schema = serde_json::to_value(schemars::schema_for!(T)).unwrap();
    let validator = jsonschema::validator_for(&schema).unwrap();
    let errors: Vec<String> = validator.iter_errors(body).map(|e| format!("{} at {}", e, e.instance_path())).collect();
    assert!(errors.is_empty(), "{} schema violations: {errors:?}\nbody: {body}", std::any::type_name::<T>());
}

impl Harness {
    async fn raw(&self, method: Method, uri: &str, body: Option<Value>) -> (StatusCode, Value) {
        let mut req = Request::builder().method(method).uri(uri);
        let body = match body {
            Some(v) => {
                req = req.header(header::CONTENT_TYPE, "application/json");
                Body::from(v.to_string())
            }
            None => Body::empty(),
        };
        let resp = self.app.clone().oneshot(req.body(body).unwrap()).await.unwrap();
        let status = resp.status();
        let bytes = axum::body::to_bytes(resp.into_body(), usize::MAX).await.unwrap();
        let value = if bytes.is_empty() {
            Value::Null
        } else {
            serde_json::from_slice(&bytes).unwrap_or_else(|_| Value::String(String::from_utf8_lossy(&bytes).into()))
        };
        (status, value)
    }

    /// Sends a request, checks the status and validates the body against `T`.
    async fn call<T: JsonSchema>(&self, method: Method, uri: &str, body: Option<Value>, expect: StatusCode) -> Value {
        let (status, value) = self.raw(method, uri, body).await;
        assert_eq!(status, expect, "{uri}: {value}");
        assert_schema::<T>(&value);
        value
    }

    async fn fail(&self, method: Method, uri: &str, body: Option<Value>, expect: StatusCode) -> String {
        let value = self.call::<ErrorBody>(method, uri, body, expect).await;
        value["error"]["code"].as_str().unwrap().to_string()
    }

    async fn session_with_profile(&self, profile: Value) -> String {
        let p = self.call::<ProfileView>(Method::POST, "/profiles", Some(profile), StatusCode::CREATED).await;
        let s = self
            .call::<PantrySession>(
                Method::POST,
                "/sessions",
                Some(json!({ "profile_id": p["id"] })),
                StatusCode::CREATED,
            )
            .await;
        s["id"].as_str().unwrap().to_string()
    }

    async fn scan_five(&self, sid: &str) -> Value {
        self.call::<ScanResponse>(
            Method::POST,
            &format!("/sessions/{sid}/scan"),
            Some(json!({
                "image_base64": snapshot_b64("counter.png"),
                "width_px": 640, "height_px": 480,
                "viewport": { "width_px": 390, "height_px": 844 },
                "fixture": "five_items"
            })),
            StatusCode::OK,
        )
        .await
    }
}

#[tokio::test]
async fn health_and_catalogs() {
    let h = harness();
    h.call::<Health>(Method::GET, "/health", None, StatusCode::OK).await;
    for lang in ["en", "es", "fr", "zh", "ja", "ar", "fa", "hi"] {
        let cat = h.call::<Catalog>(Method::GET, &format!("/i18n/{lang}"), None, StatusCode::OK).await;
        let strings = cat["strings"].as_object().unwrap();
        assert_eq!(strings.len(), catalog_keys().count());
        let rtl = matches!(lang, "ar" | "fa");
        assert_eq!(cat["direction"], if rtl { "rtl" } else { "ltr" });
    }
    assert_eq!(h.fail(Method::GET, "/i18n/de", None, StatusCode::NOT_FOUND).await, "not_found");
}

#[tokio::test]
async fn profile_crud() {
    let h = harness();
    let created = h
        .call::<ProfileView>(
            Method::POST,
            "/profiles",
            Some(json!({ "allergies": ["peanut"], "language": "fa" })),
            StatusCode::CREATED,
        )
        .await;
    assert_eq!(created["cooking_level"], 3);
    let id = created["id"].as_str().unwrap();
    let updated = h
        .call::<ProfileView>(
            Method::PUT,
            &format!("/profiles/{id}"),
            Some(json!({ "cooking_level": 5, "favorite_cuisines": ["Persian"] })),
            StatusCode::OK,
        )
        .await;
    assert_eq!(updated["cooking_level"], 5);
    let fetched = h.call::<ProfileView>(Method::GET, &format!("/profiles/{id}"), None, StatusCode::OK).await;
    assert_eq!(fetched, updated);

    assert_eq!(h.fail(Method::GET, "/profiles/nope", None, StatusCode::NOT_FOUND).await, "not_found");
    let code = h
        .fail(Method::POST, "/profiles", Some(json!({ "cooking_level": 9 })), StatusCode::UNPROCESSABLE_ENTITY)
        .await;
    assert_eq!(code, "invalid_input");
}

#[tokio::test]
async fn sessions_are_distinct_and_need_a_profile() {
    let h = harness();
    let a = h.session_with_profile(json!({})).await;
    let p = h.call::<ProfileView>(Method::POST, "/profiles", Some(json!({})), StatusCode::CREATED).await;
    let b = h
        .call::<PantrySession>(Method::POST, "/sessions", Some(json!({ "profile_id": p["id"] })), StatusCode::CREATED)
        .await;
    assert_ne!(a, b["id"].as_str().unwrap());
    assert_eq!(b["ingredients"], json!([]));
    h.fail(Method::POST, "/sessions", Some(json!({ "profile_id": "ghost" })), StatusCode::NOT_FOUND)
        .await;
    h.fail(Method::GET, "/sessions/ghost", None, StatusCode::NOT_FOUND).await;
}

#[tokio::test]
async fn end_to_end_flow() {
    let h = harness();
    let sid = h.session_with_profile(json!({ "dietary_restrictions": ["vegetarian"] })).await;

    let scan = h.scan_five(&sid).await;
    assert_eq!(scan["labels"].as_array().unwrap().len(), 5);
    for label in scan["labels"].as_array().unwrap() {
        let r = &label["projection"]["rect_px"];
        assert!(r["x"].as_u64().unwrap() + r["w"].as_u64().unwrap() <= 390);
        assert!(r["y"].as_u64().unwrap() + r["h"].as_u64().unwrap() <= 844);
    }
    assert_eq!(scan["pantry"].as_array().unwrap().len(), 5);

    let pantry = h
        .call::<PantryResponse>(
            Method::POST,
            &format!("/sessions/{sid}/pantry"),
            Some(json!({ "action": "add", "name": "Basil" })),
            StatusCode::OK,
        )
        .await;
    assert_eq!(pantry["pantry"][5]["canonical_key"], "basil");
    assert_eq!(pantry["pantry"][5]["source"], "manual");
    h.call::<PantryResponse>(
        Method::POST,
        &format!("/sessions/{sid}/pantry"),
        Some(json!({ "action": "remove", "canonical_key": "basil" })),
        StatusCode::OK,
    )
    .await;
    h.fail(
        Method::POST,
        &format!("/sessions/{sid}/pantry"),
        Some(json!({ "action": "remove", "canonical_key": "kale" })),
        StatusCode::NOT_FOUND,
    )
    .await;

    let recipes = h
        .call::<RecipesResponse>(
            Method::POST,
            &format!("/sessions/{sid}/recipes"),
            Some(json!({ "count": 3, "fixture": "golden_three" })),
            StatusCode::OK,
        )
        .await;
    let list = recipes["recipes"].as_array().unwrap();
    assert_eq!(list.len(), 3);
    assert!(list.iter().all(|r| r["validation"]["ok"] == true && r["allergens"]["hits"] == json!([])));
    let rid = list[0]["recipe"]["id"].as_str().unwrap().to_string();

    let selected = h
        .call::<SelectResponse>(Method::POST, &format!("/sessions/{sid}/recipes/{rid}/select"), None, StatusCode::OK)
        .await;
    assert_eq!(selected["selected_recipe"]["id"], rid.as_str());
    h.fail(Method::POST, &format!("/sessions/{sid}/recipes/r99/select"), None, StatusCode::NOT_FOUND)
        .await;

    let rated = h
        .call::<Recipe>(
            Method::POST,
            &format!("/sessions/{sid}/recipes/{rid}/rate"),
            Some(json!({ "stars": 4 })),
            StatusCode::OK,
        )
        .await;
    assert_eq!(rated["rating"], 4);
    h.fail(
        Method::POST,
        &format!("/sessions/{sid}/recipes/{rid}/rate"),
        Some(json!({ "stars": 6 })),
        StatusCode::UNPROCESSABLE_ENTITY,
    )
    .await;

    let turn = h
        .call::<ChatTurn>(
            Method::POST,
            &format!("/sessions/{sid}/chat"),
            Some(json!({ "text": "What can I make?", "fixture": "suggest_reply" })),
            StatusCode::OK,
        )
        .await;
    assert_eq!(turn["role"], "assistant");
    let voice = h
        .call::<ChatTurn>(
            Method::POST,
            &format!("/sessions/{sid}/chat"),
            Some(json!({ "text": "What can I make?", "modality": "voice_transcript", "fixture": "suggest_reply" })),
            StatusCode::OK,
        )
        .await;
    assert_eq!(voice["content"], turn["content"]);
    assert_eq!(voice["modality"], "voice_transcript");
    h.fail(
        Method::POST,
        &format!("/sessions/{sid}/chat"),
        Some(json!({ "text": "   " })),
        StatusCode::UNPROCESSABLE_ENTITY,
    )
    .await;

    let feedback = h
        .call::<StepFeedback>(
            Method::POST,
            &format!("/sessions/{sid}/step-check"),
            Some(json!({
                "recipe_id": rid, "step_index": 0, "fixture": "too_coarse",
                "snapshot": { "image_base64": snapshot_b64("board.jpg"), "width_px": 320, "height_px": 240 }
            })),
            StatusCode::OK,
        )
        .await;
    assert_eq!(feedback["verdict"], "needs_adjustment");
    let code = h
        .fail(
            Method::POST,
            &format!("/sessions/{sid}/step-check"),
            Some(json!({
                "recipe_id": rid, "step_index": 99, "fixture": "diced_ok",
                "snapshot": { "image_base64": snapshot_b64("board.jpg"), "width_px": 320, "height_px": 240 }
            })),
            StatusCode::UNPROCESSABLE_ENTITY,
        )
        .await;
    assert_eq!(code, "invalid_step");

    let shopping = h
        .call::<ShoppingListResponse>(
            Method::POST,
            &format!("/sessions/{sid}/recipes/{rid}/shopping-list"),
            None,
            StatusCode::OK,
        )
        .await;
    let keys: Vec<_> = shopping["items"].as_array().unwrap().iter().map(|i| i["canonical_key"].clone()).collect();
    assert_eq!(keys, [json!("salt"), json!("black pepper")]);

    let session = h.call::<PantrySession>(Method::GET, &format!("/sessions/{sid}"), None, StatusCode::OK).await;
    assert_eq!(session["chat_history"].as_array().unwrap().len(), 4);
    assert_eq!(session["selected_recipe"], rid.as_str());
}

#[tokio::test]
async fn adversarial_recipes_are_reported_not_offered() {
    let h = harness();
    let sid = h.session_with_profile(json!({ "allergies": ["peanut"] })).await;
    h.scan_five(&sid).await;
    let out = h
        .call::<RecipesResponse>(
            Method::POST,
            &format!("/sessions/{sid}/recipes"),
            Some(json!({ "count": 3, "fixture": "allergen_block" })),
            StatusCode::OK,
        )
        .await;
    assert_eq!(out["shortfall"], 1);
    assert_eq!(out["rejected"][0]["recipe"]["title"], "Peanut Butter Pancakes");

    let err = h
        .call::<ErrorBody>(
            Method::POST,
            &format!("/sessions/{sid}/recipes"),
            Some(json!({ "count": 2, "fixture": "none_valid" })),
            StatusCode::UNPROCESSABLE_ENTITY,
        )
        .await;
    assert_eq!(err["error"]["code"], "no_valid_recipes");
    assert_eq!(err["error"]["details"].as_array().unwrap().len(), 2);

    let session = h.call::<PantrySession>(Method::GET, &format!("/sessions/{sid}"), None, StatusCode::OK).await;
    let titles: Vec<_> = session["offered_recipes"].as_array().unwrap().iter().map(|r| r["title"].clone()).collect();
    assert_eq!(titles.len(), 2);
    assert!(!titles.contains(&json!("Peanut Butter Pancakes")));

    let empty = h.session_with_profile(json!({})).await;
    let code = h
        .fail(Method::POST, &format!("/sessions/{empty}/recipes"), Some(json!({})), StatusCode::CONFLICT)
        .await;
    assert_eq!(code, "empty_pantry");
}

#[tokio::test]
async fn scan_edge_cases() {
    let h = harness();
    let sid = h.session_with_profile(json!({})).await;
    let empty = h
        .call::<ScanResponse>(
            Method::POST,
            &format!("/sessions/{sid}/scan"),
            Some(json!({ "image_base64": snapshot_b64("counter.png"), "width_px": 640, "height_px": 480, "fixture": "empty_counter" })),
            StatusCode::OK,
        )
        .await;
    assert_eq!(empty["warning"], true);
    assert_eq!(empty["viewport"], json!({ "width_px": 640, "height_px": 480 }));

    let bad = h
        .call::<ScanResponse>(
            Method::POST,
            &format!("/sessions/{sid}/scan"),
            Some(json!({ "image_base64": snapshot_b64("counter.png"), "width_px": 640, "height_px": 480, "fixture": "one_bad_box" })),
            StatusCode::OK,
        )
        .await;
    assert_eq!(bad["dropped_count"], 1);

    let code = h
        .fail(
            Method::POST,
            &format!("/sessions/{sid}/scan"),
            Some(json!({ "image_base64": "aGVsbG8=", "width_px": 10, "height_px": 10 })),
            StatusCode::UNPROCESSABLE_ENTITY,
        )
        .await;
    assert_eq!(code, "invalid_snapshot");
    let code = h
        .fail(
            Method::POST,
            &format!("/sessions/{sid}/scan"),
            Some(json!({ "image_base64": snapshot_b64("counter.png"), "width_px": 640, "height_px": 480, "fixture": "missing" })),
            StatusCode::BAD_GATEWAY,
        )
        .await;
    assert_eq!(code, "llm_rejected");
    h.fail(Method::POST, &format!("/sessions/{sid}/scan"), Some(json!({ "width_px": 1 })), StatusCode::UNPROCESSABLE_ENTITY)
        .await;
}

#[tokio::test]
async fn scan_accepts_multipart() {
    let h = harness();
    let sid = h.session_with_profile(json!({})).await;
    let image = std::fs::read(fixtures().join("snapshots/counter.png")).unwrap();
    let boundary = "XyZzY";
    let mut body = Vec::new();
    let text = |name: &str, value: &str| {
        format!("--{boundary}\r\nContent-Disposition: form-data; name=\"{name}\"\r\n\r\n{value}\r\n").into_bytes()
    };
    body.extend(text("width_px", "640"));
    body.extend(text("height_px", "480"));
    body.extend(text("viewport.width_px", "1000"));
    body.extend(text("viewport.height_px", "1000"));
    body.extend(text("fixture", "five_items"));
    body.extend(
        format!(
            "--{boundary}\r\nContent-Disposition: form-data; name=\"image\"; filename=\"counter.png\"\r\nContent-Type: image/png\r\n\r\n"
        )
        .into_bytes(),
    );
    body.extend(&image);
    body.extend(format!("\r\n--{boundary}--\r\n").into_bytes());
    let req = Request::builder()
        .method(Method::POST)
        .uri(format!("/sessions/{sid}/scan"))
        .header(header::CONTENT_TYPE, format!("multipart/form-data; boundary={boundary}"))
        .body(Body::from(body))
        .unwrap();
    let resp = h.app.clone().oneshot(req).await.unwrap();
    assert_eq!(resp.status(), StatusCode::OK);
    let value: Value = serde_json::from_slice(&axum::body::to_bytes(resp.into_body(), usize::MAX).await.unwrap()).unwrap();
    assert_schema::<ScanResponse>(&value);
    // 1000 px viewport: pixels equal normalized units.
    assert_eq!(value["labels"][0]["projection"]["rect_px"], json!({ "x": 120, "y": 412, "w": 145, "h": 148 }));
}

#[tokio::test]
async fn timers_follow_the_clock() {
    let h = harness();
    let sid = h.session_with_profile(json!({})).await;
    let t = h
        .call::<Timer>(
            Method::POST,
            &format!("/sessions/{sid}/timers"),
            Some(json!({ "label": "pasta", "duration_s": 600 })),
            StatusCode::CREATED,
        )
        .await;
    assert_eq!(t["state"], "running");
    assert_eq!(t["remaining_s"], 600);
    let tid = t["id"].as_str().unwrap().to_string();

    h.clock.advance(chrono::Duration::seconds(100));
    let t = h.call::<Timer>(Method::GET, &format!("/timers/{tid}"), None, StatusCode::OK).await;
    assert_eq!(t["remaining_s"], 500);

    h.call::<Timer>(Method::POST, &format!("/timers/{tid}/pause"), None, StatusCode::OK).await;
    h.clock.advance(chrono::Duration::hours(5));
    let t = h.call::<Timer>(Method::GET, &format!("/timers/{tid}"), None, StatusCode::OK).await;
    assert_eq!((t["state"].as_str(), t["remaining_s"].as_u64()), (Some("paused"), Some(500)));

    h.call::<Timer>(Method::POST, &format!("/timers/{tid}/resume"), None, StatusCode::OK).await;
    let code = h.fail(Method::POST, &format!("/timers/{tid}/resume"), None, StatusCode::CONFLICT).await;
    assert_eq!(code, "invalid_state");

    h.clock.advance(chrono::Duration::seconds(500));
    let expired = h.state.tick().await;
    assert_eq!(expired.len(), 1);
    assert_eq!(expired[0].state, TimerState::Expired);
    assert!(h.state.tick().await.is_empty());
    let t = h.call::<Timer>(Method::GET, &format!("/timers/{tid}"), None, StatusCode::OK).await;
    assert_eq!(t["remaining_s"], 0);

    h.fail(Method::GET, "/timers/ghost", None, StatusCode::NOT_FOUND).await;
    h.fail(
        Method::POST,
        &format!("/sessions/{sid}/timers"),
        Some(json!({ "label": "x", "duration_s": 0 })),
        StatusCode::UNPROCESSABLE_ENTITY,
    )
    .await;
}

#[tokio::test]
async fn translate_endpoint() {
    let h = harness();
    let fr = h
        .call::<Localized>(
            Method::POST,
            "/i18n/translate",
            Some(json!({ "text": "Dice the onion", "language": "fr", "fixture": "fr_dice" })),
            StatusCode::OK,
        )
        .await;
    assert_eq!(fr, json!({ "text": "Coupez l'oignon en dés.", "fell_back": false }));
    let en = h
        .call::<Localized>(
            Method::POST,
            "/i18n/translate",
            Some(json!({ "text": "Dice the onion", "language": "en" })),
            StatusCode::OK,
        )
        .await;
    assert_eq!(en["text"], "Dice the onion");
}

#[tokio::test]
async fn model_deadline_returns_504_and_keeps_history_consistent() {
    let settings = Settings {
        llm_timeout: Duration::from_millis(50),
        ..Settings::default()
    };
    let h = harness_with(Gateway::new(SlowProvider), settings);
    let sid = h.session_with_profile(json!({})).await;
    let code = h
        .fail(
            Method::POST,
            &format!("/sessions/{sid}/chat"),
            Some(json!({ "text": "hello?" })),
            StatusCode::GATEWAY_TIMEOUT,
        )
        .await;
    assert_eq!(code, "llm_timeout");
    let session = h.call::<PantrySession>(Method::GET, &format!("/sessions/{sid}"), None, StatusCode::OK).await;
    let history = session["chat_history"].as_array().unwrap();
    assert_eq!(history.len(), 1);
    assert_eq!(history[0]["unanswered"], true);
}

#[tokio::test]
async fn malformed_json_uses_error_format() {
    let h = harness();
    let req = Request::builder()
        .method(Method::POST)
        .uri("/profiles")
        .header(header::CONTENT_TYPE, "application/json")
        .body(Body::from("{not json"))
        .unwrap();
    let resp = h.app.clone().oneshot(req).await.unwrap();
    assert_eq!(resp.status(), StatusCode::BAD_REQUEST);
    let value: Value = serde_json::from_slice(&axum::body::to_bytes(resp.into_body(), usize::MAX).await.unwrap()).unwrap();
    assert_schema::<ErrorBody>(&value);
}
