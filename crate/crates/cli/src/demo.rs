//! Replays a [`Scenario`] against an in-process service backed by the mock
//! provider, printing each exchange and checking invariants as it goes.

use std::collections::BTreeSet;
use std::io::Write;
use std::path::Path;
use std::sync::Arc;

use axum::body::Body;
use axum::http::{header, Method, Request};
use axum::Router;
use base64::Engine as _;
use chrono::DateTime;
use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::{json, Value};
use souschef_core::recipes::StaplesPolicy;
use souschef_core::{canonicalize, ChatTurn, Gateway, MockProvider, PantrySession, Recipe, Role, StepFeedback};
use souschef_service::api::{
    PantryResponse, ProfileView, RecipesResponse, ScanResponse, SelectResponse, ShoppingListResponse,
};
use souschef_service::{router, AppState, IdStyle, ManualClock, Settings};
use tower::ServiceExt;

use crate::scenario::{Scenario, Step};

#[derive(Debug, thiserror::Error)]
pub enum DemoError {
    /// Nothing ran: missing fixtures, unreadable files, bad store.
    #[error("setup: {0}")]
    Setup(String),
    /// A step ran and an invariant or expectation did not hold.
    #[error("step {step} ({action}): {message}")]
    Failed {
        step: usize,
        action: &'static str,
        message: String,
    },
}

/// What a completed run produced; printed as the last transcript line.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct DemoSummary {
    pub scenario: String,
    pub steps: usize,
    pub scanned: usize,
    pub manual_edits: usize,
    pub offered: Vec<String>,
    pub discarded: Vec<String>,
    pub selected: Option<String>,
    pub chat_exchanges: usize,
    pub verdicts: Vec<String>,
    pub shopping_list: Vec<String>,
}

struct Runner<'a> {
    app: Router,
    clock: Arc<ManualClock>,
    fixtures: &'a Path,
    staples: BTreeSet<String>,
    allergies: Vec<String>,
    out: &'a mut dyn Write,
    step: usize,
    action: &'static str,
    session: String,
    latest: Vec<Recipe>,
    selected: Option<Recipe>,
    summary: DemoSummary,
}

type StepResult<T> = Result<T, String>;

fn ensure(cond: bool, message: impl FnOnce() -> String) -> StepResult<()> {
    if cond {
        Ok(())
    } else {
        Err(message())
    }
}

/// Hides image payloads so transcripts stay readable.
fn redact(mut v: Value) -> Value {
    match &mut v {
        Value::Object(map) => {
            for (k, val) in map.iter_mut() {
                if k == "image_base64" {
                    let len = val.as_str().map_or(0, str::len);
                    *val = Value::String(format!("<{len} base64 chars>"));
                } else {
                    *val = redact(val.take());
                }
            }
        }
        Value::Array(items) => items.iter_mut().for_each(|i| *i = redact(i.take())),
        _ => {}
    }
    v
}

impl Runner<'_> {
    fn say(&mut self, line: impl AsRef<str>) {
        // Transcript output is best effort; a closed pipe must not abort the run.
        let _ = writeln!(self.out, "{}", line.as_ref());
    }

    async fn call<T: DeserializeOwned>(&mut self, method: Method, uri: &str, body: Option<Value>) -> StepResult<T> {
        self.say(format!("> {method} {uri}"));
        let mut req = Request::builder().method(method).uri(uri);
        let body = match body {
            Some(v) => {
                self.say(serde_json::to_string(&redact(v.clone())).unwrap_or_default());
                req = req.header(header::CONTENT_TYPE, "application/json");
                Body::from(v.to_string())
            }
            None => Body::empty(),
        };
        let resp = self
            .app
            .clone()
            .oneshot(req.body(body).map_err(|e| e.to_string())?)
            .await
            .map_err(|e| e.to_string())?;
        let status = resp.status();
        let bytes = axum::body::to_bytes(resp.into_body(), usize::MAX)
            .await
            .map_err(|e| e.to_string())?;
        let value: Value = serde_json::from_slice(&bytes).map_err(|e| format!("response is not JSON: {e}"))?;
        self.say(format!("< {status}"));
        self.say(serde_json::to_string_pretty(&value).unwrap_or_default());
        ensure(status.is_success(), || format!("{status}: {}", value["error"]["message"]))?;
        serde_json::from_value(value).map_err(|e| format!("response does not match its schema: {e}"))
    }

    fn check(&mut self, what: impl AsRef<str>) {
        self.say(format!("  ok: {}", what.as_ref()));
    }

    fn image(&self, name: &str) -> StepResult<String> {
        let bytes = std::fs::read(self.fixtures.join("snapshots").join(name)).map_err(|e| format!("{name}: {e}"))?;
        Ok(base64::engine::general_purpose::STANDARD.encode(bytes))
    }

    async fn session_state(&mut self) -> StepResult<PantrySession> {
        let uri = format!("/sessions/{}", self.session);
        self.call(Method::GET, &uri, None).await
    }

    fn selected(&self) -> StepResult<&Recipe> {
        self.selected.as_ref().ok_or_else(|| "no recipe selected yet".to_string())
    }

    /// Independent re-check of the offer rules: every required ingredient is
    /// on hand or a staple, nutrition is complete, and no allergy term
    /// appears in the declared allergens or ingredient keys.
    fn offer_rule_violation(&self, recipe: &Recipe, pantry: &BTreeSet<String>) -> Option<String> {
        for item in &recipe.required {
            if !pantry.contains(&item.canonical_key) && !self.staples.contains(&item.canonical_key) {
                return Some(format!("{:?} needs {:?} which is not on hand", recipe.title, item.canonical_key));
            }
        }
        let n = &recipe.nutrition;
        if n.calories.is_none() || n.fat_g.is_none() || n.carbohydrates_g.is_none() || n.protein_g.is_none() {
            return Some(format!("{:?} has incomplete nutrition", recipe.title));
        }
        let terms = recipe
            .allergens
            .iter()
            .map(|a| a.to_lowercase())
            .chain(recipe.required.iter().map(|i| i.canonical_key.clone()));
        for term in terms {
            if let Some(a) = self.allergies.iter().find(|a| term.contains(a.as_str())) {
                return Some(format!("{:?} contains {a:?} ({term})", recipe.title));
            }
        }
        None
    }

    async fn run_step(&mut self, step: &Step) -> StepResult<()> {
        let sid = self.session.clone();
        match step {
            Step::Scan {
                snapshot,
                width_px,
                height_px,
                viewport,
                fixture,
                expect_labels,
            } => {
                let body = json!({
                    "image_base64": self.image(snapshot)?,
                    "width_px": width_px,
                    "height_px": height_px,
                    "viewport": viewport,
                    "fixture": fixture,
                });
                let scan: ScanResponse = self.call(Method::POST, &format!("/sessions/{sid}/scan"), Some(body)).await?;
                let (vw, vh) = (scan.viewport.width_px(), scan.viewport.height_px());
                for l in &scan.labels {
                    let r = &l.projection.rect_px;
                    ensure(r.x + r.w <= vw && r.y + r.h <= vh, || {
                        format!("{:?} projects outside the {vw}x{vh} viewport: {r:?}", l.label.name)
                    })?;
                }
                self.check(format!("{} labels inside {vw}x{vh}", scan.labels.len()));
                if let Some(n) = expect_labels {
                    ensure(scan.labels.len() == *n, || format!("expected {n} labels, got {}", scan.labels.len()))?;
                }
                self.summary.scanned += scan.labels.len();
            }
            Step::AddIngredient { name } => {
                let body = json!({ "action": "add", "name": name });
                let r: PantryResponse = self.call(Method::POST, &format!("/sessions/{sid}/pantry"), Some(body)).await?;
                let key = canonicalize(name).map_err(|e| e.to_string())?;
                ensure(r.pantry.contains_key(&key), || format!("{key:?} missing after add"))?;
                self.check(format!("{key:?} in pantry"));
                self.summary.manual_edits += 1;
            }
            Step::RemoveIngredient { canonical_key } => {
                let body = json!({ "action": "remove", "canonical_key": canonical_key });
                let r: PantryResponse = self.call(Method::POST, &format!("/sessions/{sid}/pantry"), Some(body)).await?;
                ensure(!r.pantry.contains_key(canonical_key), || format!("{canonical_key:?} still present"))?;
                self.check(format!("{canonical_key:?} removed"));
                self.summary.manual_edits += 1;
            }
            Step::Generate {
                count,
                fixture,
                expect_offered,
                expect_discarded,
            } => {
                let body = json!({ "count": count, "fixture": fixture });
                let r: RecipesResponse = self.call(Method::POST, &format!("/sessions/{sid}/recipes"), Some(body)).await?;
                let session = self.session_state().await?;
                let pantry: BTreeSet<String> = session.ingredients.keys().map(str::to_string).collect();
                for report in &r.recipes {
                    let recipe = &report.recipe;
                    ensure(report.validation.ok && report.allergens.hits.is_empty(), || {
                        format!("{:?} offered despite failing checks", recipe.title)
                    })?;
                    if let Some(v) = self.offer_rule_violation(recipe, &pantry) {
                        return Err(format!("offered recipe breaks a rule: {v}"));
                    }
                }
                // The whole session, not just this batch, must stay clean.
                for recipe in &session.offered_recipes {
                    if let Some(v) = self.offer_rule_violation(recipe, &pantry) {
                        return Err(format!("session offers a recipe that breaks a rule: {v}"));
                    }
                }
                self.check(format!(
                    "{} offered, all within pantry + staples, nutrition complete, allergen free",
                    r.recipes.len()
                ));
                let discarded: BTreeSet<&str> = r.rejected.iter().map(|x| x.recipe.title.as_str()).collect();
                for title in &discarded {
                    ensure(session.offered_recipes.iter().all(|o| o.title != *title), || {
                        format!("discarded {title:?} reached the session")
                    })?;
                    self.check(format!("discarded {title:?}"));
                }
                if let Some(n) = expect_offered {
                    ensure(r.recipes.len() == *n, || format!("expected {n} recipes, got {}", r.recipes.len()))?;
                }
                let want: BTreeSet<&str> = expect_discarded.iter().map(String::as_str).collect();
                ensure(want == discarded, || format!("expected discarded {want:?}, got {discarded:?}"))?;
                self.latest = r.recipes.into_iter().map(|x| x.recipe).collect();
                self.summary.offered.extend(self.latest.iter().map(|x| x.title.clone()));
                self.summary.discarded.extend(discarded.into_iter().map(str::to_string));
            }
            Step::Select { recipe } => {
                let chosen = recipe
                    .checked_sub(1)
                    .and_then(|i| self.latest.get(i))
                    .ok_or_else(|| format!("no recipe #{recipe} in the latest batch of {}", self.latest.len()))?
                    .clone();
                let uri = format!("/sessions/{sid}/recipes/{}/select", chosen.id);
                let r: SelectResponse = self.call(Method::POST, &uri, None).await?;
                ensure(r.selected_recipe.id == chosen.id, || "server selected a different recipe".into())?;
                self.check(format!("selected {:?}", chosen.title));
                self.summary.selected = Some(chosen.title.clone());
                self.selected = Some(chosen);
            }
            Step::Rate { stars } => {
                let id = self.selected()?.id.clone();
                let uri = format!("/sessions/{sid}/recipes/{id}/rate");
                let r: Recipe = self.call(Method::POST, &uri, Some(json!({ "stars": stars }))).await?;
                ensure(r.rating.map(|s| i64::from(s.get())) == Some(*stars), || "rating not stored".into())?;
                self.check(format!("rated {stars}/5"));
            }
            Step::Chat {
                text,
                modality,
                fixture,
            } => {
                let body = json!({ "text": text, "modality": modality, "fixture": fixture });
                let turn: ChatTurn = self.call(Method::POST, &format!("/sessions/{sid}/chat"), Some(body)).await?;
                ensure(turn.role == Role::Assistant && !turn.content.trim().is_empty(), || {
                    "empty assistant reply".into()
                })?;
                self.check("assistant replied");
                self.summary.chat_exchanges += 1;
            }
            Step::StepCheck {
                step_index,
                snapshot,
                width_px,
                height_px,
                fixture,
                expect_verdict,
            } => {
                let id = self.selected()?.id.clone();
                let body = json!({
                    "recipe_id": id,
                    "step_index": step_index,
                    "fixture": fixture,
                    "snapshot": { "image_base64": self.image(snapshot)?, "width_px": width_px, "height_px": height_px },
                });
                let fb: StepFeedback = self.call(Method::POST, &format!("/sessions/{sid}/step-check"), Some(body)).await?;
                let verdict = serde_json::to_value(fb.verdict).map_err(|e| e.to_string())?;
                let verdict = verdict.as_str().unwrap_or_default().to_string();
                if let Some(want) = expect_verdict {
                    ensure(fb.verdict == *want, || format!("expected verdict {want:?}, got {verdict}"))?;
                }
                self.check(format!("verdict {verdict}"));
                self.summary.verdicts.push(verdict);
            }
            Step::ShoppingList { expect_items } => {
                let recipe = self.selected()?.clone();
                let uri = format!("/sessions/{sid}/recipes/{}/shopping-list", recipe.id);
                let r: ShoppingListResponse = self.call(Method::POST, &uri, None).await?;
                let got: Vec<String> = r.items.iter().map(|i| i.canonical_key.clone()).collect();
                // Oracle: required keys, in recipe order, minus what the pantry holds.
                let session = self.session_state().await?;
                let mut want = Vec::new();
                for item in &recipe.required {
                    if !session.ingredients.contains_key(&item.canonical_key) && !want.contains(&item.canonical_key) {
                        want.push(item.canonical_key.clone());
                    }
                }
                ensure(got == want, || format!("shopping list {got:?} is not required minus pantry {want:?}"))?;
                if let Some(expected) = expect_items {
                    let expected = expected
                        .iter()
                        .map(|n| canonicalize(n).map_err(|e| e.to_string()))
                        .collect::<Result<Vec<_>, _>>()?;
                    ensure(got == expected, || format!("expected {expected:?}, got {got:?}"))?;
                }
                self.check(format!("need to buy: {}", if got.is_empty() { "nothing".into() } else { got.join(", ") }));
                self.summary.shopping_list = got;
            }
        }
        Ok(())
    }
}

/// Runs every step in order, stopping at the first failed check.
pub async fn run_demo(scenario: &Scenario, fixtures: &Path, out: &mut dyn Write) -> Result<DemoSummary, DemoError> {
    let missing: Vec<String> = scenario
        .required_files(fixtures)
        .into_iter()
        .filter(|p| !p.is_file())
        .map(|p| p.display().to_string())
        .collect();
    if !missing.is_empty() {
        return Err(DemoError::Setup(format!("missing fixture files: {}", missing.join(", "))));
    }
    let mock = MockProvider::from_dir(fixtures).map_err(|e| DemoError::Setup(format!("{}: {e}", fixtures.display())))?;
    let staples = StaplesPolicy::new(scenario.staples.iter().map(String::as_str));
    let settings = Settings {
        staples: staples.clone(),
        ..Settings::default()
    };
    let store = tempfile::tempdir().map_err(|e| DemoError::Setup(e.to_string()))?;
    let clock = Arc::new(ManualClock::new(
        DateTime::from_timestamp(1_767_225_600, 0).expect("valid timestamp"),
    ));
    let (state, _) = AppState::builder(Gateway::new(mock))
        .settings(settings)
        .clock(clock.clone())
        .id_style(IdStyle::Sequential)
        .open(store.path().join("demo.jsonl"))
        .map_err(|e| DemoError::Setup(e.to_string()))?;

    let mut runner = Runner {
        app: router(state),
        clock,
        fixtures,
        staples: staples.keys().map(str::to_string).collect(),
        allergies: scenario
            .profile
            .allergies
            .iter()
            .map(|a| a.trim().to_lowercase())
            .filter(|a| !a.is_empty())
            .collect(),
        out,
        step: 0,
        action: "setup",
        session: String::new(),
        latest: Vec::new(),
        selected: None,
        summary: DemoSummary {
            scenario: scenario.name.clone(),
            ..DemoSummary::default()
        },
    };
    runner.say(format!("# scenario {}", scenario.name));
    if !scenario.description.is_empty() {
        runner.say(format!("# {}", scenario.description));
    }

    let fail = |r: &Runner, message: String| DemoError::Failed {
        step: r.step,
        action: r.action,
        message,
    };
    let profile_body = serde_json::to_value(&scenario.profile).map_err(|e| DemoError::Setup(e.to_string()))?;
    let profile: ProfileView = match runner.call(Method::POST, "/profiles", Some(profile_body)).await {
        Ok(p) => p,
        Err(m) => return Err(fail(&runner, m)),
    };
    let session: PantrySession = match runner
        .call(Method::POST, "/sessions", Some(json!({ "profile_id": profile.id })))
        .await
    {
        Ok(s) => s,
        Err(m) => return Err(fail(&runner, m)),
    };
    runner.session = session.id.to_string();

    for (i, step) in scenario.steps.iter().enumerate() {
        runner.step = i + 1;
        runner.action = step.name();
        runner.say(format!("\n## step {}: {}", runner.step, runner.action));
        runner.clock.advance(chrono::Duration::seconds(30));
        if let Err(m) = runner.run_step(step).await {
            return Err(fail(&runner, m));
        }
        runner.summary.steps += 1;
    }
    Ok(runner.summary)
}
