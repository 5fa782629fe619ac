//! Scripted demo scenarios: a profile, a staples policy and a list of steps
//! replayed against an in-process service with the mock provider.

use std::path::{Path, PathBuf};

use serde::Deserialize;
use souschef_core::llm::mock::fixture_path;
use souschef_core::perception::Viewport;
use souschef_core::{Modality, TemplateId, UserProfile, Verdict};

/// Scenarios shipped with the binary, addressable by name.
pub const BUNDLED: &[(&str, &str)] = &[
    ("golden_path", include_str!("../scenarios/golden_path.toml")),
    ("allergen_block", include_str!("../scenarios/allergen_block.toml")),
    ("pantry_violation", include_str!("../scenarios/pantry_violation.toml")),
];

#[derive(Debug, thiserror::Error)]
pub enum ScenarioError {
    #[error("cannot read scenario {path}: {source}")]
    Read { path: PathBuf, source: std::io::Error },
    #[error("invalid scenario {origin}: {message}")]
    Parse { origin: String, message: String },
    #[error("no scenario file or bundled scenario named {0:?} (bundled: {1})")]
    Unknown(String, String),
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    #[serde(default)]
    pub description: String,
    #[serde(default)]
    pub staples: Vec<String>,
    #[serde(default)]
    pub profile: UserProfile,
    pub steps: Vec<Step>,
}

fn three() -> usize {
    3
}

fn text() -> Modality {
    Modality::Text
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "action", rename_all = "snake_case", deny_unknown_fields)]
pub enum Step {
    Scan {
        /// File name under `<fixtures>/snapshots`.
        snapshot: String,
        width_px: u32,
        height_px: u32,
        #[serde(default)]
        viewport: Option<Viewport>,
        fixture: String,
        #[serde(default)]
        expect_labels: Option<usize>,
    },
    AddIngredient {
        name: String,
    },
    RemoveIngredient {
        canonical_key: String,
    },
    Generate {
        #[serde(default = "three")]
        count: usize,
        fixture: String,
        #[serde(default)]
        expect_offered: Option<usize>,
        /// Titles that must be discarded, in any order.
        #[serde(default)]
        expect_discarded: Vec<String>,
    },
    /// Picks the n-th (1-based) recipe of the latest generation.
    Select {
        recipe: usize,
    },
    Rate {
        stars: i64,
    },
    Chat {
        text: String,
        #[serde(default = "text")]
        modality: Modality,
        fixture: String,
    },
    StepCheck {
        step_index: usize,
        snapshot: String,
        width_px: u32,
        height_px: u32,
        fixture: String,
        #[serde(default)]
        expect_verdict: Option<Verdict>,
    },
    ShoppingList {
        #[serde(default)]
        expect_items: Option<Vec<String>>,
    },
}

impl Step {
    pub fn name(&self) -> &'static str {
        match self {
            Step::Scan { .. } => "scan",
            Step::AddIngredient { .. } => "add ingredient",
            Step::RemoveIngredient { .. } => "remove ingredient",
            Step::Generate { .. } => "generate",
            Step::Select { .. } => "select",
            Step::Rate { .. } => "rate",
            Step::Chat { .. } => "chat",
            Step::StepCheck { .. } => "step check",
            Step::ShoppingList { .. } => "shopping list",
        }
    }

    fn fixture(&self) -> Option<(TemplateId, &str)> {
        match self {
            Step::Scan { fixture, .. } => Some((TemplateId::DetectIngredients, fixture)),
            Step::Generate { fixture, .. } => Some((TemplateId::GenerateRecipes, fixture)),
            Step::Chat { fixture, .. } => Some((TemplateId::AssistantChat, fixture)),
            Step::StepCheck { fixture, .. } => Some((TemplateId::StepFeedback, fixture)),
            _ => None,
        }
    }

    fn snapshot(&self) -> Option<&str> {
        match self {
            Step::Scan { snapshot, .. } | Step::StepCheck { snapshot, .. } => Some(snapshot),
            _ => None,
        }
    }
}

impl Scenario {
    pub fn parse(text: &str, origin: &str) -> Result<Self, ScenarioError> {
        toml::from_str(text).map_err(|e| ScenarioError::Parse {
            origin: origin.to_string(),
            message: e.to_string(),
        })
    }

    /// A file path if one exists, otherwise a bundled scenario name.
    pub fn load(arg: &str) -> Result<Self, ScenarioError> {
        let path = Path::new(arg);
        if path.is_file() {
            let text = std::fs::read_to_string(path).map_err(|source| ScenarioError::Read {
                path: path.to_path_buf(),
                source,
            })?;
            return Self::parse(&text, arg);
        }
        let name = path.file_stem().and_then(|s| s.to_str()).unwrap_or(arg);
        match BUNDLED.iter().find(|(n, _)| *n == name) {
            Some((n, text)) => Self::parse(text, n),
            None => Err(ScenarioError::Unknown(
                arg.to_string(),
                BUNDLED.iter().map(|(n, _)| *n).collect::<Vec<_>>().join(", "),
            )),
        }
    }

    /// Every fixture and snapshot file the steps reference.
    pub fn required_files(&self, fixtures: &Path) -> Vec<PathBuf> {
        let mut files = Vec::new();
        for step in &self.steps {
            if let Some((template, tag)) = step.fixture() {
                files.push(fixture_path(fixtures, template, tag));
            }
            if let Some(name) = step.snapshot() {
                files.push(fixtures.join("snapshots").join(name));
            }
        }
        files.dedup();
        files
    }
}
