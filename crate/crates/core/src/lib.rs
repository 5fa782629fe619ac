//! Orchestration core for an AR cooking assistant: ingredient detection
//! from camera snapshots, pantry-constrained recipe generation, step
//! checks, a sous-chef chat assistant and localization.
//!
//! All model access goes through [`llm::Gateway`]; tests and demos use the
//! fixture-backed [`llm::MockProvider`].

pub mod assistant;
pub mod i18n;
pub mod llm;
pub mod model;
pub mod perception;
pub mod recipes;

pub use i18n::{LanguageTag, TextDirection};
pub use llm::{Gateway, LlmError, LlmProvider, LlmRequest, LlmResponse, MockProvider, TemplateId};
pub use model::*;
