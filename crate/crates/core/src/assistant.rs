//! The sous-chef chat assistant. Typed messages and voice transcripts take
//! the same path; only the recorded modality differs.

use std::fmt::Write as _;

use chrono::{DateTime, Utc};
use thiserror::Error;

use crate::llm::template::{render_prompt, PromptContext, TemplateId};
use crate::llm::{Gateway, LlmError, LlmRequest};
use crate::model::{ChatTurn, Modality, PantrySession, Role, UserProfile};
use crate::recipes::describe_recipe;

pub const DEFAULT_HISTORY_BUDGET: usize = 20;

#[derive(Debug, Error)]
pub enum AssistantError {
    #[error("message is blank")]
    InvalidInput,
    #[error("the model returned an empty reply")]
    EmptyReply,
    #[error(transparent)]
    Llm(#[from] LlmError),
}

/// Persona plus everything the assistant should know about this session.
/// Pure in `(session, profile)`.
pub fn build_system_instruction(session: &PantrySession, profile: &UserProfile) -> String {
    let mut text = String::from(
        "You are an experienced sous chef working alongside a home cook in their kitchen. \
         Give practical cooking advice, suggest dishes, and answer any food question briefly \
         and concretely.\n\n",
    );

    if session.ingredients.is_empty() {
        text.push_str("No ingredients scanned yet.\n");
    } else {
        let keys: Vec<_> = session.ingredients.keys().collect();
        let _ = writeln!(text, "Ingredients on hand: {}.", keys.join(", "));
    }

    if !session.offered_recipes.is_empty() {
        let titles: Vec<_> = session.offered_recipes.iter().map(|r| r.title.as_str()).collect();
        let _ = writeln!(text, "Recipes suggested so far: {}.", titles.join("; "));
    }

    if let Some(recipe) = session.selected() {
        let _ = write!(text, "\nThe cook is making:\n{}", describe_recipe(recipe));
    }

    let list = |items: &[String]| {
        if items.is_empty() {
            "none".to_string()
        } else {
            items.join(", ")
        }
    };
    let _ = write!(
        text,
        "\nDietary restrictions: {}. Allergies: {}. Favorite cuisines: {}. Cooking level: {} of 5.\n",
        list(&profile.dietary_restrictions),
        list(&profile.allergies),
        list(&profile.favorite_cuisines),
        profile.cooking_level,
    );
    let _ = write!(text, "Always answer in {}.", profile.language.prompt_label());
    text
}

/// Longest suffix of at most `budget` turns that begins with a user turn,
/// so a user message is never separated from its reply. Budgets below 2
/// are treated as 2.
pub fn truncate_history(history: &[ChatTurn], budget: usize) -> &[ChatTurn] {
    let budget = budget.max(2);
    let mut start = history.len().saturating_sub(budget);
    while start < history.len() && history[start].role != Role::User {
        start += 1;
    }
    &history[start..]
}

fn render_history(turns: &[ChatTurn]) -> String {
    let mut out = String::new();
    for turn in turns.iter().filter(|t| !t.unanswered) {
        let who = match turn.role {
            Role::User => "Cook",
            Role::Assistant => "Sous chef",
        };
        let _ = writeln!(out, "{who}: {}", turn.content);
    }
    if out.is_empty() {
        out.push_str("(none)");
    }
    out
}

/// Appends the user turn and the reply to the session history. On failure
/// the user turn stays, flagged `unanswered`.
pub async fn ask(
    gateway: &Gateway,
    session: &mut PantrySession,
    profile: &UserProfile,
    user_text: &str,
    modality: Modality,
    history_budget: usize,
    now: DateTime<Utc>,
) -> Result<ChatTurn, AssistantError> {
    let message = user_text.trim();
    if message.is_empty() {
        return Err(AssistantError::InvalidInput);
    }

    let prompt = render_prompt(
        TemplateId::AssistantChat,
        &PromptContext::new()
            .with("history", render_history(truncate_history(&session.chat_history, history_budget)))
            .with("message", message),
    )
    .expect("chat template placeholders are all supplied");
    let request = LlmRequest::new(TemplateId::AssistantChat, prompt, profile.language)
        .with_system_instruction(build_system_instruction(session, profile));

    session.chat_history.push(ChatTurn {
        role: Role::User,
        modality,
        content: message.to_string(),
        timestamp: now,
        unanswered: false,
    });

    let reply = match gateway.complete(request).await {
        Ok(resp) if !resp.raw_text.trim().is_empty() => resp.raw_text.trim().to_string(),
        Ok(_) => return Err(mark_unanswered(session, AssistantError::EmptyReply)),
        Err(e) => return Err(mark_unanswered(session, e.into())),
    };
    let turn = ChatTurn {
        role: Role::Assistant,
        modality,
        content: reply,
        timestamp: now,
        unanswered: false,
    };
    session.chat_history.push(turn.clone());
    Ok(turn)
}

fn mark_unanswered(session: &mut PantrySession, err: AssistantError) -> AssistantError {
    if let Some(last) = session.chat_history.last_mut() {
        last.unanswered = true;
    }
    err
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::i18n::LanguageTag;
    use crate::llm::MockProvider;
    use crate::model::{Ingredient, IngredientSource, NutritionFacts, Recipe, RequiredIngredient};

    fn turn(role: Role) -> ChatTurn {
        ChatTurn {
            role,
            modality: Modality::Text,
            content: format!("{role:?}"),
            timestamp: DateTime::UNIX_EPOCH,
            unanswered: false,
        }
    }

    fn alternating(n: usize) -> Vec<ChatTurn> {
        (0..n)
            .map(|i| turn(if i % 2 == 0 { Role::User } else { Role::Assistant }))
            .collect()
    }

    fn session() -> PantrySession {
        PantrySession::new("s1".into(), "p1".into(), DateTime::UNIX_EPOCH)
    }

    fn recipe(id: &str, title: &str, steps: &[&str]) -> Recipe {
        Recipe {
            id: id.into(),
            title: title.into(),
            cuisine: "any".into(),
            servings: 2,
            required: vec![RequiredIngredient {
                canonical_key: "egg".into(),
                display_name: "egg".into(),
                amount: "2".into(),
            }],
            steps: steps.iter().map(|s| s.to_string()).collect(),
            nutrition: NutritionFacts::default(),
            allergens: vec![],
            rating: None,
        }
    }

    #[test]
    fn empty_context() {
        let text = build_system_instruction(&session(), &UserProfile::default());
        assert!(text.starts_with("You are an experienced sous chef"));
        assert!(text.contains("No ingredients scanned yet."));
        assert!(text.ends_with("Always answer in English (en)."));
    }

    #[test]
    fn full_context() {
        let mut s = session();
        for name in ["tomato", "egg", "onion"] {
            s.ingredients
                .insert(Ingredient::new(name, IngredientSource::Manual, DateTime::UNIX_EPOCH).unwrap());
        }
        s.offered_recipes.push(recipe("r1", "Shakshuka", &["Dice the onion.", "Crack the eggs."]));
        s.offered_recipes.push(recipe("r2", "Tomato omelette", &["Whisk."]));
        s.select(&"r1".into());
        let profile = UserProfile {
            language: LanguageTag::Fa,
            ..Default::default()
        };
        let text = build_system_instruction(&s, &profile);
        for needle in ["tomato", "egg", "onion", "Shakshuka", "Tomato omelette", "Dice the onion.", "Crack the eggs."] {
            assert!(text.contains(needle), "missing {needle}");
        }
        assert!(!text.contains("No ingredients scanned yet."));
        assert!(text.ends_with("Always answer in Persian (fa)."));
        assert_eq!(text, build_system_instruction(&s, &profile));
    }

    #[test]
    fn truncation_examples() {
        let h = alternating(10);
        let kept = truncate_history(&h, 4);
        assert_eq!(kept.len(), 4);
        assert_eq!(kept[0].role, Role::User);

        let h = alternating(3);
        assert_eq!(truncate_history(&h, 10).len(), 3);
    }

    #[test]
    fn truncation_never_starts_at_assistant() {
        let mut h = alternating(5);
        h.push(turn(Role::Assistant));
        // u a u a u a, budget 3: naive suffix starts at an assistant turn
        let kept = truncate_history(&h, 3);
        assert_eq!(kept.len(), 2);
        assert_eq!(kept[0].role, Role::User);
    }

    #[test]
    fn truncation_exhaustive_small() {
        for n in 0..9usize {
            for mask in 0..(1u32 << n) {
                let h: Vec<_> = (0..n)
                    .map(|i| turn(if mask >> i & 1 == 0 { Role::User } else { Role::Assistant }))
                    .collect();
                for budget in 0..11 {
                    let kept = truncate_history(&h, budget);
                    let b = budget.max(2);
                    assert!(kept.len() <= b);
                    assert!(kept.is_empty() || kept[0].role == Role::User);
                    let start = h.len() - kept.len();
                    // maximal: no longer admissible suffix exists
                    let lo = h.len().saturating_sub(b);
                    assert!(!(lo..start).any(|i| h[i].role == Role::User));
                }
            }
        }
    }

    #[tokio::test]
    async fn text_and_voice_match() {
        let mock = MockProvider::new().with_fixture(TemplateId::AssistantChat, "suggest_reply", "Try an omelette.");
        let gateway = Gateway::new(mock).with_fixture("suggest_reply");
        let profile = UserProfile::default();
        let mut a = session();
        let mut b = session();
        let t = ask(&gateway, &mut a, &profile, "What can I make?", Modality::Text, 20, DateTime::UNIX_EPOCH)
            .await
            .unwrap();
        let v = ask(&gateway, &mut b, &profile, "What can I make?", Modality::VoiceTranscript, 20, DateTime::UNIX_EPOCH)
            .await
            .unwrap();
        assert_eq!(t.content, v.content);
        assert_eq!(v.modality, Modality::VoiceTranscript);
        assert_eq!(a.chat_history.len(), 2);
        assert_eq!(b.chat_history[0].modality, Modality::VoiceTranscript);
    }

    #[tokio::test]
    async fn blank_and_failure() {
        let gateway = Gateway::new(MockProvider::new());
        let profile = UserProfile::default();
        let mut s = session();
        assert!(matches!(
            ask(&gateway, &mut s, &profile, "  ", Modality::Text, 20, DateTime::UNIX_EPOCH).await,
            Err(AssistantError::InvalidInput)
        ));
        assert!(s.chat_history.is_empty());
        assert!(matches!(
            ask(&gateway, &mut s, &profile, "hello", Modality::Text, 20, DateTime::UNIX_EPOCH).await,
            Err(AssistantError::Llm(_))
        ));
        assert_eq!(s.chat_history.len(), 1);
        assert!(s.chat_history[0].unanswered);
    }
}
