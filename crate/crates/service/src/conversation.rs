use std::collections::BTreeMap;

use chrono::{DateTime, Utc};
use educhat_core::backend::{Message, Role};
use educhat_core::prompt::{FunctionScene, ToolOverrides};
use educhat_core::retrieval::{ProviderError, Snippet, Verdict};
use educhat_core::skills::{CounselingStage, EssayError, EssayFeedback, LintWarning};
use educhat_core::Locale;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Conversation {
    pub id: String,
    pub scene: FunctionScene,
    #[serde(default)]
    pub overrides: Option<ToolOverrides>,
    pub locale: Locale,
    /// Append-only, in append order.
    pub messages: Vec<Message>,
    /// Snippets injected for each assistant message, keyed by its id.
    pub snippets_by_message: BTreeMap<String, Vec<Snippet>>,
    /// Validator output for each assistant message, keyed by its id.
    #[serde(default)]
    pub annotations_by_message: BTreeMap<String, Annotations>,
    pub created_at: DateTime<Utc>,
}

impl Conversation {
    pub fn new(scene: FunctionScene, overrides: Option<ToolOverrides>, locale: Locale, created_at: DateTime<Utc>) -> Self {
        Self {
            id: uuid::Uuid::new_v4().to_string(),
            scene,
            overrides: overrides.filter(|o| !o.is_empty()),
            locale,
            messages: Vec::new(),
            snippets_by_message: BTreeMap::new(),
            annotations_by_message: BTreeMap::new(),
            created_at,
        }
    }

    /// Checks `turn` against the append-only invariants without applying it.
    pub fn check(&self, turn: &Turn) -> Result<(), AppendError> {
        let m = &turn.message;
        if self.messages.iter().any(|old| old.id == m.id) {
            return Err(AppendError::DuplicateMessageId(m.id.clone()));
        }
        match m.role {
            Role::User => {
                if !turn.snippets.is_empty() || turn.annotations.is_some() {
                    return Err(AppendError::UserTurnWithAnnotations);
                }
            }
            Role::Assistant => {
                if self.messages.last().map(|last| last.role) != Some(Role::User) {
                    return Err(AppendError::AssistantWithoutUser);
                }
            }
            role => return Err(AppendError::BadRole(role)),
        }
        if turn.snippets.iter().any(|s| s.verdict == Some(Verdict::NotHelpful)) {
            return Err(AppendError::UnhelpfulSnippet);
        }
        Ok(())
    }

    pub fn apply(&mut self, turn: Turn) -> Result<(), AppendError> {
        self.check(&turn)?;
        let Turn {
            message,
            snippets,
            annotations,
        } = turn;
        if message.role == Role::Assistant {
            self.snippets_by_message.insert(message.id.clone(), snippets);
            if let Some(a) = annotations {
                self.annotations_by_message.insert(message.id.clone(), a);
            }
        }
        self.messages.push(message);
        Ok(())
    }

    pub fn summary(&self) -> ConversationSummary {
        let title = self
            .messages
            .iter()
            .find(|m| m.role == Role::User)
            .map(|m| m.content.chars().take(TITLE_CHARS).collect());
        ConversationSummary {
            id: self.id.clone(),
            scene: self.scene,
            created_at: self.created_at,
            message_count: self.messages.len(),
            title,
        }
    }
}

const TITLE_CHARS: usize = 60;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConversationSummary {
    pub id: String,
    pub scene: FunctionScene,
    pub created_at: DateTime<Utc>,
    pub message_count: usize,
    /// Start of the first user message.
    pub title: Option<String>,
}

/// One message to append, with what was stored alongside it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Turn {
    pub message: Message,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub snippets: Vec<Snippet>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub annotations: Option<Annotations>,
}

impl Turn {
    pub fn user(message: Message) -> Self {
        Self {
            message,
            snippets: Vec::new(),
            annotations: None,
        }
    }

    pub fn assistant(message: Message, snippets: Vec<Snippet>, annotations: Annotations) -> Self {
        Self {
            message,
            snippets,
            annotations: Some(annotations),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum AppendError {
    #[error("message id {0} already exists")]
    DuplicateMessageId(String),
    #[error("an assistant message must follow a user message")]
    AssistantWithoutUser,
    #[error("only user and assistant messages are stored, got {0}")]
    BadRole(Role),
    #[error("user messages carry no snippets or annotations")]
    UserTurnWithAnnotations,
    #[error("snippets judged not helpful are never stored")]
    UnhelpfulSnippet,
}

/// What the service observed while producing one assistant message.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Annotations {
    /// Retrieval was enabled for the turn.
    #[serde(default)]
    pub retrieval: bool,
    /// Retrieval was enabled but the provider failed; answered without it.
    #[serde(default)]
    pub degraded: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub provider_error: Option<ProviderError>,
    /// Oldest history messages left out to fit the character budget.
    #[serde(default, skip_serializing_if = "is_zero")]
    pub history_dropped: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub essay: Option<EssayCheck>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub socratic_lint: Vec<LintWarning>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub counseling_stage: Option<CounselingStage>,
}

fn is_zero(n: &usize) -> bool {
    *n == 0
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EssayCheck {
    Feedback(EssayFeedback),
    Error(EssayError),
}
