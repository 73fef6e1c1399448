//! Conversation lifecycle and the per-message pipeline.

use std::collections::HashMap;
use std::sync::Arc;

use chrono::{DateTime, Utc};
use educhat_core::backend::{BackendError, ChatBackend, GenerationParams, GenerationRequest, Message};
use educhat_core::prompt::{FunctionScene, OverrideError, PromptComposer, SystemPromptSpec, ToolOverrides};
use educhat_core::retrieval::{inject, retrieve, ProviderError, RetrievalConfig, SearchProvider, SelfChecker, Snippet};
use educhat_core::skills::{
    build_essay_request, parse_essay_feedback, socratic_turn_lint, tag_counseling_stage, EssayError, EssaySchema,
};
use educhat_core::Locale;
use futures::StreamExt;
use serde::{Deserialize, Serialize};
use tokio::sync::mpsc;
use tracing::{info, warn};

use crate::config::DEFAULT_HISTORY_CHAR_BUDGET;
use crate::conversation::{Annotations, Conversation, ConversationSummary, EssayCheck, Turn};
use crate::interactions::InteractionLog;
use crate::store::{ConversationStore, StoreError};

#[derive(Debug, thiserror::Error)]
pub enum ChatError {
    #[error("conversation {0} not found")]
    NotFound(String),
    #[error("message text must be non-empty")]
    EmptyText,
    #[error(transparent)]
    IllegalOverride(#[from] OverrideError),
    #[error("essay rejected: {0}")]
    Essay(EssayError),
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error("storage failure: {0}")]
    Store(StoreError),
}

impl From<StoreError> for ChatError {
    fn from(e: StoreError) -> Self {
        match e {
            StoreError::NotFound(id) => ChatError::NotFound(id),
            other => ChatError::Store(other),
        }
    }
}

impl ChatError {
    pub fn code(&self) -> &'static str {
        match self {
            ChatError::NotFound(_) => "not_found",
            ChatError::EmptyText => "empty_text",
            ChatError::IllegalOverride(_) => "illegal_override",
            ChatError::Essay(_) => "invalid_essay",
            ChatError::Backend(BackendError::Timeout { .. }) => "backend_timeout",
            ChatError::Backend(e) if e.is_retriable() => "backend_unavailable",
            ChatError::Backend(_) => "backend_error",
            ChatError::Store(_) => "storage_error",
        }
    }

    /// The same request may succeed later.
    pub fn is_retriable(&self) -> bool {
        matches!(self, ChatError::Backend(e) if e.is_retriable())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Settings {
    pub locale: Locale,
    pub retrieval: RetrievalConfig,
    pub history_char_budget: usize,
    pub essay: EssaySchema,
    pub generation: GenerationParams,
}

impl Default for Settings {
    fn default() -> Self {
        Self {
            locale: Locale::En,
            retrieval: RetrievalConfig::default(),
            history_char_budget: DEFAULT_HISTORY_CHAR_BUDGET,
            essay: EssaySchema::default(),
            generation: GenerationParams::default(),
        }
    }
}

/// An assistant reply and everything reported with it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TurnOutcome {
    pub message: Message,
    pub annotations: TurnAnnotations,
}

/// Payload of the `annotations` event: snippets shown to the model plus the
/// validator and retrieval annotations.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TurnAnnotations {
    pub snippets: Vec<Snippet>,
    #[serde(flatten)]
    pub annotations: Annotations,
}

/// One event of a streamed turn. Deltas come first, in order, then either
/// `Annotations` and `Done`, or a single `Error`.
#[derive(Debug)]
pub enum TurnEvent {
    Delta(String),
    Annotations(TurnAnnotations),
    Done(Message),
    Error(ChatError),
}

pub struct ChatService {
    composer: PromptComposer,
    backend: Arc<dyn ChatBackend>,
    provider: Option<Arc<dyn SearchProvider>>,
    store: Arc<dyn ConversationStore>,
    settings: Settings,
    interactions: Option<InteractionLog>,
    locks: parking_lot::Mutex<HashMap<String, Arc<tokio::sync::Mutex<()>>>>,
    last_created: parking_lot::Mutex<DateTime<Utc>>,
}

impl ChatService {
    pub fn new(backend: Arc<dyn ChatBackend>, store: Arc<dyn ConversationStore>) -> Self {
        Self {
            composer: PromptComposer::default(),
            backend,
            provider: None,
            store,
            settings: Settings::default(),
            interactions: None,
            locks: parking_lot::Mutex::new(HashMap::new()),
            last_created: parking_lot::Mutex::new(DateTime::<Utc>::MIN_UTC),
        }
    }

    pub fn with_provider(mut self, provider: Arc<dyn SearchProvider>) -> Self {
        self.provider = Some(provider);
        self
    }

    pub fn with_composer(mut self, composer: PromptComposer) -> Self {
        self.composer = composer;
        self
    }

    pub fn with_settings(mut self, settings: Settings) -> Self {
        self.settings = settings;
        self
    }

    pub fn with_interaction_log(mut self, log: InteractionLog) -> Self {
        self.interactions = Some(log);
        self
    }

    pub fn settings(&self) -> &Settings {
        &self.settings
    }

    pub fn composer(&self) -> &PromptComposer {
        &self.composer
    }

    pub fn create_conversation(
        &self,
        scene: FunctionScene,
        overrides: Option<ToolOverrides>,
    ) -> Result<Conversation, ChatError> {
        let overrides = overrides.unwrap_or_default();
        self.composer.effective_spec(scene, self.settings.locale, &overrides)?;
        let conversation = Conversation::new(scene, Some(overrides), self.settings.locale, self.creation_time());
        self.store.create(&conversation)?;
        info!(id = %conversation.id, %scene, "conversation created");
        Ok(conversation)
    }

    /// Strictly increasing, so newest-first listing has no ties.
    fn creation_time(&self) -> DateTime<Utc> {
        let mut last = self.last_created.lock();
        let now = Utc::now().max(*last + chrono::Duration::microseconds(1));
        *last = now;
        now
    }

    pub fn get_conversation(&self, id: &str) -> Result<Conversation, ChatError> {
        Ok(self.store.get(id)?)
    }

    pub fn list_conversations(&self) -> Result<Vec<ConversationSummary>, ChatError> {
        Ok(self.store.list()?)
    }

    pub fn delete_conversation(&self, id: &str) -> Result<(), ChatError> {
        self.store.delete(id)?;
        self.locks.lock().remove(id);
        Ok(())
    }

    /// Scene defaults merged with the conversation's overrides.
    pub fn effective_spec(&self, conversation: &Conversation) -> Result<SystemPromptSpec, ChatError> {
        let overrides = conversation.overrides.unwrap_or_default();
        Ok(self
            .composer
            .effective_spec(conversation.scene, conversation.locale, &overrides)?)
    }

    pub async fn post_message(&self, id: &str, text: &str) -> Result<TurnOutcome, ChatError> {
        self.preflight(id, text)?;
        self.run_turn(id, text, None).await
    }

    /// Runs the turn on a task of its own and reports it as events. Errors
    /// found before anything is stored are returned directly. The turn runs
    /// to completion even if the receiver is dropped.
    pub fn post_message_stream(self: &Arc<Self>, id: &str, text: &str) -> Result<mpsc::Receiver<TurnEvent>, ChatError> {
        self.preflight(id, text)?;
        let (tx, rx) = mpsc::channel(64);
        let service = Arc::clone(self);
        let (id, text) = (id.to_string(), text.to_string());
        tokio::spawn(async move {
            match service.run_turn(&id, &text, Some(&tx)).await {
                Ok(outcome) => {
                    let _ = tx.send(TurnEvent::Annotations(outcome.annotations)).await;
                    let _ = tx.send(TurnEvent::Done(outcome.message)).await;
                }
                Err(e) => {
                    let _ = tx.send(TurnEvent::Error(e)).await;
                }
            }
        });
        Ok(rx)
    }

    fn preflight(&self, id: &str, text: &str) -> Result<(), ChatError> {
        if text.trim().is_empty() {
            return Err(ChatError::EmptyText);
        }
        let conversation = self.store.get(id)?;
        if conversation.scene == FunctionScene::EssayAssessment {
            build_essay_request(text, conversation.locale, &self.composer, &self.settings.essay)
                .map_err(ChatError::Essay)?;
        }
        Ok(())
    }

    fn lock_for(&self, id: &str) -> Arc<tokio::sync::Mutex<()>> {
        Arc::clone(self.locks.lock().entry(id.to_string()).or_default())
    }

    async fn run_turn(&self, id: &str, text: &str, deltas: Option<&mpsc::Sender<TurnEvent>>) -> Result<TurnOutcome, ChatError> {
        if text.trim().is_empty() {
            return Err(ChatError::EmptyText);
        }
        let lock = self.lock_for(id);
        let _guard = lock.lock().await;

        let conversation = self.store.get(id)?;
        let spec = self.effective_spec(&conversation)?;
        let locale = conversation.locale;
        let templates = self.composer.templates();
        let essay = match conversation.scene {
            FunctionScene::EssayAssessment => Some(
                build_essay_request(text, locale, &self.composer, &self.settings.essay).map_err(ChatError::Essay)?,
            ),
            _ => None,
        };

        let user = Message::user(text);
        self.store.append(id, Turn::user(user.clone()))?;

        let system_prompt = self
            .composer
            .compose(&spec)
            .expect("profile text comes from validated templates");

        let mut history = conversation.messages.clone();
        history.push(user.clone());
        let mut annotations = Annotations::default();
        if conversation.scene == FunctionScene::EmotionalSupport {
            annotations.counseling_stage = Some(tag_counseling_stage(&history));
        }
        let start = truncate_history(&history, self.settings.history_char_budget);
        annotations.history_dropped = start;
        let mut sent = history.split_off(start);
        if let Some(essay) = &essay {
            sent.last_mut().expect("current turn is kept").content = essay.user_message.clone();
        }

        let mut snippets = Vec::new();
        if spec.retrieval_enabled() {
            annotations.retrieval = true;
            let outcome = match &self.provider {
                Some(provider) => retrieve(text, provider.as_ref(), &self.settings.retrieval)
                    .await
                    .expect("question and k were checked"),
                None => educhat_core::retrieval::RetrievalOutcome::Degraded {
                    error: ProviderError::Connection("no search provider configured".into()),
                },
            };
            if let Some(error) = outcome.error() {
                annotations.degraded = true;
                annotations.provider_error = Some(error.clone());
            }
            let checker = SelfChecker::new(self.backend.as_ref(), templates, locale)
                .with_concurrency(self.settings.retrieval.self_check_concurrency)
                .with_deadline_ms(self.settings.generation.deadline_ms);
            snippets = checker
                .filter(text, outcome.into_snippets(), spec.self_check_enabled())
                .await;
        }

        let request = GenerationRequest::new(
            system_prompt,
            inject(&snippets, &sent, templates, locale),
            GenerationParams {
                locale,
                ..self.settings.generation
            },
        );
        let content = match self.generate(&request, deltas).await {
            Ok(content) => content,
            Err(e) => {
                warn!(id, error = %e, "backend failed; user message kept");
                return Err(e.into());
            }
        };

        match conversation.scene {
            FunctionScene::EssayAssessment => {
                annotations.essay = Some(match parse_essay_feedback(&content, text, &self.settings.essay) {
                    Ok(feedback) => EssayCheck::Feedback(feedback),
                    Err(error) => EssayCheck::Error(error),
                });
            }
            FunctionScene::SocraticTeaching => annotations.socratic_lint = socratic_turn_lint(&content),
            _ => {}
        }

        let assistant = Message::assistant(content);
        self.store.append(
            id,
            Turn::assistant(assistant.clone(), snippets.clone(), annotations.clone()),
        )?;
        if let Some(log) = &self.interactions {
            if let Err(e) = log.record(&conversation, &user, &assistant, &snippets, &annotations) {
                warn!(error = %e, "interaction log write failed");
            }
        }
        Ok(TurnOutcome {
            message: assistant,
            annotations: TurnAnnotations { snippets, annotations },
        })
    }

    async fn generate(&self, request: &GenerationRequest, deltas: Option<&mpsc::Sender<TurnEvent>>) -> Result<String, BackendError> {
        let Some(tx) = deltas else {
            return Ok(self.backend.generate(request).await?.content);
        };
        let mut stream = self.backend.generate_stream(request).await?;
        let deadline = tokio::time::Instant::now() + request.params.deadline();
        let mut content = String::new();
        loop {
            let next = tokio::time::timeout_at(deadline, stream.next()).await.map_err(|_| BackendError::Timeout {
                deadline_ms: request.params.deadline_ms,
            })?;
            match next {
                None => break,
                Some(delta) => {
                    let delta = delta?;
                    if delta.is_empty() {
                        continue;
                    }
                    content.push_str(&delta);
                    let _ = tx.send(TurnEvent::Delta(delta)).await;
                }
            }
        }
        if content.is_empty() {
            return Err(BackendError::Malformed("empty reply".into()));
        }
        Ok(content)
    }
}

/// Index of the first message to send: the longest suffix of `history`
/// within `budget` characters, always including the last message, and never
/// starting on an assistant message.
pub fn truncate_history(history: &[Message], budget: usize) -> usize {
    let Some(last) = history.len().checked_sub(1) else {
        return 0;
    };
    let mut start = last;
    let mut used = history[last].content.chars().count();
    while start > 0 {
        let size = history[start - 1].content.chars().count();
        if used + size > budget {
            break;
        }
        used += size;
        start -= 1;
    }
    while start < last && history[start].role != educhat_core::backend::Role::User {
        start += 1;
    }
    start
}
