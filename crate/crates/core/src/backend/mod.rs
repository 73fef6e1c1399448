//! Chat model seam: messages, generation parameters and the [`ChatBackend`]
//! trait, with a scripted mock and a remote HTTP client.

mod mock;
mod remote;
pub mod wire;

use std::fmt;

use async_trait::async_trait;
use chrono::{DateTime, Utc};
use futures::stream::BoxStream;
use futures::StreamExt;
use serde::{Deserialize, Serialize};

use crate::template::Locale;

pub use mock::{Matcher, MockBackend, MockFailure, Reply, Rule};
pub use remote::{RemoteBackend, RemoteConfig};

pub const DEFAULT_DEADLINE_MS: u64 = 30_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Role {
    #[serde(rename = "system")]
    System,
    /// Retrieved context injected ahead of the dialogue history.
    #[serde(rename = "system-context")]
    SystemContext,
    #[serde(rename = "user")]
    User,
    #[serde(rename = "assistant")]
    Assistant,
}

impl Role {
    pub fn as_str(self) -> &'static str {
        match self {
            Role::System => "system",
            Role::SystemContext => "system-context",
            Role::User => "user",
            Role::Assistant => "assistant",
        }
    }
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Message {
    pub id: String,
    pub role: Role,
    pub content: String,
    pub created_at: DateTime<Utc>,
}

impl Message {
    pub fn new(role: Role, content: impl Into<String>) -> Self {
        Self {
            id: uuid::Uuid::new_v4().to_string(),
            role,
            content: content.into(),
            created_at: Utc::now(),
        }
    }

    pub fn user(content: impl Into<String>) -> Self {
        Self::new(Role::User, content)
    }

    pub fn assistant(content: impl Into<String>) -> Self {
        Self::new(Role::Assistant, content)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GenerationParams {
    pub max_new_tokens: u32,
    pub temperature: f32,
    pub deadline_ms: u64,
    #[serde(default)]
    pub locale: Locale,
}

impl Default for GenerationParams {
    fn default() -> Self {
        Self {
            max_new_tokens: 1024,
            temperature: 0.7,
            deadline_ms: DEFAULT_DEADLINE_MS,
            locale: Locale::En,
        }
    }
}

impl GenerationParams {
    pub fn deterministic(locale: Locale) -> Self {
        Self {
            temperature: 0.0,
            locale,
            ..Self::default()
        }
    }

    pub fn deadline(&self) -> std::time::Duration {
        std::time::Duration::from_millis(self.deadline_ms.max(1))
    }
}

/// One call to a chat backend.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationRequest {
    pub system_prompt: String,
    pub messages: Vec<Message>,
    pub params: GenerationParams,
}

impl GenerationRequest {
    pub fn new(system_prompt: impl Into<String>, messages: Vec<Message>, params: GenerationParams) -> Self {
        Self {
            system_prompt: system_prompt.into(),
            messages,
            params,
        }
    }

    pub fn last_user(&self) -> Option<&Message> {
        self.messages.iter().rev().find(|m| m.role == Role::User)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum BackendError {
    #[error("could not connect to backend: {0}")]
    Connection(String),
    #[error("backend unavailable (status {status}): {body}")]
    Unavailable { status: u16, body: String },
    #[error("backend did not answer within {deadline_ms} ms")]
    Timeout { deadline_ms: u64 },
    #[error("malformed backend reply: {0}")]
    Malformed(String),
    #[error("backend request rejected: {0}")]
    InvalidRequest(String),
}

impl BackendError {
    /// Whether the caller may retry the same request later.
    pub fn is_retriable(&self) -> bool {
        matches!(
            self,
            BackendError::Connection(_) | BackendError::Unavailable { .. } | BackendError::Timeout { .. }
        )
    }
}

/// Ordered content fragments; concatenated they form the final reply.
pub type DeltaStream = BoxStream<'static, Result<String, BackendError>>;

#[async_trait]
pub trait ChatBackend: Send + Sync {
    /// Produces one assistant message. Successful replies are never empty and
    /// arrive before `params.deadline_ms`.
    async fn generate(&self, request: &GenerationRequest) -> Result<Message, BackendError>;

    /// Streams the reply as deltas. The default delivers the whole reply as a
    /// single delta.
    async fn generate_stream(&self, request: &GenerationRequest) -> Result<DeltaStream, BackendError> {
        let message = self.generate(request).await?;
        Ok(futures::stream::once(async move { Ok(message.content) }).boxed())
    }
}

#[async_trait]
impl<T: ChatBackend + ?Sized> ChatBackend for std::sync::Arc<T> {
    async fn generate(&self, request: &GenerationRequest) -> Result<Message, BackendError> {
        (**self).generate(request).await
    }

    async fn generate_stream(&self, request: &GenerationRequest) -> Result<DeltaStream, BackendError> {
        (**self).generate_stream(request).await
    }
}

/// Drains a delta stream into the final content, rejecting an empty result.
pub async fn collect_stream(mut stream: DeltaStream) -> Result<String, BackendError> {
    let mut content = String::new();
    while let Some(delta) = stream.next().await {
        content.push_str(&delta?);
    }
    if content.is_empty() {
        return Err(BackendError::Malformed("empty reply".into()));
    }
    Ok(content)
}
