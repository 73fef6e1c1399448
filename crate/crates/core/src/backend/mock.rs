//! Scripted, deterministic backend for tests and offline demos.

use std::fmt;
use std::sync::Arc;
use std::time::Duration;

use async_trait::async_trait;
use futures::StreamExt;
use parking_lot::Mutex;

use super::{BackendError, ChatBackend, DeltaStream, GenerationRequest, Message, Role};

type RequestPredicate = Arc<dyn Fn(&GenerationRequest) -> bool + Send + Sync>;
type ReplyFn = Arc<dyn Fn(&GenerationRequest) -> String + Send + Sync>;

/// Predicate over a request.
#[derive(Clone)]
pub enum Matcher {
    Always,
    SystemContains(String),
    LastUserContains(String),
    /// Some message with this role contains the needle.
    RoleContains(Role, String),
    /// The system prompt or any message contains the needle.
    AnyContains(String),
    All(Vec<Matcher>),
    Not(Box<Matcher>),
    Custom(RequestPredicate),
}

impl Matcher {
    pub fn custom(f: impl Fn(&GenerationRequest) -> bool + Send + Sync + 'static) -> Self {
        Matcher::Custom(Arc::new(f))
    }

    pub fn matches(&self, request: &GenerationRequest) -> bool {
        match self {
            Matcher::Always => true,
            Matcher::SystemContains(needle) => request.system_prompt.contains(needle.as_str()),
            Matcher::LastUserContains(needle) => request
                .last_user()
                .is_some_and(|m| m.content.contains(needle.as_str())),
            Matcher::RoleContains(role, needle) => request
                .messages
                .iter()
                .any(|m| m.role == *role && m.content.contains(needle.as_str())),
            Matcher::AnyContains(needle) => {
                request.system_prompt.contains(needle.as_str())
                    || request.messages.iter().any(|m| m.content.contains(needle.as_str()))
            }
            Matcher::All(all) => all.iter().all(|m| m.matches(request)),
            Matcher::Not(inner) => !inner.matches(request),
            Matcher::Custom(f) => f(request),
        }
    }
}

impl fmt::Debug for Matcher {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Matcher::Always => f.write_str("Always"),
            Matcher::SystemContains(s) => f.debug_tuple("SystemContains").field(s).finish(),
            Matcher::LastUserContains(s) => f.debug_tuple("LastUserContains").field(s).finish(),
            Matcher::RoleContains(r, s) => f.debug_tuple("RoleContains").field(r).field(s).finish(),
            Matcher::AnyContains(s) => f.debug_tuple("AnyContains").field(s).finish(),
            Matcher::All(all) => f.debug_tuple("All").field(all).finish(),
            Matcher::Not(inner) => f.debug_tuple("Not").field(inner).finish(),
            Matcher::Custom(_) => f.write_str("Custom(..)"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MockFailure {
    Connection,
    Unavailable,
    Timeout,
}

/// What a matching rule answers.
#[derive(Clone)]
pub enum Reply {
    Text(String),
    /// Explicit stream deltas; the non-streamed reply is their concatenation.
    Chunks(Vec<String>),
    /// Repeats the last user message.
    EchoLastUser,
    Fail(MockFailure),
    Custom(ReplyFn),
}

impl Reply {
    pub fn text(s: impl Into<String>) -> Self {
        Reply::Text(s.into())
    }

    pub fn custom(f: impl Fn(&GenerationRequest) -> String + Send + Sync + 'static) -> Self {
        Reply::Custom(Arc::new(f))
    }
}

impl fmt::Debug for Reply {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Reply::Text(s) => f.debug_tuple("Text").field(s).finish(),
            Reply::Chunks(c) => f.debug_tuple("Chunks").field(c).finish(),
            Reply::EchoLastUser => f.write_str("EchoLastUser"),
            Reply::Fail(kind) => f.debug_tuple("Fail").field(kind).finish(),
            Reply::Custom(_) => f.write_str("Custom(..)"),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Rule {
    pub matcher: Matcher,
    pub reply: Reply,
    /// Simulated latency, checked against the request deadline.
    pub delay: Option<Duration>,
}

/// Answers with the first matching rule, else the default reply, and records
/// every request in a call log.
#[derive(Debug, Clone)]
pub struct MockBackend {
    rules: Arc<Vec<Rule>>,
    default_reply: Reply,
    calls: Arc<Mutex<Vec<GenerationRequest>>>,
}

impl MockBackend {
    pub fn new(default_reply: impl Into<String>) -> Self {
        Self::with_default(Reply::Text(default_reply.into()))
    }

    pub fn with_default(default_reply: Reply) -> Self {
        Self {
            rules: Arc::new(Vec::new()),
            default_reply,
            calls: Arc::new(Mutex::new(Vec::new())),
        }
    }

    pub fn rule(self, matcher: Matcher, reply: Reply) -> Self {
        self.push_rule(Rule {
            matcher,
            reply,
            delay: None,
        })
    }

    pub fn delayed_rule(self, matcher: Matcher, reply: Reply, delay: Duration) -> Self {
        self.push_rule(Rule {
            matcher,
            reply,
            delay: Some(delay),
        })
    }

    fn push_rule(mut self, rule: Rule) -> Self {
        Arc::make_mut(&mut self.rules).push(rule);
        self
    }

    /// Snapshot of every request received so far, in arrival order.
    pub fn calls(&self) -> Vec<GenerationRequest> {
        self.calls.lock().clone()
    }

    pub fn call_count(&self) -> usize {
        self.calls.lock().len()
    }

    pub fn clear_calls(&self) {
        self.calls.lock().clear();
    }

    fn select(&self, request: &GenerationRequest) -> (Reply, Option<Duration>) {
        self.rules
            .iter()
            .find(|rule| rule.matcher.matches(request))
            .map(|rule| (rule.reply.clone(), rule.delay))
            .unwrap_or_else(|| (self.default_reply.clone(), None))
    }

    /// Records the call, applies the delay and resolves the reply into deltas.
    async fn respond(&self, request: &GenerationRequest) -> Result<Vec<String>, BackendError> {
        self.calls.lock().push(request.clone());
        let (reply, delay) = self.select(request);

        if let Some(delay) = delay {
            let deadline = request.params.deadline();
            if delay >= deadline {
                tokio::time::sleep(deadline).await;
                return Err(BackendError::Timeout {
                    deadline_ms: request.params.deadline_ms,
                });
            }
            tokio::time::sleep(delay).await;
        }

        let chunks = match reply {
            Reply::Text(text) => split_deltas(&text),
            Reply::Chunks(chunks) => chunks,
            Reply::EchoLastUser => split_deltas(
                request
                    .last_user()
                    .map(|m| m.content.as_str())
                    .unwrap_or_default(),
            ),
            Reply::Custom(f) => split_deltas(&f(request)),
            Reply::Fail(MockFailure::Connection) => {
                return Err(BackendError::Connection("mock connection refused".into()))
            }
            Reply::Fail(MockFailure::Unavailable) => {
                return Err(BackendError::Unavailable {
                    status: 503,
                    body: "mock backend unavailable".into(),
                })
            }
            Reply::Fail(MockFailure::Timeout) => {
                return Err(BackendError::Timeout {
                    deadline_ms: request.params.deadline_ms,
                })
            }
        };
        if chunks.iter().all(String::is_empty) {
            return Err(BackendError::Malformed("empty reply".into()));
        }
        Ok(chunks)
    }
}

/// Splits text after each whitespace run so deltas concatenate back exactly.
fn split_deltas(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut current = String::new();
    let mut prev_ws = false;
    for c in text.chars() {
        if prev_ws && !c.is_whitespace() {
            out.push(std::mem::take(&mut current));
        }
        prev_ws = c.is_whitespace();
        current.push(c);
    }
    if !current.is_empty() {
        out.push(current);
    }
    out
}

#[async_trait]
impl ChatBackend for MockBackend {
    async fn generate(&self, request: &GenerationRequest) -> Result<Message, BackendError> {
        let chunks = self.respond(request).await?;
        Ok(Message::assistant(chunks.concat()))
    }

    async fn generate_stream(&self, request: &GenerationRequest) -> Result<DeltaStream, BackendError> {
        let chunks = self.respond(request).await?;
        Ok(futures::stream::iter(chunks.into_iter().map(Ok)).boxed())
    }
}
