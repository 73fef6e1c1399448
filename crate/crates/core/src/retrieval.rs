//! Web retrieval with model self-check.
//!
//! A question is sent to a [`SearchProvider`]; each returned snippet is then
//! shown to the chat backend with the question "Is this helpful for answering
//! the question?" and only affirmed snippets are injected as context messages
//! ahead of the dialogue history.

use std::sync::Arc;
use std::time::Duration;

use async_trait::async_trait;
use futures::StreamExt;
use parking_lot::Mutex;
use serde::{Deserialize, Serialize};
use tracing::warn;

use crate::backend::{ChatBackend, GenerationParams, GenerationRequest, Message, Role};
use crate::template::{render, Locale, LocaleTemplates, Templates};

pub const DEFAULT_K: usize = 5;
pub const DEFAULT_MAX_SNIPPET_CHARS: usize = 2000;
pub const DEFAULT_SELF_CHECK_CONCURRENCY: usize = 4;
pub const DEFAULT_PROVIDER_TIMEOUT_MS: u64 = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Helpful,
    NotHelpful,
}

/// One retrieved web result.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Snippet {
    pub source_url: String,
    pub title: String,
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub verdict: Option<Verdict>,
}

impl Snippet {
    pub fn new(source_url: impl Into<String>, title: impl Into<String>, text: impl Into<String>) -> Self {
        Self {
            source_url: source_url.into(),
            title: title.into(),
            text: text.into(),
            verdict: None,
        }
    }

    pub fn with_verdict(&self, verdict: Verdict) -> Self {
        Self {
            verdict: Some(verdict),
            ..self.clone()
        }
    }

    pub fn is_helpful(&self) -> bool {
        self.verdict == Some(Verdict::Helpful)
    }
}

/// A search provider result as it appears on the wire.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SearchHit {
    pub url: String,
    pub title: String,
    pub text: String,
}

/// Body posted to an HTTP search provider.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SearchQuery {
    pub query: String,
    pub k: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error, Serialize, Deserialize)]
#[serde(tag = "kind", content = "detail", rename_all = "snake_case")]
pub enum ProviderError {
    #[error("search provider timed out")]
    Timeout,
    #[error("search provider unreachable: {0}")]
    Connection(String),
    #[error("search provider returned status {0}")]
    Status(u16),
    #[error("malformed search provider reply: {0}")]
    Malformed(String),
}

#[async_trait]
pub trait SearchProvider: Send + Sync {
    /// At most `k` hits in relevance order.
    async fn search(&self, query: &str, k: usize) -> Result<Vec<SearchHit>, ProviderError>;
}

#[async_trait]
impl<T: SearchProvider + ?Sized> SearchProvider for Arc<T> {
    async fn search(&self, query: &str, k: usize) -> Result<Vec<SearchHit>, ProviderError> {
        (**self).search(query, k).await
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct RetrievalConfig {
    pub k: usize,
    pub max_snippet_chars: usize,
    pub self_check_concurrency: usize,
    pub provider_timeout_ms: u64,
}

impl Default for RetrievalConfig {
    fn default() -> Self {
        Self {
            k: DEFAULT_K,
            max_snippet_chars: DEFAULT_MAX_SNIPPET_CHARS,
            self_check_concurrency: DEFAULT_SELF_CHECK_CONCURRENCY,
            provider_timeout_ms: DEFAULT_PROVIDER_TIMEOUT_MS,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum RetrievalError {
    #[error("question must be non-empty")]
    EmptyQuestion,
    #[error("k must be at least 1")]
    ZeroK,
}

/// Result of [`retrieve`]. Provider failures degrade to zero snippets.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RetrievalOutcome {
    Retrieved {
        snippets: Vec<Snippet>,
        /// Indices of snippets cut to `max_snippet_chars`.
        truncated: Vec<usize>,
    },
    Degraded {
        error: ProviderError,
    },
}

impl RetrievalOutcome {
    pub fn snippets(&self) -> &[Snippet] {
        match self {
            RetrievalOutcome::Retrieved { snippets, .. } => snippets,
            RetrievalOutcome::Degraded { .. } => &[],
        }
    }

    pub fn into_snippets(self) -> Vec<Snippet> {
        match self {
            RetrievalOutcome::Retrieved { snippets, .. } => snippets,
            RetrievalOutcome::Degraded { .. } => Vec::new(),
        }
    }

    pub fn error(&self) -> Option<&ProviderError> {
        match self {
            RetrievalOutcome::Degraded { error } => Some(error),
            RetrievalOutcome::Retrieved { .. } => None,
        }
    }

    pub fn is_degraded(&self) -> bool {
        matches!(self, RetrievalOutcome::Degraded { .. })
    }
}

/// Fetches up to `config.k` snippets for `question`.
pub async fn retrieve(
    question: &str,
    provider: &dyn SearchProvider,
    config: &RetrievalConfig,
) -> Result<RetrievalOutcome, RetrievalError> {
    if question.trim().is_empty() {
        return Err(RetrievalError::EmptyQuestion);
    }
    if config.k == 0 {
        return Err(RetrievalError::ZeroK);
    }

    let timeout = Duration::from_millis(config.provider_timeout_ms.max(1));
    let hits = match tokio::time::timeout(timeout, provider.search(question, config.k)).await {
        Err(_) => Err(ProviderError::Timeout),
        Ok(result) => result,
    };
    let hits = match hits {
        Ok(hits) => hits,
        Err(error) => {
            warn!(%error, "search provider failed, answering without retrieval");
            return Ok(RetrievalOutcome::Degraded { error });
        }
    };

    let mut snippets = Vec::new();
    let mut truncated = Vec::new();
    for hit in hits.into_iter().take(config.k) {
        if hit.text.trim().is_empty() {
            continue;
        }
        let (text, cut) = truncate_chars(hit.text, config.max_snippet_chars);
        if cut {
            truncated.push(snippets.len());
        }
        snippets.push(Snippet::new(hit.url, hit.title, text));
    }
    Ok(RetrievalOutcome::Retrieved { snippets, truncated })
}

fn truncate_chars(text: String, max_chars: usize) -> (String, bool) {
    match text.char_indices().nth(max_chars) {
        Some((byte_idx, _)) if max_chars > 0 => (text[..byte_idx].to_string(), true),
        _ => (text, false),
    }
}

/// Whether the first token of `reply` is in the affirmative set.
///
/// The token runs from the first non-whitespace character to the next
/// whitespace or punctuation mark and is compared case-insensitively.
pub fn is_affirmative(reply: &str, affirmatives: &[String]) -> bool {
    let token: String = reply
        .trim_start()
        .chars()
        .take_while(|c| !c.is_whitespace() && !is_punctuation(*c))
        .flat_map(char::to_lowercase)
        .collect();
    !token.is_empty() && affirmatives.iter().any(|a| a.to_lowercase() == token)
}

fn is_punctuation(c: char) -> bool {
    c.is_ascii_punctuation()
        || matches!(
            c,
            '，' | '。' | '！' | '？' | '、' | '：' | '；' | '“' | '”' | '‘' | '’' | '（' | '）' | '…' | '—'
        )
}

/// Asks the backend whether snippets help answer a question.
pub struct SelfChecker<'a> {
    backend: &'a dyn ChatBackend,
    templates: &'a LocaleTemplates,
    params: GenerationParams,
    concurrency: usize,
}

impl<'a> SelfChecker<'a> {
    pub fn new(backend: &'a dyn ChatBackend, templates: &'a Templates, locale: Locale) -> Self {
        Self {
            backend,
            templates: templates.locale(locale),
            params: GenerationParams {
                max_new_tokens: 8,
                ..GenerationParams::deterministic(locale)
            },
            concurrency: DEFAULT_SELF_CHECK_CONCURRENCY,
        }
    }

    pub fn with_concurrency(mut self, concurrency: usize) -> Self {
        self.concurrency = concurrency.max(1);
        self
    }

    pub fn with_deadline_ms(mut self, deadline_ms: u64) -> Self {
        self.params.deadline_ms = deadline_ms;
        self
    }

    /// The backend request used to judge one snippet: the snippet as a
    /// context message followed by the helpfulness question.
    pub fn request(&self, question: &str, snippet: &Snippet) -> GenerationRequest {
        let t = self.templates;
        GenerationRequest::new(
            t.profile.clone(),
            vec![
                context_message(t, snippet),
                Message::user(render(&t.requests.self_check, &[("question", question)])),
            ],
            self.params,
        )
    }

    /// Returns a copy of `snippet` with its verdict set. Backend failures
    /// yield `NotHelpful`.
    pub async fn check(&self, question: &str, snippet: &Snippet) -> Snippet {
        let request = self.request(question, snippet);
        let verdict = match self.backend.generate(&request).await {
            Ok(reply) if is_affirmative(&reply.content, &self.templates.affirmatives) => Verdict::Helpful,
            Ok(_) => Verdict::NotHelpful,
            Err(error) => {
                warn!(%error, url = %snippet.source_url, "self-check failed, dropping snippet");
                Verdict::NotHelpful
            }
        };
        snippet.with_verdict(verdict)
    }

    /// Checks every snippet, at most `concurrency` at a time, in input order.
    pub async fn check_all(&self, question: &str, snippets: &[Snippet]) -> Vec<Snippet> {
        // Collected first: a lazy map adapter here makes callers' futures non-Send.
        let checks: Vec<_> = snippets.iter().map(|s| self.check(question, s)).collect();
        futures::stream::iter(checks)
            .buffered(self.concurrency)
            .collect()
            .await
    }

    /// The helpful subsequence of `snippets`, or `snippets` unchanged when the
    /// self-check is disabled.
    pub async fn filter(&self, question: &str, snippets: Vec<Snippet>, enabled: bool) -> Vec<Snippet> {
        if !enabled {
            return snippets;
        }
        self.check_all(question, &snippets)
            .await
            .into_iter()
            .filter(Snippet::is_helpful)
            .collect()
    }
}

fn context_message(t: &LocaleTemplates, snippet: &Snippet) -> Message {
    Message::new(
        Role::SystemContext,
        render(
            &t.requests.context_message,
            &[
                ("title", &snippet.title),
                ("text", &snippet.text),
                ("url", &snippet.source_url),
            ],
        ),
    )
}

/// One context message per snippet, in order, followed by `history`.
pub fn inject(snippets: &[Snippet], history: &[Message], templates: &Templates, locale: Locale) -> Vec<Message> {
    let t = templates.locale(locale);
    snippets
        .iter()
        .map(|s| context_message(t, s))
        .chain(history.iter().cloned())
        .collect()
}

/// Search provider reached over HTTP: `POST` a [`SearchQuery`], receive a
/// JSON array of [`SearchHit`].
#[derive(Debug, Clone)]
pub struct HttpSearchProvider {
    client: reqwest::Client,
    endpoint: String,
    api_key: Option<String>,
}

impl HttpSearchProvider {
    pub fn new(endpoint: impl Into<String>, api_key: Option<String>) -> Self {
        Self {
            client: reqwest::Client::new(),
            endpoint: endpoint.into(),
            api_key,
        }
    }
}

#[async_trait]
impl SearchProvider for HttpSearchProvider {
    async fn search(&self, query: &str, k: usize) -> Result<Vec<SearchHit>, ProviderError> {
        let mut builder = self.client.post(&self.endpoint).json(&SearchQuery {
            query: query.to_string(),
            k,
        });
        if let Some(key) = &self.api_key {
            builder = builder.bearer_auth(key);
        }
        let response = builder.send().await.map_err(|e| {
            if e.is_timeout() {
                ProviderError::Timeout
            } else {
                ProviderError::Connection(e.to_string())
            }
        })?;
        if !response.status().is_success() {
            return Err(ProviderError::Status(response.status().as_u16()));
        }
        let mut hits: Vec<SearchHit> = response
            .json()
            .await
            .map_err(|e| ProviderError::Malformed(e.to_string()))?;
        hits.truncate(k);
        Ok(hits)
    }
}

type SearchFn = Arc<dyn Fn(&str, usize) -> Result<Vec<SearchHit>, ProviderError> + Send + Sync>;

/// In-process provider with a call log, for tests and offline runs.
#[derive(Clone)]
pub struct StubSearchProvider {
    respond: SearchFn,
    delay: Option<Duration>,
    calls: Arc<Mutex<Vec<(String, usize)>>>,
}

impl std::fmt::Debug for StubSearchProvider {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("StubSearchProvider")
            .field("delay", &self.delay)
            .field("calls", &self.calls.lock().len())
            .finish()
    }
}

impl StubSearchProvider {
    /// Always returns (up to `k` of) the same hits.
    pub fn new(hits: Vec<SearchHit>) -> Self {
        Self::from_fn(move |_, k| Ok(hits.iter().take(k).cloned().collect()))
    }

    /// Returns every hit regardless of `k`, as a misbehaving provider would.
    pub fn ignoring_k(hits: Vec<SearchHit>) -> Self {
        Self::from_fn(move |_, _| Ok(hits.clone()))
    }

    pub fn failing(error: ProviderError) -> Self {
        Self::from_fn(move |_, _| Err(error.clone()))
    }

    pub fn from_fn(
        f: impl Fn(&str, usize) -> Result<Vec<SearchHit>, ProviderError> + Send + Sync + 'static,
    ) -> Self {
        Self {
            respond: Arc::new(f),
            delay: None,
            calls: Arc::new(Mutex::new(Vec::new())),
        }
    }

    pub fn with_delay(mut self, delay: Duration) -> Self {
        self.delay = Some(delay);
        self
    }

    pub fn calls(&self) -> Vec<(String, usize)> {
        self.calls.lock().clone()
    }

    pub fn call_count(&self) -> usize {
        self.calls.lock().len()
    }
}

#[async_trait]
impl SearchProvider for StubSearchProvider {
    async fn search(&self, query: &str, k: usize) -> Result<Vec<SearchHit>, ProviderError> {
        self.calls.lock().push((query.to_string(), k));
        if let Some(delay) = self.delay {
            tokio::time::sleep(delay).await;
        }
        (self.respond)(query, k)
    }
}
