//! HTTP client for a remote chat backend speaking the [`wire`](super::wire) schema.

use async_trait::async_trait;
use futures::StreamExt;
use tokio::time::Instant;
use tracing::warn;

use super::wire::{GenerateReply, GenerateRequest, StreamChunk};
use super::{BackendError, ChatBackend, DeltaStream, GenerationRequest, Message};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RemoteConfig {
    pub endpoint: String,
    pub api_key: Option<String>,
    pub model: Option<String>,
}

#[derive(Debug, Clone)]
pub struct RemoteBackend {
    client: reqwest::Client,
    config: RemoteConfig,
}

impl RemoteBackend {
    pub fn new(config: RemoteConfig) -> Self {
        Self {
            client: reqwest::Client::new(),
            config,
        }
    }

    pub fn endpoint(&self) -> &str {
        &self.config.endpoint
    }

    /// Sends the request, retrying once if the connection could not be made.
    async fn send(
        &self,
        body: &GenerateRequest,
        deadline: Instant,
        deadline_ms: u64,
    ) -> Result<reqwest::Response, BackendError> {
        let mut attempt = 0;
        loop {
            let mut builder = self.client.post(&self.config.endpoint).json(body);
            if let Some(key) = &self.config.api_key {
                builder = builder.bearer_auth(key);
            }
            let result = tokio::time::timeout_at(deadline, builder.send())
                .await
                .map_err(|_| BackendError::Timeout { deadline_ms })?;
            match result {
                Ok(response) => return check_status(response).await,
                Err(err) if err.is_connect() && attempt == 0 => {
                    warn!(endpoint = %self.config.endpoint, error = %err, "backend connection failed, retrying once");
                    attempt += 1;
                }
                Err(err) => return Err(map_transport_error(err, deadline_ms)),
            }
        }
    }
}

async fn check_status(response: reqwest::Response) -> Result<reqwest::Response, BackendError> {
    let status = response.status();
    if status.is_success() {
        return Ok(response);
    }
    let body = response.text().await.unwrap_or_default();
    if status.is_client_error() {
        Err(BackendError::InvalidRequest(format!("status {}: {body}", status.as_u16())))
    } else {
        Err(BackendError::Unavailable {
            status: status.as_u16(),
            body,
        })
    }
}

fn map_transport_error(err: reqwest::Error, deadline_ms: u64) -> BackendError {
    if err.is_timeout() {
        BackendError::Timeout { deadline_ms }
    } else if err.is_connect() {
        BackendError::Connection(err.to_string())
    } else if err.is_decode() {
        BackendError::Malformed(err.to_string())
    } else {
        BackendError::Connection(err.to_string())
    }
}

#[async_trait]
impl ChatBackend for RemoteBackend {
    async fn generate(&self, request: &GenerationRequest) -> Result<Message, BackendError> {
        let deadline_ms = request.params.deadline_ms;
        let deadline = Instant::now() + request.params.deadline();
        let body = GenerateRequest::from_request(request, self.config.model.as_deref(), false);
        let response = self.send(&body, deadline, deadline_ms).await?;
        let bytes = tokio::time::timeout_at(deadline, response.bytes())
            .await
            .map_err(|_| BackendError::Timeout { deadline_ms })?
            .map_err(|e| map_transport_error(e, deadline_ms))?;
        let reply: GenerateReply =
            serde_json::from_slice(&bytes).map_err(|e| BackendError::Malformed(e.to_string()))?;
        if reply.content.is_empty() {
            return Err(BackendError::Malformed("empty reply".into()));
        }
        Ok(Message::assistant(reply.content))
    }

    async fn generate_stream(&self, request: &GenerationRequest) -> Result<DeltaStream, BackendError> {
        let deadline_ms = request.params.deadline_ms;
        let deadline = Instant::now() + request.params.deadline();
        let body = GenerateRequest::from_request(request, self.config.model.as_deref(), true);
        let response = self.send(&body, deadline, deadline_ms).await?;

        let state = NdjsonState {
            body: response.bytes_stream().boxed(),
            buffer: Vec::new(),
            deadline,
            deadline_ms,
            finished: false,
        };
        let stream = futures::stream::unfold(state, |mut state| async move {
            if state.finished {
                return None;
            }
            let item = state.next_delta().await;
            match item {
                Some(Ok(delta)) => Some((Ok(delta), state)),
                Some(Err(err)) => {
                    state.finished = true;
                    Some((Err(err), state))
                }
                None => None,
            }
        });
        Ok(stream.boxed())
    }
}

type ByteStream = futures::stream::BoxStream<'static, reqwest::Result<bytes::Bytes>>;

struct NdjsonState {
    body: ByteStream,
    buffer: Vec<u8>,
    deadline: Instant,
    deadline_ms: u64,
    finished: bool,
}

impl NdjsonState {
    /// Next non-empty delta, `None` at end of stream or on `{"done": true}`.
    async fn next_delta(&mut self) -> Option<Result<String, BackendError>> {
        loop {
            if let Some(pos) = self.buffer.iter().position(|&b| b == b'\n') {
                let line: Vec<u8> = self.buffer.drain(..=pos).collect();
                match parse_chunk(&line) {
                    Ok(None) => continue,
                    Ok(Some(chunk)) if chunk.done => return None,
                    Ok(Some(chunk)) => match chunk.delta {
                        Some(delta) if !delta.is_empty() => return Some(Ok(delta)),
                        _ => continue,
                    },
                    Err(err) => return Some(Err(err)),
                }
            }
            let next = tokio::time::timeout_at(self.deadline, self.body.next()).await;
            match next {
                Err(_) => {
                    return Some(Err(BackendError::Timeout {
                        deadline_ms: self.deadline_ms,
                    }))
                }
                Ok(Some(Ok(bytes))) => self.buffer.extend_from_slice(&bytes),
                Ok(Some(Err(err))) => return Some(Err(map_transport_error(err, self.deadline_ms))),
                Ok(None) => {
                    if self.buffer.iter().all(u8::is_ascii_whitespace) {
                        return None;
                    }
                    let line = std::mem::take(&mut self.buffer);
                    return match parse_chunk(&line) {
                        Ok(Some(StreamChunk { delta: Some(d), done: false })) if !d.is_empty() => {
                            Some(Ok(d))
                        }
                        Ok(_) => None,
                        Err(err) => Some(Err(err)),
                    };
                }
            }
        }
    }
}

fn parse_chunk(line: &[u8]) -> Result<Option<StreamChunk>, BackendError> {
    let text = std::str::from_utf8(line).map_err(|e| BackendError::Malformed(e.to_string()))?;
    let text = text.trim();
    if text.is_empty() {
        return Ok(None);
    }
    serde_json::from_str(text)
        .map(Some)
        .map_err(|e| BackendError::Malformed(format!("bad stream line {text:?}: {e}")))
}

impl Default for RemoteConfig {
    fn default() -> Self {
        Self {
            endpoint: "http://127.0.0.1:8000/generate".into(),
            api_key: None,
            model: None,
        }
    }
}
