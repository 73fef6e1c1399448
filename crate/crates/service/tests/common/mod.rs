#![allow(dead_code)]

use std::sync::Arc;

use educhat_core::backend::{GenerationRequest, Matcher, MockBackend, Reply, Role};
use educhat_core::retrieval::{SearchHit, StubSearchProvider};
use educhat_service::{router, ChatService, ConversationStore, MemoryStore};
use serde_json::Value;

pub const KEYWORD: &str = "photosynthesis";
pub const SELF_CHECK_QUESTION: &str = "Is this helpful for answering the question?";

/// Says Yes to self-check questions about snippets mentioning the keyword,
/// No to other self-check questions, and `answer` to everything else.
pub fn keyword_mock(answer: &str) -> MockBackend {
    MockBackend::new(answer)
        .rule(
            Matcher::All(vec![
                Matcher::LastUserContains(SELF_CHECK_QUESTION.into()),
                Matcher::RoleContains(Role::SystemContext, KEYWORD.into()),
            ]),
            Reply::text("Yes"),
        )
        .rule(Matcher::LastUserContains(SELF_CHECK_QUESTION.into()), Reply::text("No"))
}

pub fn is_self_check(request: &GenerationRequest) -> bool {
    request
        .last_user()
        .is_some_and(|m| m.content.contains(SELF_CHECK_QUESTION))
}

pub fn hit(i: usize, text: &str) -> SearchHit {
    SearchHit {
        url: format!("https://example.org/{i}"),
        title: format!("Result {i}"),
        text: text.into(),
    }
}

/// Two snippets about the keyword around one that is not.
pub fn two_helpful_one_not() -> StubSearchProvider {
    StubSearchProvider::new(vec![
        hit(0, "Leaves use photosynthesis to make sugar."),
        hit(1, "The moon has no atmosphere."),
        hit(2, "Chlorophyll drives photosynthesis."),
    ])
}

pub fn service(backend: MockBackend) -> ChatService {
    ChatService::new(Arc::new(backend), Arc::new(MemoryStore::new()) as Arc<dyn ConversationStore>)
}

pub async fn serve(service: Arc<ChatService>) -> String {
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
    let addr = listener.local_addr().unwrap();
    tokio::spawn(async move { axum::serve(listener, router(service)).await.unwrap() });
    format!("http://{addr}")
}

#[derive(Debug, Clone, PartialEq)]
pub struct SseEvent {
    pub name: String,
    pub data: Value,
}

/// Parses a complete `text/event-stream` body, skipping comments.
pub fn parse_sse(body: &str) -> Vec<SseEvent> {
    body.replace("\r\n", "\n")
        .split("\n\n")
        .filter_map(|block| {
            let mut name = None;
            let mut data = Vec::new();
            for line in block.lines() {
                if let Some(v) = line.strip_prefix("event:") {
                    name = Some(v.trim().to_string());
                } else if let Some(v) = line.strip_prefix("data:") {
                    data.push(v.strip_prefix(' ').unwrap_or(v));
                }
            }
            let name = name?;
            Some(SseEvent {
                name,
                data: serde_json::from_str(&data.join("\n")).expect("event data is JSON"),
            })
        })
        .collect()
}

pub async fn post_json(client: &reqwest::Client, url: &str, body: Value) -> reqwest::Response {
    client.post(url).json(&body).send().await.unwrap()
}

/// Posts a streamed message and returns its events.
pub async fn post_streamed(client: &reqwest::Client, base: &str, id: &str, text: &str) -> Vec<SseEvent> {
    let resp = post_json(
        client,
        &format!("{base}/conversations/{id}/messages"),
        serde_json::json!({ "text": text, "stream": true }),
    )
    .await;
    assert_eq!(resp.status(), 200);
    assert!(resp.headers()["content-type"].to_str().unwrap().starts_with("text/event-stream"));
    parse_sse(&resp.text().await.unwrap())
}

/// Concatenated `delta` texts.
pub fn deltas(events: &[SseEvent]) -> String {
    events
        .iter()
        .filter(|e| e.name == "delta")
        .map(|e| e.data["text"].as_str().unwrap())
        .collect()
}
