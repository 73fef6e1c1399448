//! HTTP JSON and server-sent-event API.

use std::convert::Infallible;
use std::sync::Arc;

use axum::extract::rejection::JsonRejection;
use axum::extract::{Path, State};
use axum::http::StatusCode;
use axum::response::sse::{Event, KeepAlive, Sse};
use axum::response::{IntoResponse, Response};
use axum::routing::get;
use axum::{Json, Router};
use educhat_core::backend::BackendError;
use educhat_core::prompt::{FunctionScene, Skill, SystemPromptSpec, ToolOverrides, ToolRule, CALCULATOR, SELF_CHECK, WEB_SEARCH};
use futures::StreamExt;
use serde::{Deserialize, Serialize};
use serde_json::json;
use tokio_stream::wrappers::ReceiverStream;

use crate::conversation::Conversation;
use crate::service::{ChatError, ChatService, TurnEvent};

pub fn router(service: Arc<ChatService>) -> Router {
    Router::new()
        .route("/health", get(health))
        .route("/scenes", get(scenes))
        .route("/conversations", get(list).post(create))
        .route("/conversations/{id}", get(fetch).delete(remove))
        .route("/conversations/{id}/messages", axum::routing::post(post_message))
        .with_state(service)
}

/// Error body shared by every endpoint and the SSE `error` event.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub code: String,
    pub message: String,
    pub retriable: bool,
}

impl From<&ChatError> for ErrorBody {
    fn from(e: &ChatError) -> Self {
        Self {
            code: e.code().into(),
            message: e.to_string(),
            retriable: e.is_retriable(),
        }
    }
}

pub struct ApiError {
    status: StatusCode,
    body: ErrorBody,
}

impl From<ChatError> for ApiError {
    fn from(e: ChatError) -> Self {
        let status = match &e {
            ChatError::NotFound(_) => StatusCode::NOT_FOUND,
            ChatError::EmptyText => StatusCode::BAD_REQUEST,
            ChatError::IllegalOverride(_) | ChatError::Essay(_) => StatusCode::UNPROCESSABLE_ENTITY,
            ChatError::Backend(BackendError::Timeout { .. }) => StatusCode::GATEWAY_TIMEOUT,
            ChatError::Backend(b) if b.is_retriable() => StatusCode::SERVICE_UNAVAILABLE,
            ChatError::Backend(_) => StatusCode::BAD_GATEWAY,
            ChatError::Store(_) => StatusCode::INTERNAL_SERVER_ERROR,
        };
        Self {
            status,
            body: ErrorBody::from(&e),
        }
    }
}

impl From<JsonRejection> for ApiError {
    fn from(r: JsonRejection) -> Self {
        Self {
            status: StatusCode::BAD_REQUEST,
            body: ErrorBody {
                code: "bad_request".into(),
                message: r.body_text(),
                retriable: false,
            },
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(json!({ "error": self.body }))).into_response()
    }
}

/// A conversation together with the system prompt it is answered under.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConversationView {
    #[serde(flatten)]
    pub conversation: Conversation,
    pub spec: SystemPromptSpec,
}

fn view(service: &ChatService, conversation: Conversation) -> Result<ConversationView, ApiError> {
    let spec = service.effective_spec(&conversation)?;
    Ok(ConversationView { conversation, spec })
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CreateConversation {
    pub scene: FunctionScene,
    #[serde(default)]
    pub overrides: Option<ToolOverrides>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PostMessage {
    pub text: String,
    #[serde(default)]
    pub stream: bool,
}

async fn health() -> Json<serde_json::Value> {
    Json(json!({ "status": "ok" }))
}

#[derive(Debug, Serialize)]
struct SceneInfo {
    scene: FunctionScene,
    skill: Skill,
    tools: Vec<ToolInfo>,
}

#[derive(Debug, Serialize)]
struct ToolInfo {
    name: &'static str,
    optional: bool,
    default: bool,
}

async fn scenes() -> Json<Vec<SceneInfo>> {
    Json(
        FunctionScene::ALL
            .into_iter()
            .map(|scene| SceneInfo {
                scene,
                skill: scene.default_skill(),
                tools: [WEB_SEARCH, CALCULATOR, SELF_CHECK]
                    .into_iter()
                    .map(|name| {
                        let rule = scene.tool_rule(name);
                        ToolInfo {
                            name,
                            optional: matches!(rule, ToolRule::Optional { .. }),
                            default: rule.default_value(),
                        }
                    })
                    .collect(),
            })
            .collect(),
    )
}

async fn create(
    State(service): State<Arc<ChatService>>,
    body: Result<Json<CreateConversation>, JsonRejection>,
) -> Result<(StatusCode, Json<ConversationView>), ApiError> {
    let Json(body) = body?;
    let conversation = service.create_conversation(body.scene, body.overrides)?;
    Ok((StatusCode::CREATED, Json(view(&service, conversation)?)))
}

async fn list(State(service): State<Arc<ChatService>>) -> Result<Response, ApiError> {
    Ok(Json(service.list_conversations()?).into_response())
}

async fn fetch(State(service): State<Arc<ChatService>>, Path(id): Path<String>) -> Result<Json<ConversationView>, ApiError> {
    let conversation = service.get_conversation(&id)?;
    Ok(Json(view(&service, conversation)?))
}

async fn remove(State(service): State<Arc<ChatService>>, Path(id): Path<String>) -> Result<StatusCode, ApiError> {
    service.delete_conversation(&id)?;
    Ok(StatusCode::NO_CONTENT)
}

async fn post_message(
    State(service): State<Arc<ChatService>>,
    Path(id): Path<String>,
    body: Result<Json<PostMessage>, JsonRejection>,
) -> Result<Response, ApiError> {
    let Json(body) = body?;
    if !body.stream {
        return Ok(Json(service.post_message(&id, &body.text).await?).into_response());
    }
    let events = ReceiverStream::new(service.post_message_stream(&id, &body.text)?).map(|e| Ok::<_, Infallible>(sse_event(e)));
    Ok(Sse::new(events).keep_alive(KeepAlive::default()).into_response())
}

fn sse_event(event: TurnEvent) -> Event {
    let (name, data) = match event {
        TurnEvent::Delta(text) => ("delta", json!({ "text": text })),
        TurnEvent::Annotations(a) => ("annotations", serde_json::to_value(a).expect("annotations serialize")),
        TurnEvent::Done(message) => ("done", serde_json::to_value(message).expect("messages serialize")),
        TurnEvent::Error(e) => ("error", serde_json::to_value(ErrorBody::from(&e)).expect("errors serialize")),
    };
    Event::default().event(name).data(data.to_string())
}
