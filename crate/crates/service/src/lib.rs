//! Chat service: conversations over HTTP with scene-gated retrieval,
//! self-check filtering, skill validators and an append-log store.

pub mod config;
pub mod conversation;
pub mod http;
pub mod interactions;
pub mod service;
pub mod store;

use std::sync::Arc;

use educhat_core::backend::{ChatBackend, GenerationParams, MockBackend, RemoteBackend, RemoteConfig, Reply};
use educhat_core::prompt::PromptComposer;
use educhat_core::retrieval::HttpSearchProvider;
use educhat_core::template::TemplateError;
use educhat_core::Templates;

pub use config::{ConfigError, ServiceConfig};
pub use conversation::{Annotations, Conversation, ConversationSummary, EssayCheck, Turn};
pub use http::router;
pub use interactions::InteractionLog;
pub use service::{ChatError, ChatService, Settings, TurnAnnotations, TurnEvent, TurnOutcome};
pub use store::{ConversationStore, FileStore, MemoryStore, StoreError};

#[derive(Debug, thiserror::Error)]
pub enum BuildError {
    #[error(transparent)]
    Templates(#[from] TemplateError),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error("cannot open interaction log: {0}")]
    InteractionLog(std::io::Error),
    #[error("cannot listen on {addr}: {source}")]
    Listen {
        addr: std::net::SocketAddr,
        source: std::io::Error,
    },
}

/// Wires a [`ChatService`] from configuration.
pub fn build_service(config: &ServiceConfig) -> Result<ChatService, BuildError> {
    let templates = match &config.template_path {
        Some(path) => Templates::load(path)?,
        None => Templates::default(),
    };
    let backend: Arc<dyn ChatBackend> = if config.backend.endpoint == config::MOCK_ENDPOINT {
        Arc::new(MockBackend::with_default(Reply::EchoLastUser))
    } else {
        Arc::new(RemoteBackend::new(RemoteConfig {
            endpoint: config.backend.endpoint.clone(),
            api_key: config.backend.api_key.clone(),
            model: config.backend.model.clone(),
        }))
    };
    let store: Arc<dyn ConversationStore> = match &config.store.path {
        Some(dir) => Arc::new(FileStore::open(dir)?),
        None => Arc::new(MemoryStore::new()),
    };
    let settings = Settings {
        locale: config.locale,
        retrieval: config.retrieval,
        history_char_budget: config.history_char_budget,
        essay: config.essay,
        generation: GenerationParams {
            max_new_tokens: config.backend.max_new_tokens,
            deadline_ms: config.backend.deadline_ms,
            locale: config.locale,
            ..GenerationParams::default()
        },
    };
    let mut service = ChatService::new(backend, store)
        .with_composer(PromptComposer::new(templates))
        .with_settings(settings);
    if let Some(endpoint) = &config.search.endpoint {
        service = service.with_provider(Arc::new(HttpSearchProvider::new(endpoint.clone(), config.search.api_key.clone())));
    }
    if let Some(path) = &config.interaction_log {
        service = service.with_interaction_log(InteractionLog::open(path).map_err(BuildError::InteractionLog)?);
    }
    Ok(service)
}

/// Builds the service and serves the API until the process is stopped.
pub async fn serve(config: &ServiceConfig) -> Result<(), BuildError> {
    let service = Arc::new(build_service(config)?);
    let listen = |source| BuildError::Listen {
        addr: config.listen,
        source,
    };
    let listener = tokio::net::TcpListener::bind(config.listen).await.map_err(listen)?;
    tracing::info!(addr = %config.listen, "listening");
    axum::serve(listener, router(service)).await.map_err(listen)
}
