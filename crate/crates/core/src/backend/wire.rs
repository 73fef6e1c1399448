//! JSON schema spoken with a remote chat backend.
//!
//! Request: `POST <endpoint>` with [`GenerateRequest`]. A non-streamed reply
//! is a [`GenerateReply`]. With `"stream": true` the reply body is
//! newline-delimited JSON, one [`StreamChunk`] per line, optionally closed by
//! `{"done": true}`.

use serde::{Deserialize, Serialize};

use super::{GenerationRequest, Role};
use crate::template::Locale;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WireMessage {
    pub role: Role,
    pub content: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WireParams {
    pub max_new_tokens: u32,
    pub temperature: f32,
    pub locale: Locale,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerateRequest {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model: Option<String>,
    pub system_prompt: String,
    pub messages: Vec<WireMessage>,
    pub params: WireParams,
    #[serde(default)]
    pub stream: bool,
}

impl GenerateRequest {
    pub fn from_request(request: &GenerationRequest, model: Option<&str>, stream: bool) -> Self {
        Self {
            model: model.map(str::to_string),
            system_prompt: request.system_prompt.clone(),
            messages: request
                .messages
                .iter()
                .map(|m| WireMessage {
                    role: m.role,
                    content: m.content.clone(),
                })
                .collect(),
            params: WireParams {
                max_new_tokens: request.params.max_new_tokens,
                temperature: request.params.temperature,
                locale: request.params.locale,
            },
            stream,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerateReply {
    pub content: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StreamChunk {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta: Option<String>,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub done: bool,
}
