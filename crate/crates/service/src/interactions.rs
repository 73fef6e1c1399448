//! Export of completed turns as JSONL, for later fine-tuning data.

use std::fs::{File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use educhat_core::backend::Message;
use educhat_core::prompt::FunctionScene;
use educhat_core::retrieval::Snippet;
use educhat_core::Locale;
use parking_lot::Mutex;
use serde::{Deserialize, Serialize};

use crate::conversation::{Annotations, Conversation};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InteractionRecord {
    pub conversation_id: String,
    pub scene: FunctionScene,
    pub locale: Locale,
    pub user: String,
    pub assistant: String,
    pub snippet_urls: Vec<String>,
    pub degraded: bool,
    pub at: DateTime<Utc>,
}

pub struct InteractionLog {
    path: PathBuf,
    file: Mutex<File>,
}

impl InteractionLog {
    pub fn open(path: impl Into<PathBuf>) -> std::io::Result<Self> {
        let path = path.into();
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir)?;
        }
        let file = OpenOptions::new().create(true).append(true).open(&path)?;
        Ok(Self {
            path,
            file: Mutex::new(file),
        })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn record(
        &self,
        conversation: &Conversation,
        user: &Message,
        assistant: &Message,
        snippets: &[Snippet],
        annotations: &Annotations,
    ) -> std::io::Result<()> {
        let record = InteractionRecord {
            conversation_id: conversation.id.clone(),
            scene: conversation.scene,
            locale: conversation.locale,
            user: user.content.clone(),
            assistant: assistant.content.clone(),
            snippet_urls: snippets.iter().map(|s| s.source_url.clone()).collect(),
            degraded: annotations.degraded,
            at: assistant.created_at,
        };
        let mut line = serde_json::to_vec(&record)?;
        line.push(b'\n');
        self.file.lock().write_all(&line)
    }
}
