//! Conversation persistence.
//!
//! [`FileStore`] keeps one JSONL log per conversation: a `created` record
//! followed by one `message` record per appended turn. The whole directory
//! is replayed into memory at open; reads never touch the disk.

use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use chrono::{DateTime, Utc};
use educhat_core::prompt::{FunctionScene, ToolOverrides};
use educhat_core::Locale;
use parking_lot::{Mutex, RwLock};
use serde::{Deserialize, Serialize};
use tracing::warn;

use crate::conversation::{AppendError, Conversation, ConversationSummary, Turn};

#[derive(Debug, thiserror::Error)]
pub enum StoreError {
    #[error("conversation {0} not found")]
    NotFound(String),
    #[error("conversation {0} already exists")]
    AlreadyExists(String),
    #[error(transparent)]
    Append(#[from] AppendError),
    #[error("not a new conversation: {0}")]
    NotNew(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path} line {line}: {reason}")]
    Corrupt {
        path: PathBuf,
        line: usize,
        reason: String,
    },
}

/// Create/get/list/append/delete over conversations. An acknowledged append
/// is visible to every later `get` of that conversation.
pub trait ConversationStore: Send + Sync {
    /// Stores a new conversation, which must have no messages yet.
    fn create(&self, conversation: &Conversation) -> Result<(), StoreError>;
    fn get(&self, id: &str) -> Result<Conversation, StoreError>;
    /// Newest first.
    fn list(&self) -> Result<Vec<ConversationSummary>, StoreError>;
    /// Appends one turn atomically, or nothing on error.
    fn append(&self, id: &str, turn: Turn) -> Result<(), StoreError>;
    /// Removing a missing conversation succeeds.
    fn delete(&self, id: &str) -> Result<(), StoreError>;
}

/// One line of a conversation log.
#[derive(Debug, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
enum Record {
    Created {
        id: String,
        scene: FunctionScene,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        overrides: Option<ToolOverrides>,
        locale: Locale,
        created_at: DateTime<Utc>,
    },
    Message(Turn),
}

struct Entry {
    conversation: Conversation,
    deleted: bool,
}

/// The in-memory table shared by both stores. Each conversation has its own
/// lock so appends to different conversations do not contend.
#[derive(Default)]
struct Table {
    entries: RwLock<HashMap<String, Arc<Mutex<Entry>>>>,
}

impl Table {
    fn entry(&self, id: &str) -> Result<Arc<Mutex<Entry>>, StoreError> {
        self.entries
            .read()
            .get(id)
            .cloned()
            .ok_or_else(|| StoreError::NotFound(id.to_string()))
    }

    fn insert(&self, conversation: Conversation, persist: impl FnOnce() -> Result<(), StoreError>) -> Result<(), StoreError> {
        let mut entries = self.entries.write();
        if entries.contains_key(&conversation.id) {
            return Err(StoreError::AlreadyExists(conversation.id));
        }
        persist()?;
        entries.insert(
            conversation.id.clone(),
            Arc::new(Mutex::new(Entry {
                conversation,
                deleted: false,
            })),
        );
        Ok(())
    }

    fn get(&self, id: &str) -> Result<Conversation, StoreError> {
        let entry = self.entry(id)?;
        let entry = entry.lock();
        if entry.deleted {
            return Err(StoreError::NotFound(id.to_string()));
        }
        Ok(entry.conversation.clone())
    }

    fn list(&self) -> Vec<ConversationSummary> {
        let entries: Vec<_> = self.entries.read().values().cloned().collect();
        let mut out: Vec<ConversationSummary> = entries
            .iter()
            .filter_map(|e| {
                let e = e.lock();
                (!e.deleted).then(|| e.conversation.summary())
            })
            .collect();
        out.sort_by(|a, b| b.created_at.cmp(&a.created_at).then_with(|| a.id.cmp(&b.id)));
        out
    }

    fn append(&self, id: &str, turn: Turn, persist: impl FnOnce(&Turn) -> Result<(), StoreError>) -> Result<(), StoreError> {
        let entry = self.entry(id)?;
        let mut entry = entry.lock();
        if entry.deleted {
            return Err(StoreError::NotFound(id.to_string()));
        }
        entry.conversation.check(&turn)?;
        persist(&turn)?;
        entry.conversation.apply(turn)?;
        Ok(())
    }

    fn delete(&self, id: &str, persist: impl FnOnce() -> Result<(), StoreError>) -> Result<(), StoreError> {
        let Ok(entry) = self.entry(id) else {
            return Ok(());
        };
        let mut guard = entry.lock();
        if !guard.deleted {
            persist()?;
            guard.deleted = true;
        }
        drop(guard);
        self.entries.write().remove(id);
        Ok(())
    }
}

#[derive(Default)]
pub struct MemoryStore {
    table: Table,
}

impl MemoryStore {
    pub fn new() -> Self {
        Self::default()
    }
}

impl ConversationStore for MemoryStore {
    fn create(&self, conversation: &Conversation) -> Result<(), StoreError> {
        check_new(conversation)?;
        self.table.insert(conversation.clone(), || Ok(()))
    }

    fn get(&self, id: &str) -> Result<Conversation, StoreError> {
        self.table.get(id)
    }

    fn list(&self) -> Result<Vec<ConversationSummary>, StoreError> {
        Ok(self.table.list())
    }

    fn append(&self, id: &str, turn: Turn) -> Result<(), StoreError> {
        self.table.append(id, turn, |_| Ok(()))
    }

    fn delete(&self, id: &str) -> Result<(), StoreError> {
        self.table.delete(id, || Ok(()))
    }
}

fn check_new(conversation: &Conversation) -> Result<(), StoreError> {
    let Conversation {
        id,
        messages,
        snippets_by_message,
        annotations_by_message,
        ..
    } = conversation;
    let safe = !id.is_empty() && id.chars().all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_');
    if !safe || !messages.is_empty() || !snippets_by_message.is_empty() || !annotations_by_message.is_empty() {
        return Err(StoreError::NotNew(format!("{id:?} must be empty, with an id of letters, digits, - and _")));
    }
    Ok(())
}

/// Append-log store in a directory, one `<id>.jsonl` per conversation.
pub struct FileStore {
    dir: PathBuf,
    table: Table,
}

impl FileStore {
    /// Opens `dir`, creating it if needed, and replays every log in it.
    pub fn open(dir: impl Into<PathBuf>) -> Result<Self, StoreError> {
        let dir = dir.into();
        let io = |source| StoreError::Io {
            path: dir.clone(),
            source,
        };
        std::fs::create_dir_all(&dir).map_err(io)?;
        let table = Table::default();
        for item in std::fs::read_dir(&dir).map_err(io)? {
            let path = item.map_err(io)?.path();
            if path.extension().and_then(|e| e.to_str()) != Some("jsonl") {
                continue;
            }
            let conversation = replay(&path)?;
            table.insert(conversation, || Ok(()))?;
        }
        Ok(Self { dir, table })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    fn path(&self, id: &str) -> PathBuf {
        self.dir.join(format!("{id}.jsonl"))
    }
}

fn line_of(record: &Record) -> Vec<u8> {
    let mut line = serde_json::to_vec(record).expect("records serialize");
    line.push(b'\n');
    line
}

fn write_line(file: &mut File, path: &Path, line: &[u8]) -> Result<(), StoreError> {
    file.write_all(line)
        .and_then(|_| file.sync_data())
        .map_err(|source| StoreError::Io {
            path: path.to_path_buf(),
            source,
        })
}

/// Rebuilds a conversation from its log. A final line without its newline
/// is a write cut short by a crash: it is dropped and the file trimmed so
/// later appends start on a clean line.
fn replay(path: &Path) -> Result<Conversation, StoreError> {
    let io = |source| StoreError::Io {
        path: path.to_path_buf(),
        source,
    };
    let bytes = std::fs::read(path).map_err(io)?;
    let corrupt = |line: usize, reason: String| StoreError::Corrupt {
        path: path.to_path_buf(),
        line,
        reason,
    };

    let complete = bytes.iter().rposition(|b| *b == b'\n').map_or(0, |i| i + 1);
    if complete < bytes.len() {
        warn!(path = %path.display(), "dropping incomplete final record");
        OpenOptions::new()
            .write(true)
            .open(path)
            .and_then(|f| f.set_len(complete as u64))
            .map_err(io)?;
    }
    let text = std::str::from_utf8(&bytes[..complete]).map_err(|e| corrupt(0, e.to_string()))?;

    let mut conversation: Option<Conversation> = None;
    for (i, line) in text.lines().enumerate() {
        let n = i + 1;
        let record: Record = serde_json::from_str(line).map_err(|e| corrupt(n, e.to_string()))?;
        match (record, conversation.as_mut()) {
            (
                Record::Created {
                    id,
                    scene,
                    overrides,
                    locale,
                    created_at,
                },
                None,
            ) => {
                let mut c = Conversation::new(scene, overrides, locale, created_at);
                c.id = id;
                conversation = Some(c);
            }
            (Record::Message(turn), Some(c)) => c.apply(turn).map_err(|e| corrupt(n, e.to_string()))?,
            (Record::Created { .. }, Some(_)) => return Err(corrupt(n, "second created record".into())),
            (Record::Message(_), None) => return Err(corrupt(n, "message before created record".into())),
        }
    }
    let conversation = conversation.ok_or_else(|| corrupt(1, "empty log".into()))?;
    if path.file_stem().and_then(|s| s.to_str()) != Some(conversation.id.as_str()) {
        return Err(corrupt(1, format!("log holds conversation {}", conversation.id)));
    }
    Ok(conversation)
}

impl ConversationStore for FileStore {
    fn create(&self, conversation: &Conversation) -> Result<(), StoreError> {
        check_new(conversation)?;
        let path = self.path(&conversation.id);
        let record = Record::Created {
            id: conversation.id.clone(),
            scene: conversation.scene,
            overrides: conversation.overrides,
            locale: conversation.locale,
            created_at: conversation.created_at,
        };
        self.table.insert(conversation.clone(), || {
            let mut file = OpenOptions::new()
                .write(true)
                .create_new(true)
                .open(&path)
                .map_err(|source| StoreError::Io {
                    path: path.clone(),
                    source,
                })?;
            write_line(&mut file, &path, &line_of(&record))
        })
    }

    fn get(&self, id: &str) -> Result<Conversation, StoreError> {
        self.table.get(id)
    }

    fn list(&self) -> Result<Vec<ConversationSummary>, StoreError> {
        Ok(self.table.list())
    }

    fn append(&self, id: &str, turn: Turn) -> Result<(), StoreError> {
        let path = self.path(id);
        self.table.append(id, turn, |turn| {
            let mut file = OpenOptions::new()
                .append(true)
                .open(&path)
                .map_err(|source| StoreError::Io {
                    path: path.clone(),
                    source,
                })?;
            let line = line_of(&Record::Message(turn.clone()));
            write_line(&mut file, &path, &line)
        })
    }

    fn delete(&self, id: &str) -> Result<(), StoreError> {
        let path = self.path(id);
        self.table.delete(id, || match std::fs::remove_file(&path) {
            Err(e) if e.kind() != std::io::ErrorKind::NotFound => Err(StoreError::Io { path, source: e }),
            _ => Ok(()),
        })
    }
}
