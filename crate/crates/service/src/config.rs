//! Service configuration, read from a TOML file.

use std::net::SocketAddr;
use std::path::{Path, PathBuf};

use educhat_core::backend::DEFAULT_DEADLINE_MS;
use educhat_core::retrieval::RetrievalConfig;
use educhat_core::skills::EssaySchema;
use educhat_core::Locale;
use serde::{Deserialize, Serialize};

pub const DEFAULT_HISTORY_CHAR_BUDGET: usize = 12_000;
pub const DEFAULT_LISTEN: &str = "127.0.0.1:8080";

/// Endpoint value that wires in the scripted echo backend instead of HTTP.
pub const MOCK_ENDPOINT: &str = "mock";

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("invalid config: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("invalid config: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServiceConfig {
    pub listen: SocketAddr,
    pub locale: Locale,
    /// Prompt template file; the built-in templates when absent.
    pub template_path: Option<PathBuf>,
    /// Character budget for dialogue history sent to the backend.
    pub history_char_budget: usize,
    /// JSONL export of completed turns.
    pub interaction_log: Option<PathBuf>,
    pub store: StoreConfig,
    pub backend: BackendConfig,
    pub search: SearchConfig,
    pub retrieval: RetrievalConfig,
    pub essay: EssaySchema,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        Self {
            listen: DEFAULT_LISTEN.parse().unwrap(),
            locale: Locale::En,
            template_path: None,
            history_char_budget: DEFAULT_HISTORY_CHAR_BUDGET,
            interaction_log: None,
            store: StoreConfig::default(),
            backend: BackendConfig::default(),
            search: SearchConfig::default(),
            retrieval: RetrievalConfig::default(),
            essay: EssaySchema::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StoreConfig {
    /// Directory of per-conversation logs; in-memory when absent.
    pub path: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BackendConfig {
    pub endpoint: String,
    pub api_key: Option<String>,
    pub model: Option<String>,
    pub deadline_ms: u64,
    pub max_new_tokens: u32,
}

impl Default for BackendConfig {
    fn default() -> Self {
        Self {
            endpoint: MOCK_ENDPOINT.into(),
            api_key: None,
            model: None,
            deadline_ms: DEFAULT_DEADLINE_MS,
            max_new_tokens: 1024,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SearchConfig {
    /// Search provider URL. Retrieval turns are answered degraded without one.
    pub endpoint: Option<String>,
    pub api_key: Option<String>,
}

impl ServiceConfig {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let config: ServiceConfig = toml::from_str(text)?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ConfigError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let mut config = Self::from_toml(&text)?;
        // Relative paths are taken from the config file's directory.
        if let Some(dir) = path.parent() {
            for p in [
                &mut config.template_path,
                &mut config.interaction_log,
                &mut config.store.path,
            ]
            .into_iter()
            .flatten()
            {
                if p.is_relative() {
                    *p = dir.join(&*p);
                }
            }
        }
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.history_char_budget == 0 {
            return Err(ConfigError::Invalid("history_char_budget must be positive".into()));
        }
        if self.retrieval.k == 0 {
            return Err(ConfigError::Invalid("retrieval.k must be at least 1".into()));
        }
        if self.backend.endpoint.trim().is_empty() {
            return Err(ConfigError::Invalid("backend.endpoint must be set".into()));
        }
        Ok(())
    }
}
