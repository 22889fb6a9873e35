//! Service configuration: TOML file, then `SANVAAD_*` environment overrides.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::ServiceError;

pub const ENV_MODEL: &str = "SANVAAD_MODEL";
pub const ENV_PORT: &str = "SANVAAD_PORT";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServiceConfig {
    pub host: String,
    pub port: u16,
    pub model: PathBuf,
    pub dictionary: PathBuf,
    pub store_dir: PathBuf,
    pub top_k: usize,
    /// Replaces the dictionary's own stop keywords when set.
    pub stop_keywords: Option<Vec<String>>,
    /// Largest accepted request body or stream message, in bytes.
    pub max_message_bytes: usize,
    /// Frames a stream connection may have waiting before new ones are dropped.
    pub queue_capacity: usize,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        Self {
            host: "127.0.0.1".into(),
            port: 8080,
            model: "model.snvd".into(),
            dictionary: "data/dictionary.json".into(),
            store_dir: "data".into(),
            top_k: 3,
            stop_keywords: None,
            max_message_bytes: 64 * 1024,
            queue_capacity: 32,
        }
    }
}

impl ServiceConfig {
    pub fn from_toml(text: &str) -> Result<Self, String> {
        toml::from_str(text).map_err(|e| e.to_string())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ServiceError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| ServiceError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_toml(&text).map_err(|message| ServiceError::Config {
            path: path.to_path_buf(),
            message,
        })
    }

    /// Applies overrides from `lookup`, normally the process environment.
    pub fn apply_overrides(&mut self, lookup: impl Fn(&str) -> Option<String>) -> Result<(), ServiceError> {
        if let Some(model) = lookup(ENV_MODEL) {
            self.model = model.into();
        }
        if let Some(port) = lookup(ENV_PORT) {
            self.port = port.trim().parse().map_err(|_| ServiceError::Env {
                var: ENV_PORT,
                value: port,
            })?;
        }
        Ok(())
    }

    pub fn apply_env(&mut self) -> Result<(), ServiceError> {
        self.apply_overrides(|k| std::env::var(k).ok())
    }

    pub fn validate(&self) -> Result<(), ServiceError> {
        if self.top_k == 0 || self.queue_capacity == 0 || self.max_message_bytes == 0 {
            return Err(ServiceError::Invalid(
                "top_k, queue_capacity and max_message_bytes must be positive".into(),
            ));
        }
        for (what, path) in [
            ("model", &self.model),
            ("dictionary", &self.dictionary),
            ("news store directory", &self.store_dir),
        ] {
            if !path.exists() {
                return Err(ServiceError::Missing {
                    what,
                    path: path.clone(),
                });
            }
        }
        Ok(())
    }

    pub fn bind_address(&self) -> String {
        format!("{}:{}", self.host, self.port)
    }
}
