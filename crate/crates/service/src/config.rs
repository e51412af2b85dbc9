use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::error::ServiceError;

pub const LISTEN_ENV: &str = "SMARTDRILL_LISTEN";
pub const DATASET_DIR_ENV: &str = "SMARTDRILL_DATASET_DIR";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServiceConfig {
    pub listen: String,
    /// Default sample memory of new sessions, in tuples.
    pub memory: usize,
    /// Default minimum sample size of new sessions.
    pub min_ss: usize,
    /// Relative dataset paths resolve against this directory.
    pub dataset_dir: PathBuf,
    pub session_ttl_secs: u64,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        ServiceConfig {
            listen: "127.0.0.1:8080".into(),
            memory: 50_000,
            min_ss: 5000,
            dataset_dir: PathBuf::from("."),
            session_ttl_secs: 30 * 60,
        }
    }
}

impl ServiceConfig {
    pub fn parse(text: &str) -> Result<Self, ServiceError> {
        toml::from_str(text).map_err(|e| ServiceError::Config(e.to_string()))
    }

    /// Reads `path` (defaults when `None`), then applies environment overrides.
    pub fn load(path: Option<&Path>) -> Result<Self, ServiceError> {
        let mut cfg = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| ServiceError::Config(format!("cannot read {}: {e}", p.display())))?;
                Self::parse(&text)?
            }
            None => Self::default(),
        };
        cfg.apply_env(|k| std::env::var(k).ok());
        Ok(cfg)
    }

    pub fn apply_env(&mut self, get: impl Fn(&str) -> Option<String>) {
        if let Some(v) = get(LISTEN_ENV) {
            self.listen = v;
        }
        if let Some(v) = get(DATASET_DIR_ENV) {
            self.dataset_dir = PathBuf::from(v);
        }
    }

    pub fn session_ttl(&self) -> Duration {
        Duration::from_secs(self.session_ttl_secs)
    }
}
