//! Server configuration: one TOML file, each key overridable by an
//! `SSG_*` environment variable.
//!
//! | key             | env                | default          |
//! |-----------------|--------------------|------------------|
//! | `listen`        | `SSG_LISTEN`       | `127.0.0.1:8080` |
//! | `data_dir`      | `SSG_DATA_DIR`     | `ssg-data`       |
//! | `epsilon`       | `SSG_EPSILON`      | `0.001`          |
//! | `rate_limit_ms` | `SSG_RATE_LIMIT_MS`| `1000`           |
//! | `admin_users`   | `SSG_ADMIN_USERS`  | empty (comma list in env) |

use std::net::SocketAddr;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use ssg_core::abm::DEFAULT_DEPLETION;

#[derive(Debug, Error, PartialEq)]
#[error("config key `{key}`: {message}")]
pub struct ConfigError {
    pub key: String,
    pub message: String,
}

fn err(key: &str, message: impl Into<String>) -> ConfigError {
    ConfigError {
        key: key.into(),
        message: message.into(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ServerConfig {
    pub listen: String,
    pub data_dir: PathBuf,
    /// Resource level below which a running game stops.
    pub epsilon: f64,
    /// Minimum interval between two decisions of one player; 0 disables.
    pub rate_limit_ms: u64,
    /// Accounts registered under these names get the admin role.
    pub admin_users: Vec<String>,
}

impl Default for ServerConfig {
    fn default() -> Self {
        Self {
            listen: "127.0.0.1:8080".into(),
            data_dir: PathBuf::from("ssg-data"),
            epsilon: DEFAULT_DEPLETION,
            rate_limit_ms: 1000,
            admin_users: Vec::new(),
        }
    }
}

const KEYS: [&str; 5] = ["listen", "data_dir", "epsilon", "rate_limit_ms", "admin_users"];

impl ServerConfig {
    /// Defaults, then the file (if any), then the process environment.
    pub fn load(path: Option<&Path>) -> Result<Self, ConfigError> {
        let mut cfg = Self::default();
        if let Some(path) = path {
            let text = std::fs::read_to_string(path).map_err(|e| err("<file>", format!("{}: {e}", path.display())))?;
            cfg.apply_toml(&text)?;
        }
        cfg.apply_env(|k| std::env::var(k).ok())?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn apply_toml(&mut self, text: &str) -> Result<(), ConfigError> {
        let table: toml::Table = text.parse().map_err(|e: toml::de::Error| err("<file>", e.message()))?;
        for (key, value) in table {
            let bad = |what: &str| err(&key, format!("expected {what}"));
            match key.as_str() {
                "listen" => self.listen = value.as_str().ok_or_else(|| bad("a string"))?.to_string(),
                "data_dir" => self.data_dir = PathBuf::from(value.as_str().ok_or_else(|| bad("a string"))?),
                "epsilon" => {
                    self.epsilon = value
                        .as_float()
                        .or_else(|| value.as_integer().map(|i| i as f64))
                        .ok_or_else(|| bad("a number"))?
                }
                "rate_limit_ms" => {
                    self.rate_limit_ms = value
                        .as_integer()
                        .and_then(|i| u64::try_from(i).ok())
                        .ok_or_else(|| bad("a non-negative integer"))?
                }
                "admin_users" => {
                    self.admin_users = value
                        .as_array()
                        .and_then(|a| a.iter().map(|v| v.as_str().map(String::from)).collect())
                        .ok_or_else(|| bad("an array of strings"))?
                }
                _ => return Err(err(&key, format!("unknown key; expected one of {}", KEYS.join(", ")))),
            }
        }
        Ok(())
    }

    pub fn apply_env(&mut self, get: impl Fn(&str) -> Option<String>) -> Result<(), ConfigError> {
        if let Some(v) = get("SSG_LISTEN") {
            self.listen = v;
        }
        if let Some(v) = get("SSG_DATA_DIR") {
            self.data_dir = PathBuf::from(v);
        }
        if let Some(v) = get("SSG_EPSILON") {
            self.epsilon = v.trim().parse().map_err(|_| err("SSG_EPSILON", "expected a number"))?;
        }
        if let Some(v) = get("SSG_RATE_LIMIT_MS") {
            self.rate_limit_ms = v
                .trim()
                .parse()
                .map_err(|_| err("SSG_RATE_LIMIT_MS", "expected a non-negative integer"))?;
        }
        if let Some(v) = get("SSG_ADMIN_USERS") {
            self.admin_users = v.split(',').map(str::trim).filter(|s| !s.is_empty()).map(String::from).collect();
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.listen_addr()?;
        if !(self.epsilon.is_finite() && (0.0..1.0).contains(&self.epsilon)) {
            return Err(err("epsilon", format!("must lie in [0, 1), got {}", self.epsilon)));
        }
        Ok(())
    }

    pub fn listen_addr(&self) -> Result<SocketAddr, ConfigError> {
        self.listen
            .parse()
            .map_err(|_| err("listen", format!("not a socket address: {:?}", self.listen)))
    }
}
