use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::Deserialize;
use souschef_core::llm::{LiveConfig, LiveProvider};
use souschef_core::recipes::StaplesPolicy;
use souschef_core::{Gateway, MockProvider};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Read {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("invalid config: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("cannot load mock fixtures from {path}: {source}")]
    Fixtures {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ServiceConfig {
    #[serde(default = "default_listen")]
    pub listen: SocketAddr,
    pub store_path: PathBuf,
    #[serde(default)]
    pub staples: StaplesPolicy,
    #[serde(default = "default_history_budget")]
    pub history_budget: usize,
    #[serde(default = "default_llm_timeout_s")]
    pub llm_timeout_s: u64,
    pub provider: ProviderConfig,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ProviderConfig {
    Mock { fixtures: PathBuf },
    Live(LiveConfig),
}

fn default_listen() -> SocketAddr {
    SocketAddr::from(([127, 0, 0, 1], 8080))
}

fn default_history_budget() -> usize {
    souschef_core::assistant::DEFAULT_HISTORY_BUDGET
}

fn default_llm_timeout_s() -> u64 {
    60
}

impl ServiceConfig {
    /// Parses a TOML config. Relative paths are resolved against `base_dir`.
    pub fn from_toml(text: &str, base_dir: &Path) -> Result<Self, ConfigError> {
        let mut config: ServiceConfig = toml::from_str(text)?;
        config.store_path = base_dir.join(&config.store_path);
        if let ProviderConfig::Mock { fixtures } = &mut config.provider {
            *fixtures = base_dir.join(&*fixtures);
        }
        if config.history_budget < 2 {
            return Err(ConfigError::Invalid("history_budget must be at least 2".into()));
        }
        if config.llm_timeout_s == 0 {
            return Err(ConfigError::Invalid("llm_timeout_s must be positive".into()));
        }
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_toml(&text, path.parent().unwrap_or(Path::new(".")))
    }

    pub fn llm_timeout(&self) -> Duration {
        Duration::from_secs(self.llm_timeout_s)
    }

    pub fn build_gateway(&self) -> Result<Gateway, ConfigError> {
        match &self.provider {
            ProviderConfig::Mock { fixtures } => {
                let mock = MockProvider::from_dir(fixtures).map_err(|source| ConfigError::Fixtures {
                    path: fixtures.clone(),
                    source,
                })?;
                Ok(Gateway::new(mock))
            }
            ProviderConfig::Live(live) => {
                let provider = LiveProvider::new(live.clone()).map_err(|e| ConfigError::Invalid(e.to_string()))?;
                Ok(Gateway::new(provider))
            }
        }
    }
}
