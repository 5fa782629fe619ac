//! HTTP/JSON front end for the sous-chef assistant: profiles, sessions,
//! scans, recipes, chat, step checks, timers and catalogs, persisted to a
//! JSON-lines journal.

pub mod api;
pub mod config;
pub mod error;
pub mod state;
pub mod store;
pub mod timers;

use std::time::Duration;

pub use api::router;
pub use config::ServiceConfig;
pub use error::ApiError;
pub use state::{AppState, Clock, IdStyle, ManualClock, Settings, SystemClock};

/// Interval between timer scheduler ticks.
pub const TICK: Duration = Duration::from_millis(250);

#[derive(Debug, thiserror::Error)]
pub enum ServeError {
    #[error(transparent)]
    Config(#[from] config::ConfigError),
    #[error(transparent)]
    Store(#[from] store::StoreError),
    #[error("cannot bind {addr}: {source}")]
    Bind {
        addr: std::net::SocketAddr,
        source: std::io::Error,
    },
    #[error("server error: {0}")]
    Io(#[from] std::io::Error),
}

/// Builds state from `config` and serves until ctrl-c.
pub async fn serve(config: ServiceConfig) -> Result<(), ServeError> {
    let gateway = config.build_gateway()?;
    let (state, errors) = AppState::builder(gateway)
        .settings(Settings::from(&config))
        .open(&config.store_path)?;
    if !errors.is_empty() {
        tracing::warn!(count = errors.len(), "store loaded with corrupt records skipped");
    }
    let scheduler = state.spawn_scheduler(TICK);
    let listener = tokio::net::TcpListener::bind(config.listen)
        .await
        .map_err(|source| ServeError::Bind {
            addr: config.listen,
            source,
        })?;
    tracing::info!(addr = %config.listen, provider = ?state.gateway().kind(), "listening");
    axum::serve(listener, router(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
    scheduler.abort();
    Ok(())
}
