//! Game server for the sustainability game: accounts, seats, one model
//! micro-step per decision, rewards, record export and bot players.

pub mod api;
pub mod auth;
pub mod bots;
pub mod config;
pub mod error;
pub mod game;
pub mod registry;
pub mod replay;
pub mod rewards;

use std::future::Future;
use std::sync::Arc;

pub use config::{ConfigError, ServerConfig};
pub use error::ApiError;
pub use registry::Registry;

/// Serves on an already bound listener until `shutdown` resolves;
/// in-flight requests complete first.
pub async fn serve_on(
    listener: tokio::net::TcpListener,
    registry: Arc<Registry>,
    shutdown: impl Future<Output = ()> + Send + 'static,
) -> std::io::Result<()> {
    tracing::info!(addr = ?listener.local_addr()?, "serving");
    axum::serve(listener, api::router(registry))
        .with_graceful_shutdown(shutdown)
        .await
}

/// Resolves on Ctrl-C or SIGTERM.
pub async fn shutdown_signal() {
    let ctrl_c = async {
        let _ = tokio::signal::ctrl_c().await;
    };
    #[cfg(unix)]
    let term = async {
        if let Ok(mut s) = tokio::signal::unix::signal(tokio::signal::unix::SignalKind::terminate()) {
            s.recv().await;
        }
    };
    #[cfg(not(unix))]
    let term = std::future::pending::<()>();
    tokio::select! {
        _ = ctrl_c => {},
        _ = term => {},
    }
}
