//! HTTP analysis service: sessions over generation, selection and template
//! mining, persisted as one JSON document per session.

pub mod error;
pub mod mock;
pub mod routes;
pub mod session;
pub mod state;
pub mod store;

use std::future::Future;

pub use axum::Router;

pub use error::{ApiError, ErrorBody};
pub use mock::mock_backend_router;
pub use routes::router;
pub use session::AnalysisSession;
pub use state::{AppState, OpenError};

/// Environment variable naming the data directory.
pub const ENV_DATA_DIR: &str = "CFKIT_DATA_DIR";
pub const ENV_PORT: &str = "CFKIT_PORT";
pub const DEFAULT_PORT: u16 = 8080;

/// Serves `app` until `shutdown` resolves.
pub async fn serve(
    listener: tokio::net::TcpListener,
    app: Router,
    shutdown: impl Future<Output = ()> + Send + 'static,
) -> std::io::Result<()> {
    tracing::info!(addr = %listener.local_addr()?, "listening");
    axum::serve(listener, app).with_graceful_shutdown(shutdown).await
}
