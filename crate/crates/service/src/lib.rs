//! HTTP/JSON service for interactive morphing projects.
//!
//! Each project lives in its own directory under the service root and is a
//! regular pipeline project, so the CLI can inspect its artifacts. Training
//! runs on a blocking thread, one job per project at a time; frame and path
//! queries read the models published by the last finished job.

mod error;
mod routes;
mod state;
mod trainer;

use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use axum::extract::DefaultBodyLimit;
use axum::http::{HeaderName, HeaderValue};
use axum::routing::{get, post, put};
use axum::Router;
use neurowarp_client::api::{CACHE_HEADER, VERSION_HEADER};
use tokio::net::TcpListener;
use tokio::sync::oneshot;
use tokio::task::JoinHandle;
use tower_http::cors::{AllowOrigin, Any, CorsLayer};

pub use error::ApiError;
pub use state::default_project_config;

const MAX_UPLOAD: usize = 64 << 20;

#[derive(Debug, thiserror::Error)]
pub enum ServiceError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{0}: bad project record: {1}")]
    Record(PathBuf, String),

    #[error("invalid CORS origin {0:?}")]
    Origin(String),

    #[error("default config: {0}")]
    Config(#[from] neurowarp_pipeline::Error),

    #[error("cannot listen on {addr}: {source}")]
    Bind {
        addr: SocketAddr,
        #[source]
        source: std::io::Error,
    },
}

impl ServiceError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        ServiceError::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}

#[derive(Clone, Debug)]
pub struct ServiceConfig {
    pub addr: SocketAddr,
    /// Directory holding one subdirectory per project.
    pub root: PathBuf,
    /// Allowed browser origins; empty allows any.
    pub cors_origins: Vec<String>,
    /// Overrides applied to the default config of every new project.
    pub defaults: Vec<String>,
}

impl ServiceConfig {
    pub fn new(addr: SocketAddr, root: impl Into<PathBuf>) -> Self {
        ServiceConfig {
            addr,
            root: root.into(),
            cors_origins: Vec::new(),
            defaults: Vec::new(),
        }
    }
}

/// Builds the router, loading any projects already under the root.
pub fn router(config: &ServiceConfig) -> Result<Router, ServiceError> {
    let mut base = default_project_config();
    if !config.defaults.is_empty() {
        base = neurowarp_pipeline::ProjectConfig::from_toml_with(&base.to_toml(), &config.defaults)?;
        base.validate()?;
    }
    let app = Arc::new(state::AppState::open(config.root.clone(), base)?);
    Ok(Router::new()
        .route("/health", get(routes::health))
        .route("/projects", post(routes::create).get(routes::list))
        .route("/projects/{id}", get(routes::project))
        .route("/projects/{id}/images/{index}", put(routes::put_image).get(routes::get_image))
        .route("/projects/{id}/landmarks", put(routes::put_landmarks).get(routes::get_landmarks))
        .route("/projects/{id}/train", post(routes::train))
        .route("/projects/{id}/job", get(routes::job))
        .route("/projects/{id}/frame", get(routes::frame))
        .route("/projects/{id}/paths", get(routes::paths))
        .layer(DefaultBodyLimit::max(MAX_UPLOAD))
        .layer(cors(&config.cors_origins)?)
        .with_state(app))
}

fn cors(origins: &[String]) -> Result<CorsLayer, ServiceError> {
    let allow = if origins.is_empty() {
        AllowOrigin::from(Any)
    } else {
        let parsed = origins
            .iter()
            .map(|o| HeaderValue::from_str(o).map_err(|_| ServiceError::Origin(o.clone())))
            .collect::<Result<Vec<_>, _>>()?;
        AllowOrigin::list(parsed)
    };
    Ok(CorsLayer::new()
        .allow_origin(allow)
        .allow_methods(Any)
        .allow_headers(Any)
        .expose_headers([
            HeaderName::from_static(VERSION_HEADER),
            HeaderName::from_static(CACHE_HEADER),
        ]))
}

/// A server running on the current tokio runtime.
pub struct RunningService {
    addr: SocketAddr,
    shutdown: Option<oneshot::Sender<()>>,
    task: JoinHandle<std::io::Result<()>>,
}

impl RunningService {
    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn url(&self) -> String {
        format!("http://{}", self.addr)
    }

    /// Runs until the server exits on its own.
    pub async fn wait(mut self) -> std::io::Result<()> {
        self.shutdown.take();
        match (&mut self.task).await {
            Ok(result) => result,
            Err(e) => Err(std::io::Error::other(e)),
        }
    }

    /// Stops accepting connections and waits for open requests to finish.
    pub async fn stop(mut self) -> std::io::Result<()> {
        if let Some(tx) = self.shutdown.take() {
            let _ = tx.send(());
        }
        match (&mut self.task).await {
            Ok(result) => result,
            Err(e) => Err(std::io::Error::other(e)),
        }
    }
}

/// Binds `config.addr` (port 0 picks a free port) and starts serving.
pub async fn start(config: &ServiceConfig) -> Result<RunningService, ServiceError> {
    let app = router(config)?;
    let listener = TcpListener::bind(config.addr).await.map_err(|source| ServiceError::Bind {
        addr: config.addr,
        source,
    })?;
    let addr = listener.local_addr().map_err(|source| ServiceError::Bind {
        addr: config.addr,
        source,
    })?;
    let (tx, rx) = oneshot::channel::<()>();
    let task = tokio::spawn(async move {
        axum::serve(listener, app)
            .with_graceful_shutdown(async move {
                if rx.await.is_err() {
                    std::future::pending::<()>().await;
                }
            })
            .await
    });
    tracing::info!("listening on http://{addr}");
    Ok(RunningService {
        addr,
        shutdown: Some(tx),
        task,
    })
}
