//! HTTP front end of the dispatcher.

use std::net::SocketAddr;
use std::sync::Arc;
use std::time::Duration;

use axum::extract::rejection::JsonRejection;
use axum::extract::{DefaultBodyLimit, FromRequest, Request, State};
use axum::http::{header, HeaderValue, Method, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use repolens_core::dispatch::{ApiError, ChatRequest, Dispatcher, FeatureRequest};
use repolens_core::prompt::TaskKind;
use repolens_core::repo::SelectionSpan;
use repolens_core::response::FeatureResponse;
use serde::{Deserialize, Serialize};
use tokio::net::TcpListener;
use tokio::task::JoinHandle;
use tower_http::cors::{AllowOrigin, CorsLayer};

pub const BODY_LIMIT: usize = 2 * 1024 * 1024;
pub const GC_INTERVAL: Duration = Duration::from_secs(60);

pub struct ApiFailure(pub ApiError);

impl IntoResponse for ApiFailure {
    fn into_response(self) -> Response {
        let status = StatusCode::from_u16(self.0.http_status()).unwrap_or(StatusCode::INTERNAL_SERVER_ERROR);
        (status, Json(self.0)).into_response()
    }
}

impl From<ApiError> for ApiFailure {
    fn from(e: ApiError) -> Self {
        Self(e)
    }
}

/// `Json` whose rejections (bad syntax, wrong shape, oversized body) are
/// reported as `malformed_request`.
pub struct Body<T>(pub T);

impl<T, S> FromRequest<S> for Body<T>
where
    Json<T>: FromRequest<S, Rejection = JsonRejection>,
    S: Send + Sync,
{
    type Rejection = ApiFailure;

    async fn from_request(req: Request, state: &S) -> Result<Self, Self::Rejection> {
        match Json::<T>::from_request(req, state).await {
            Ok(Json(v)) => Ok(Body(v)),
            Err(rejection) => {
                let message = match &rejection {
                    JsonRejection::BytesRejection(_) => format!("request body unreadable or larger than {BODY_LIMIT} bytes"),
                    other => other.body_text(),
                };
                Err(ApiFailure(ApiError::malformed(message)))
            }
        }
    }
}

/// Feature request body; the task comes from the route.
#[derive(Debug, Deserialize)]
pub struct FeatureBody {
    pub repo_url: String,
    #[serde(default)]
    pub file_path: Option<String>,
    #[serde(default)]
    pub selection: Option<SelectionSpan>,
    #[serde(default)]
    pub session_id: Option<String>,
}

#[derive(Debug, Serialize, Deserialize, PartialEq, Eq)]
pub struct Health {
    pub status: String,
    pub version: String,
}

type Shared = State<Arc<Dispatcher>>;
type Reply = Result<Json<FeatureResponse>, ApiFailure>;

async fn run(d: &Dispatcher, task: TaskKind, body: FeatureBody) -> Reply {
    let req = FeatureRequest {
        task,
        repo_url: body.repo_url,
        file_path: body.file_path,
        selection: body.selection,
        session_id: body.session_id,
    };
    Ok(Json(d.handle_feature(req).await?))
}

async fn explain_file(State(d): Shared, Body(b): Body<FeatureBody>) -> Reply {
    run(&d, TaskKind::ExplainFile, b).await
}

async fn explain_selection(State(d): Shared, Body(b): Body<FeatureBody>) -> Reply {
    run(&d, TaskKind::ExplainSelection, b).await
}

async fn refactor(State(d): Shared, Body(b): Body<FeatureBody>) -> Reply {
    run(&d, TaskKind::Refactor, b).await
}

async fn quality(State(d): Shared, Body(b): Body<FeatureBody>) -> Reply {
    run(&d, TaskKind::QualityAttributes, b).await
}

async fn chat(State(d): Shared, Body(b): Body<ChatRequest>) -> Reply {
    Ok(Json(d.handle_chat(b).await?))
}

async fn health() -> Json<Health> {
    Json(Health { status: "ok".into(), version: env!("CARGO_PKG_VERSION").into() })
}

async fn not_found() -> ApiFailure {
    ApiFailure(ApiError::malformed("no such endpoint"))
}

fn cors(origins: &[String]) -> CorsLayer {
    let allowed: Vec<HeaderValue> = origins.iter().filter_map(|o| HeaderValue::from_str(o).ok()).collect();
    CorsLayer::new()
        .allow_origin(AllowOrigin::list(allowed))
        .allow_methods([Method::GET, Method::POST])
        .allow_headers([header::CONTENT_TYPE])
}

pub fn router(dispatcher: Arc<Dispatcher>, cors_origins: &[String]) -> Router {
    Router::new()
        .route("/v1/explain/file", post(explain_file))
        .route("/v1/explain/selection", post(explain_selection))
        .route("/v1/refactor", post(refactor))
        .route("/v1/quality", post(quality))
        .route("/v1/chat", post(chat))
        .route("/v1/health", get(health))
        .fallback(not_found)
        .layer(DefaultBodyLimit::max(BODY_LIMIT))
        .layer(cors(cors_origins))
        .with_state(dispatcher)
}

/// Sweeps idle sessions every `every` until the task is aborted.
pub fn spawn_gc(dispatcher: Arc<Dispatcher>, every: Duration) -> JoinHandle<()> {
    tokio::spawn(async move {
        let mut tick = tokio::time::interval(every);
        tick.tick().await;
        loop {
            tick.tick().await;
            dispatcher.session_gc(chrono::Utc::now());
        }
    })
}

/// Binds `addr` and serves in the background; returns the bound address.
pub async fn spawn(dispatcher: Arc<Dispatcher>, cors_origins: &[String], addr: &str) -> std::io::Result<(SocketAddr, JoinHandle<()>)> {
    let listener = TcpListener::bind(addr).await?;
    let local = listener.local_addr()?;
    let app = router(dispatcher, cors_origins);
    let handle = tokio::spawn(async move {
        if let Err(e) = axum::serve(listener, app).await {
            tracing::error!(error = %e, "server stopped");
        }
    });
    Ok((local, handle))
}

/// Serves until ctrl-c.
pub async fn serve(dispatcher: Arc<Dispatcher>, cors_origins: &[String], addr: &str) -> std::io::Result<()> {
    let listener = TcpListener::bind(addr).await?;
    tracing::info!(addr = %listener.local_addr()?, "listening");
    let gc = spawn_gc(dispatcher.clone(), GC_INTERVAL);
    let app = router(dispatcher, cors_origins);
    let result = axum::serve(listener, app)
        .with_graceful_shutdown(async {
            tokio::signal::ctrl_c().await.ok();
        })
        .await;
    gc.abort();
    result
}

pub fn init_tracing() {
    use tracing_subscriber::EnvFilter;
    let filter = EnvFilter::try_from_env("REPOLENS_LOG").unwrap_or_else(|_| EnvFilter::new("info"));
    tracing_subscriber::fmt().with_env_filter(filter).with_target(false).try_init().ok();
}
