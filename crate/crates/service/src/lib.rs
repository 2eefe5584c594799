//! HTTP/JSON facade over the corpus and the estimation engine.
//!
//! Read endpoints are open; `POST /ingest` needs `Authorization: Bearer
//! <token>` matching the configured token. Every request binds one corpus
//! snapshot.

use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;

use axum::body::{Body, Bytes};
use axum::extract::{DefaultBodyLimit, State};
use axum::http::{header, HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use futures_util::TryStreamExt;
use indemnity_core::corpus::{CohortFilter, IngestReport, Store};
use indemnity_core::pipeline;
use indemnity_core::wire::{
    CohortSummaryWire, ErrorBody, EstimateRequestWire, EstimateResponse, HealthResponse,
};
use indemnity_core::Error;
use serde::de::DeserializeOwned;
use tokio_util::io::{StreamReader, SyncIoBridge};

pub const ENV_LISTEN: &str = "INDEMNITY_LISTEN";
pub const ENV_STORE: &str = "INDEMNITY_STORE";
pub const ENV_TOKEN: &str = "INDEMNITY_TOKEN";
pub const DEFAULT_LISTEN: &str = "127.0.0.1:8080";
pub const DEFAULT_STORE: &str = "indemnity.redb";

#[derive(Clone, Debug)]
pub struct Config {
    pub listen: SocketAddr,
    pub store: PathBuf,
    /// `None` disables ingestion over HTTP.
    pub token: Option<String>,
}

impl Config {
    pub fn from_env() -> Result<Config, String> {
        let listen = std::env::var(ENV_LISTEN).unwrap_or_else(|_| DEFAULT_LISTEN.to_string());
        let listen = listen
            .parse()
            .map_err(|e| format!("{ENV_LISTEN}={listen}: {e}"))?;
        let store =
            std::env::var_os(ENV_STORE).map_or_else(|| PathBuf::from(DEFAULT_STORE), PathBuf::from);
        let token = std::env::var(ENV_TOKEN).ok().filter(|t| !t.is_empty());
        Ok(Config {
            listen,
            store,
            token,
        })
    }
}

#[derive(Clone)]
pub struct AppState {
    pub store: Arc<Store>,
    pub token: Option<Arc<str>>,
}

impl AppState {
    pub fn new(store: Arc<Store>, token: Option<String>) -> Self {
        AppState {
            store,
            token: token.map(Into::into),
        }
    }
}

/// An error on its way to the client.
#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    body: ErrorBody,
}

impl ApiError {
    fn new(status: StatusCode, code: &str, message: impl Into<String>) -> Self {
        ApiError {
            status,
            body: ErrorBody {
                code: code.to_string(),
                message: message.into(),
                detail: None,
            },
        }
    }

    fn unauthorized(message: &str) -> Self {
        ApiError::new(StatusCode::UNAUTHORIZED, "Unauthorized", message)
    }
}

pub fn status_for(e: &Error) -> StatusCode {
    match e {
        Error::EmptyCohort => StatusCode::NOT_FOUND,
        Error::Conflict(_) => StatusCode::CONFLICT,
        Error::Domain(_)
        | Error::Invalid(_)
        | Error::Parse { .. }
        | Error::Schema(_)
        | Error::DegenerateCohort(_)
        | Error::InfeasibleMoments { .. }
        | Error::AmbiguousMode { .. }
        | Error::SingularDensity { .. } => StatusCode::UNPROCESSABLE_ENTITY,
        Error::Convergence(_) | Error::Storage(_) | Error::Io(_) => {
            StatusCode::INTERNAL_SERVER_ERROR
        }
    }
}

impl From<Error> for ApiError {
    fn from(e: Error) -> Self {
        ApiError {
            status: status_for(&e),
            body: ErrorBody::from(&e),
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        if self.status.is_server_error() {
            tracing::error!(code = %self.body.code, message = %self.body.message, "request failed");
        }
        let mut res = (self.status, Json(self.body)).into_response();
        if self.status == StatusCode::UNAUTHORIZED {
            res.headers_mut().insert(
                header::WWW_AUTHENTICATE,
                header::HeaderValue::from_static("Bearer"),
            );
        }
        res
    }
}

type ApiResult<T> = Result<T, ApiError>;

/// JSON body parsing with every failure reported as a 422 payload.
fn parse_body<T: DeserializeOwned>(body: &Bytes) -> ApiResult<T> {
    serde_json::from_slice(body).map_err(|e| {
        ApiError::new(
            StatusCode::UNPROCESSABLE_ENTITY,
            "ValidationError",
            format!("invalid request body: {e}"),
        )
    })
}

async fn blocking<T: Send + 'static>(
    f: impl FnOnce() -> indemnity_core::Result<T> + Send + 'static,
) -> ApiResult<T> {
    match tokio::task::spawn_blocking(f).await {
        Ok(r) => r.map_err(ApiError::from),
        Err(e) => Err(ApiError::new(
            StatusCode::INTERNAL_SERVER_ERROR,
            "InternalError",
            e.to_string(),
        )),
    }
}

async fn health(State(state): State<AppState>) -> ApiResult<Json<HealthResponse>> {
    let store = state.store.clone();
    let (corpus_version, record_count) = blocking(move || {
        let snap = store.snapshot()?;
        Ok((snap.version()?, snap.record_count()?))
    })
    .await?;
    Ok(Json(HealthResponse {
        status: "ok".into(),
        corpus_version,
        record_count,
    }))
}

async fn cohort_summary(
    State(state): State<AppState>,
    body: Bytes,
) -> ApiResult<Json<CohortSummaryWire>> {
    let filter: CohortFilter = parse_body(&body)?;
    let store = state.store.clone();
    let summary =
        blocking(move || pipeline::cohort_summary_wire(&store.snapshot()?, &filter)).await?;
    Ok(Json(summary))
}

async fn estimate(State(state): State<AppState>, body: Bytes) -> ApiResult<Json<EstimateResponse>> {
    let req: EstimateRequestWire = parse_body(&body)?;
    let store = state.store.clone();
    let response = blocking(move || pipeline::estimate_response(&store.snapshot()?, &req)).await?;
    Ok(Json(response))
}

fn constant_time_eq(a: &[u8], b: &[u8]) -> bool {
    a.len() == b.len() && a.iter().zip(b).fold(0u8, |acc, (x, y)| acc | (x ^ y)) == 0
}

fn authorize(state: &AppState, headers: &HeaderMap) -> ApiResult<()> {
    let Some(expected) = state.token.as_deref() else {
        return Err(ApiError::unauthorized(
            "ingestion is disabled: no token configured",
        ));
    };
    let presented = headers
        .get(header::AUTHORIZATION)
        .and_then(|v| v.to_str().ok())
        .and_then(|v| v.strip_prefix("Bearer "))
        .ok_or_else(|| ApiError::unauthorized("missing bearer token"))?;
    if constant_time_eq(presented.trim().as_bytes(), expected.as_bytes()) {
        Ok(())
    } else {
        Err(ApiError::unauthorized("invalid bearer token"))
    }
}

/// Streams a line-delimited body into the store.
async fn ingest(
    State(state): State<AppState>,
    headers: HeaderMap,
    body: Body,
) -> ApiResult<Json<IngestReport>> {
    authorize(&state, &headers)?;
    let stream = body.into_data_stream().map_err(std::io::Error::other);
    let reader = SyncIoBridge::new(StreamReader::new(stream));
    let store = state.store.clone();
    let report = blocking(move || store.ingest_reader(std::io::BufReader::new(reader))).await?;
    Ok(Json(report))
}

async fn not_found() -> ApiError {
    ApiError::new(StatusCode::NOT_FOUND, "NotFound", "no such endpoint")
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/health", get(health))
        .route("/cohort/summary", post(cohort_summary))
        .route("/estimate", post(estimate))
        .route("/ingest", post(ingest).layer(DefaultBodyLimit::disable()))
        .fallback(not_found)
        .with_state(state)
}

/// Binds and serves until ctrl-c.
pub async fn serve(config: Config) -> std::io::Result<()> {
    let store = Store::open(&config.store).map_err(std::io::Error::other)?;
    let state = AppState::new(Arc::new(store), config.token);
    let listener = tokio::net::TcpListener::bind(config.listen).await?;
    tracing::info!(addr = %listener.local_addr()?, store = %config.store.display(), "listening");
    axum::serve(listener, router(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}
