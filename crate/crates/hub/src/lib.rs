//! HTTP+JSON API of the transparency hub.
//!
//! Mutating routes require `Authorization: Bearer <token>` when a token is
//! configured. The push hook instead checks a shared secret sent in
//! `X-Tira-Secret` (or `X-Gitlab-Token`). Errors are problem-details
//! objects `{code, message, field?, errors?}`.

mod problem;

use std::future::Future;
use std::net::SocketAddr;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{Path, Query, Request, State};
use axum::http::{header, HeaderMap, HeaderValue, Method, StatusCode};
use axum::middleware::{self, Next};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post, put};
use axum::{Json, Router};
use serde::de::DeserializeOwned;
use serde::Deserialize;
use serde_json::json;
use tira_core::aggregate::AliasTable;
use tira_core::flow::FlowEdge;
use tira_core::hub::{Hub, NewService, SystemWideInfo, VersionOutcome, VersionSource};
use tira_core::webhook::{adapt_payload, GitHost, Ingestor, PushEvent};
use tokio::net::TcpListener;

pub use problem::Problem;

#[derive(Clone, Default)]
pub struct ServerConfig {
    /// Bearer token for mutating routes; `None` leaves them open.
    pub token: Option<String>,
    /// Shared secret for the push hook; `None` accepts every delivery.
    pub webhook_secret: Option<String>,
}

#[derive(Clone)]
struct AppState {
    hub: Arc<Hub>,
    ingestor: Arc<Ingestor>,
    config: Arc<ServerConfig>,
}

/// Builds the API. The ingestor must wrap the same hub.
pub fn router(ingestor: Ingestor, config: ServerConfig) -> Router {
    let ingestor = Arc::new(ingestor);
    let state = AppState {
        hub: ingestor.hub().clone(),
        ingestor,
        config: Arc::new(config),
    };
    Router::new()
        .route("/api/services", get(list_services).post(register))
        .route("/api/services/{id}", get(service))
        .route("/api/services/{id}/versions", post(add_version))
        .route("/api/services/{id}/versions/{n}", get(spec_text))
        .route("/api/services/{id}/diff", get(diff))
        .route("/api/links", put(set_links).get(get_links))
        .route("/api/flow", get(flow))
        .route("/api/system-info", put(set_system_info).get(system_info))
        .route("/api/aliases", put(set_aliases).get(aliases))
        .route("/api/data", get(data))
        .route("/api/data/{name}", get(datum))
        .route("/api/purposes", get(purposes))
        .route("/api/recipients", get(recipients))
        .route("/api/report", get(report))
        .route("/api/report.dot", get(report_dot))
        .route("/api/hooks/push", post(push_hook))
        .fallback(|| async { Problem::not_found("no such route") })
        .layer(middleware::from_fn_with_state(state.clone(), require_token))
        .layer(tower_http::cors::CorsLayer::permissive())
        .layer(tower_http::trace::TraceLayer::new_for_http())
        .with_state(state)
}

/// Serves until `shutdown` resolves.
pub async fn serve(
    listener: TcpListener,
    app: Router,
    shutdown: impl Future<Output = ()> + Send + 'static,
) -> std::io::Result<()> {
    axum::serve(listener, app)
        .with_graceful_shutdown(shutdown)
        .await
}

pub async fn bind(addr: SocketAddr) -> std::io::Result<TcpListener> {
    TcpListener::bind(addr).await
}

fn bearer(headers: &HeaderMap) -> Option<&str> {
    headers
        .get(header::AUTHORIZATION)?
        .to_str()
        .ok()?
        .strip_prefix("Bearer ")
}

async fn require_token(State(st): State<AppState>, req: Request, next: Next) -> Response {
    let mutating = matches!(*req.method(), Method::POST | Method::PUT | Method::DELETE);
    let is_hook = req.uri().path() == "/api/hooks/push";
    if mutating && !is_hook {
        if let Some(token) = &st.config.token {
            if bearer(req.headers()) != Some(token.as_str()) {
                return Problem::unauthorized().into_response();
            }
        }
    }
    next.run(req).await
}

#[allow(clippy::result_large_err)]
fn body<T: DeserializeOwned>(bytes: &Bytes) -> Result<T, Problem> {
    serde_json::from_slice(bytes)
        .map_err(|e| Problem::bad_request(format!("invalid JSON body: {e}")))
}

type ApiResult<T = Response> = Result<T, Problem>;

async fn list_services(State(st): State<AppState>) -> impl IntoResponse {
    Json(st.hub.services())
}

async fn register(State(st): State<AppState>, bytes: Bytes) -> ApiResult {
    let req: NewService = body(&bytes)?;
    let (record, version) = st.hub.register_service(req)?;
    Ok((
        StatusCode::CREATED,
        Json(json!({"record": record, "version": version})),
    )
        .into_response())
}

async fn service(State(st): State<AppState>, Path(id): Path<String>) -> ApiResult {
    Ok(Json(st.hub.service(&id)?).into_response())
}

#[derive(Deserialize)]
struct NewVersion {
    spec_text: String,
}

async fn add_version(
    State(st): State<AppState>,
    Path(id): Path<String>,
    bytes: Bytes,
) -> ApiResult {
    let req: NewVersion = body(&bytes)?;
    let out = st
        .hub
        .add_spec_version(&id, &req.spec_text, VersionSource::ManualUpload)?;
    let status = match out {
        VersionOutcome::Appended { .. } => StatusCode::CREATED,
        VersionOutcome::Unchanged { .. } => StatusCode::OK,
    };
    Ok((status, Json(out)).into_response())
}

async fn spec_text(State(st): State<AppState>, Path((id, n)): Path<(String, String)>) -> ApiResult {
    let n: u32 = n
        .parse()
        .map_err(|_| Problem::bad_request("version must be a positive integer").field("n"))?;
    let text = st.hub.spec_text(&id, n)?;
    let kind = if text.trim_start().starts_with('{') {
        "application/json"
    } else {
        "application/yaml"
    };
    Ok((
        [(header::CONTENT_TYPE, HeaderValue::from_static(kind))],
        text,
    )
        .into_response())
}

#[derive(Deserialize)]
struct Range {
    from: u32,
    to: u32,
}

async fn diff(
    State(st): State<AppState>,
    Path(id): Path<String>,
    range: Result<Query<Range>, axum::extract::rejection::QueryRejection>,
) -> ApiResult {
    let Query(r) = range.map_err(|e| Problem::bad_request(e.body_text()).field("from"))?;
    Ok(Json(st.hub.diff_versions(&id, r.from, r.to)?).into_response())
}

#[derive(Deserialize)]
#[serde(untagged)]
enum LinksBody {
    Wrapped { edges: Vec<FlowEdge> },
    Bare(Vec<FlowEdge>),
}

async fn set_links(State(st): State<AppState>, bytes: Bytes) -> ApiResult {
    let edges = match body(&bytes)? {
        LinksBody::Wrapped { edges } | LinksBody::Bare(edges) => edges,
    };
    Ok(Json(st.hub.set_links(edges)?).into_response())
}

async fn get_links(State(st): State<AppState>) -> impl IntoResponse {
    Json(json!({"edges": st.hub.flow().graph.edges}))
}

async fn flow(State(st): State<AppState>) -> impl IntoResponse {
    Json(st.hub.flow())
}

async fn set_system_info(State(st): State<AppState>, bytes: Bytes) -> ApiResult {
    let info: SystemWideInfo = body(&bytes)?;
    Ok(Json(st.hub.set_system_info(info)?).into_response())
}

async fn system_info(State(st): State<AppState>) -> impl IntoResponse {
    Json(st.hub.system_info().unwrap_or_default())
}

async fn set_aliases(State(st): State<AppState>, bytes: Bytes) -> ApiResult {
    let table: AliasTable = body(&bytes)?;
    Ok(Json(st.hub.set_aliases(table)?).into_response())
}

async fn aliases(State(st): State<AppState>) -> impl IntoResponse {
    Json(st.hub.aliases())
}

async fn data(State(st): State<AppState>) -> impl IntoResponse {
    Json(st.hub.data())
}

async fn datum(State(st): State<AppState>, Path(name): Path<String>) -> ApiResult {
    st.hub
        .datum(&name)
        .map(|d| Json(d).into_response())
        .ok_or_else(|| Problem::not_found(format!("no datum `{name}`")))
}

async fn purposes(State(st): State<AppState>) -> impl IntoResponse {
    Json(st.hub.purposes())
}

async fn recipients(State(st): State<AppState>) -> impl IntoResponse {
    Json(st.hub.recipients())
}

async fn report(State(st): State<AppState>) -> impl IntoResponse {
    Json(st.hub.report())
}

async fn report_dot(State(st): State<AppState>) -> impl IntoResponse {
    (
        [(header::CONTENT_TYPE, "text/vnd.graphviz; charset=utf-8")],
        st.hub.flow().graph.to_dot(),
    )
}

fn secret_ok(config: &ServerConfig, headers: &HeaderMap) -> bool {
    let Some(secret) = &config.webhook_secret else {
        return true;
    };
    ["x-tira-secret", "x-gitlab-token"]
        .iter()
        .filter_map(|h| headers.get(*h)?.to_str().ok())
        .any(|v| v == secret)
}

/// Canonical push events, or host payloads recognised by their event
/// header. Non-push host events are acknowledged without effect.
async fn push_hook(State(st): State<AppState>, headers: HeaderMap, bytes: Bytes) -> ApiResult {
    if !secret_ok(&st.config, &headers) {
        return Err(Problem::unauthorized());
    }
    let host = headers
        .keys()
        .find_map(|k| GitHost::from_event_header(k.as_str()).map(|h| (h, k.clone())));
    let event: PushEvent = match host {
        Some((host, key)) => {
            let kind = headers
                .get(&key)
                .and_then(|v| v.to_str().ok())
                .unwrap_or_default()
                .to_ascii_lowercase();
            if !kind.contains("push") {
                return Ok((StatusCode::ACCEPTED, Json(json!({"outcomes": []}))).into_response());
            }
            adapt_payload(host, &body(&bytes)?)?
        }
        None => body(&bytes)?,
    };
    let ingestor = st.ingestor.clone();
    let outcomes = tokio::task::spawn_blocking(move || ingestor.handle_push(&event))
        .await
        .map_err(|e| {
            Problem::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", e.to_string())
        })??;
    Ok((StatusCode::ACCEPTED, Json(json!({"outcomes": outcomes}))).into_response())
}
