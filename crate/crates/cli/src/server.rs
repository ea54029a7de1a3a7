//! HTTP routes over a [`GraphService`].

use std::collections::HashMap;
use std::sync::Arc;

use axum::extract::{Path, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::get;
use axum::Router;
use forge_core::service::GraphService;
use forge_core::Error;

type Params = Query<HashMap<String, String>>;

pub fn status_for(err: &Error) -> StatusCode {
    match err {
        Error::NotFound(_) => StatusCode::NOT_FOUND,
        Error::Config(_) | Error::Value(_) | Error::Precondition(_) | Error::Bounds(_) => {
            StatusCode::BAD_REQUEST
        }
        _ => StatusCode::INTERNAL_SERVER_ERROR,
    }
}

fn respond(result: forge_core::Result<impl AsRef<str>>) -> Response {
    match result {
        Ok(body) => (
            [(header::CONTENT_TYPE, "application/json")],
            body.as_ref().to_owned(),
        )
            .into_response(),
        Err(e) => {
            let body = serde_json::json!({ "error": e.to_string() }).to_string();
            (
                status_for(&e),
                [(header::CONTENT_TYPE, "application/json")],
                body,
            )
                .into_response()
        }
    }
}

/// Runs a handler off the async executor; dynamic views can take a while.
async fn blocking<F>(service: Arc<GraphService>, f: F) -> Response
where
    F: FnOnce(&GraphService) -> forge_core::Result<String> + Send + 'static,
{
    match tokio::task::spawn_blocking(move || f(&service)).await {
        Ok(result) => respond(result),
        Err(e) => (StatusCode::INTERNAL_SERVER_ERROR, e.to_string()).into_response(),
    }
}

fn param(q: &HashMap<String, String>, key: &str) -> Option<String> {
    q.get(key).cloned()
}

pub fn router(service: Arc<GraphService>) -> Router {
    Router::new()
        .route("/universe", get(|State(s): State<Arc<GraphService>>| async move { respond(s.universe()) }))
        .route(
            "/graph/{granularity}",
            get(|State(s): State<Arc<GraphService>>, Path(g): Path<String>, Query(q): Params| async move {
                respond(s.graph(&g, q.get("site").map(String::as_str)))
            }),
        )
        .route("/tree", get(|State(s): State<Arc<GraphService>>| async move { respond(s.tree()) }))
        .route(
            "/slice",
            get(|State(s): State<Arc<GraphService>>, Query(q): Params| async move {
                respond(s.slice(q.get("nodes").map(String::as_str).unwrap_or("")))
            }),
        )
        .route(
            "/mech/{unit}",
            get(|State(s): State<Arc<GraphService>>, Path(unit): Path<String>, Query(q): Params| async move {
                let cap = match param(&q, "cap").map(|c| c.parse::<usize>()).transpose() {
                    Ok(c) => c,
                    Err(_) => return respond(Err::<String, _>(Error::Value("cap must be a non-negative integer".into()))),
                };
                blocking(s, move |s| {
                    s.mech(&unit, cap, param(&q, "mode").as_deref(), param(&q, "exclude").as_deref())
                        .map(|body| body.as_ref().clone())
                })
                .await
            }),
        )
        .route(
            "/mech/{unit}/payload",
            get(|State(s): State<Arc<GraphService>>, Path(unit): Path<String>, Query(q): Params| async move {
                blocking(s, move |s| s.mech_payload(&unit, param(&q, "mode").as_deref())).await
            }),
        )
        .route(
            "/labels/{graph}",
            get(|State(s): State<Arc<GraphService>>, Path(g): Path<String>| async move { respond(s.labels(&g)) }),
        )
        .route("/layout", get(|State(s): State<Arc<GraphService>>| async move { respond(s.layout()) }))
        .route("/metrics", get(|State(s): State<Arc<GraphService>>| async move { respond(s.metrics()) }))
        .with_state(service)
}

pub async fn serve(service: GraphService, port: u16) -> anyhow::Result<()> {
    let listener = tokio::net::TcpListener::bind(("127.0.0.1", port)).await?;
    log::info!("serving on http://{}", listener.local_addr()?);
    axum::serve(listener, router(Arc::new(service))).await?;
    Ok(())
}
