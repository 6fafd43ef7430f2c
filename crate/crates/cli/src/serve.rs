//! Read-only HTTP similarity-query service.
//!
//! The model and index are loaded once and shared immutably; every request
//! is an isolated computation, so concurrent queries are safe by
//! construction. Shutdown is graceful: SIGINT/SIGTERM stop accepting new
//! connections and let in-flight requests finish.

use std::collections::BTreeMap;
use std::sync::Arc;
use std::time::Instant;

use anyhow::Result;
use axum::body::Body;
use axum::extract::{FromRequest, Multipart, Path, Query, Request, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::Deserialize;

use motioncloud_core::classifier::MetricParams;
use motioncloud_core::indexer::{query_similarity_signature, IndexRecord, IndexerConfig};
use motioncloud_core::pipeline::{clip_signature, ActionModel, PipelineConfig};
use motioncloud_core::templates::CANONICAL_SIZE;

use crate::archive::clip_from_archive;

/// Cap uploads at 256 MiB.
const MAX_BODY: usize = 256 * 1024 * 1024;

struct AppState {
    model: ActionModel,
    records: Vec<IndexRecord>,
    pipeline_cfg: PipelineConfig,
    indexer_cfg: IndexerConfig,
}

type Shared = Arc<AppState>;

fn error_response(status: StatusCode, message: impl Into<String>) -> Response {
    (
        status,
        Json(serde_json::json!({ "error": message.into() })),
    )
        .into_response()
}

async fn health(State(state): State<Shared>) -> Response {
    let videos: std::collections::BTreeSet<&str> = state
        .records
        .iter()
        .map(|r| r.video_id.as_str())
        .collect();
    Json(serde_json::json!({ "status": "ok", "videos": videos.len() })).into_response()
}

async fn videos(State(state): State<Shared>) -> Response {
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for record in &state.records {
        *counts.entry(record.video_id.as_str()).or_insert(0) += 1;
    }
    let list: Vec<serde_json::Value> = counts
        .iter()
        .map(|(id, windows)| serde_json::json!({ "video_id": id, "windows": windows }))
        .collect();
    Json(serde_json::json!({ "videos": list })).into_response()
}

async fn annotations(State(state): State<Shared>, Path(id): Path<String>) -> Response {
    let records: Vec<&IndexRecord> = state
        .records
        .iter()
        .filter(|r| r.video_id == id)
        .collect();
    if records.is_empty() {
        return error_response(StatusCode::NOT_FOUND, format!("unknown video {id:?}"));
    }
    Json(serde_json::json!({ "video_id": id, "annotations": records })).into_response()
}

#[derive(Deserialize, Default)]
struct QueryParams {
    top: Option<usize>,
    rho: Option<f64>,
}

/// Pull the archive bytes out of either a raw body or the first file field
/// of a multipart form.
async fn upload_bytes(req: Request) -> std::result::Result<Vec<u8>, String> {
    let is_multipart = req
        .headers()
        .get(header::CONTENT_TYPE)
        .and_then(|v| v.to_str().ok())
        .is_some_and(|v| v.starts_with("multipart/"));
    if is_multipart {
        let mut multipart = Multipart::from_request(req, &())
            .await
            .map_err(|e| format!("invalid multipart body: {e}"))?;
        while let Some(field) = multipart
            .next_field()
            .await
            .map_err(|e| format!("invalid multipart body: {e}"))?
        {
            let data = field
                .bytes()
                .await
                .map_err(|e| format!("invalid multipart body: {e}"))?;
            if !data.is_empty() {
                return Ok(data.to_vec());
            }
        }
        Err("multipart body contains no file".into())
    } else {
        axum::body::to_bytes(req.into_body(), MAX_BODY)
            .await
            .map(|b| b.to_vec())
            .map_err(|e| format!("reading body: {e}"))
    }
}

async fn query(State(state): State<Shared>, req: Request<Body>) -> Response {
    let started = Instant::now();
    let params = Query::<QueryParams>::try_from_uri(req.uri())
        .map(|q| q.0)
        .unwrap_or_default();
    let bytes = match upload_bytes(req).await {
        Ok(b) => b,
        Err(e) => return error_response(StatusCode::BAD_REQUEST, e),
    };
    let top = params.top.unwrap_or(10);
    let rho = params.rho;
    let state = state.clone();
    // the pipeline is CPU-bound; keep it off the async workers
    let result = tokio::task::spawn_blocking(move || {
        let clip = clip_from_archive(&bytes, state.pipeline_cfg.target_size)
            .map_err(|e| format!("{e:#}"))?;
        let mut cfg = state.pipeline_cfg.clone();
        if let Some(rho) = rho {
            cfg.metric.rho = rho;
        }
        let (sig, traj) =
            clip_signature(&state.model.eigen, &clip, &cfg).map_err(|e| e.to_string())?;
        if traj.len() < 5 {
            return Err(format!(
                "clip too short: {} trajectory points, need 5",
                traj.len()
            ));
        }
        query_similarity_signature(
            &sig,
            &state.model,
            &state.records,
            top,
            &state.indexer_cfg,
            &cfg,
        )
        .map_err(|e| e.to_string())
    })
    .await;
    match result {
        Ok(Ok(result)) => Json(serde_json::json!({
            "results": result.results,
            "null_query": result.null_query,
            "timing_ms": started.elapsed().as_millis() as u64,
        }))
        .into_response(),
        Ok(Err(message)) => error_response(StatusCode::BAD_REQUEST, message),
        Err(e) => error_response(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()),
    }
}

async fn shutdown_signal() {
    let ctrl_c = async {
        tokio::signal::ctrl_c().await.ok();
    };
    #[cfg(unix)]
    let terminate = async {
        if let Ok(mut sig) =
            tokio::signal::unix::signal(tokio::signal::unix::SignalKind::terminate())
        {
            sig.recv().await;
        }
    };
    #[cfg(not(unix))]
    let terminate = std::future::pending::<()>();
    tokio::select! {
        _ = ctrl_c => {}
        _ = terminate => {}
    }
}

pub fn serve(
    model: ActionModel,
    records: Vec<IndexRecord>,
    metric: MetricParams,
    port: u16,
) -> Result<()> {
    let state = Arc::new(AppState {
        pipeline_cfg: PipelineConfig {
            target_size: CANONICAL_SIZE,
            k: model.eigen.k,
            metric,
            ..PipelineConfig::default()
        },
        indexer_cfg: IndexerConfig::default(),
        model,
        records,
    });
    let app = Router::new()
        .route("/v1/health", get(health))
        .route("/v1/videos", get(videos))
        .route("/v1/videos/{id}/annotations", get(annotations))
        .route("/v1/query", post(query))
        .with_state(state);
    let runtime = tokio::runtime::Runtime::new()?;
    runtime.block_on(async {
        let listener = tokio::net::TcpListener::bind(("0.0.0.0", port)).await?;
        eprintln!("listening on {}", listener.local_addr()?);
        axum::serve(listener, app)
            .with_graceful_shutdown(shutdown_signal())
            .await?;
        Ok(())
    })
}
