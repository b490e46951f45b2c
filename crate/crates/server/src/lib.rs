//! HTTP service exposing the debate engine: full debates and batches,
//! scripted-scenario simulation, batch analytics, and the individual
//! assessment operations.

use std::path::PathBuf;
use std::sync::Arc;

use axum::extract::Json;
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::Router;
use futures::StreamExt;
use tracing::info;

use conclave_client::types::{
    BatchRequest, BatchResponse, DebateRequest, ErrorBody, OpsAssessRequest, OpsAssessResponse,
    OpsParseClaimsRequest, OpsParseClaimsResponse, OpsWeightsRequest, OpsWeightsResponse,
    ReportRequest, RoundTrace, SimulateRequest, SimulateResponse, TaskOutcome,
};
use conclave_core::analytics::batch_analytics;
use conclave_core::claims::parse_claims;
use conclave_core::config::{BackendKind, RunConfig};
use conclave_core::engine::{http_panel, run_debate, scripted_panel, DebatePanel, ScenarioFixture};
use conclave_core::game::softmax_weights;
use conclave_core::model::TaskInput;
use conclave_core::uncertainty::assess;

struct ApiError {
    status: StatusCode,
    message: String,
}

impl ApiError {
    fn bad_request(message: impl Into<String>) -> Self {
        ApiError {
            status: StatusCode::BAD_REQUEST,
            message: message.into(),
        }
    }

    fn unprocessable(message: impl Into<String>) -> Self {
        ApiError {
            status: StatusCode::UNPROCESSABLE_ENTITY,
            message: message.into(),
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (
            self.status,
            Json(ErrorBody {
                error: self.message,
            }),
        )
            .into_response()
    }
}

/// Builds the service router.
pub fn router() -> Router {
    Router::new()
        .route("/healthz", get(health))
        .route("/v1/debates", post(debates))
        .route("/v1/batches", post(batches))
        .route("/v1/simulate", post(simulate))
        .route("/v1/analytics/report", post(report))
        .route("/v1/ops/assess", post(ops_assess))
        .route("/v1/ops/weights", post(ops_weights))
        .route("/v1/ops/parse-claims", post(ops_parse_claims))
}

/// Binds the router on `addr` and serves until the task is dropped.
/// Returns the actual bound address (useful with port 0).
pub async fn spawn(addr: &str) -> std::io::Result<std::net::SocketAddr> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    let bound = listener.local_addr()?;
    info!(%bound, "debate service listening");
    tokio::spawn(async move {
        axum::serve(listener, router()).await.expect("server loop");
    });
    Ok(bound)
}

async fn health() -> Json<serde_json::Value> {
    Json(serde_json::json!({ "status": "ok" }))
}

fn resolve_panel(
    config: &mut RunConfig,
    fixture_inline: Option<&str>,
) -> Result<DebatePanel, ApiError> {
    if config.backend == BackendKind::Scripted
        && fixture_inline.is_some()
        && config.scripted.fixture.is_none()
    {
        config.scripted.fixture = Some(PathBuf::from("<inline>"));
    }
    config
        .validate()
        .map_err(|e| ApiError::bad_request(e.to_string()))?;
    match config.backend {
        BackendKind::Scripted => {
            let fixture = match fixture_inline {
                Some(raw) => ScenarioFixture::from_toml_str(raw)
                    .map_err(|e| ApiError::bad_request(e.to_string()))?,
                None => {
                    let path = config.scripted.fixture.as_ref().expect("validated");
                    ScenarioFixture::load(path).map_err(|e| ApiError::bad_request(e.to_string()))?
                }
            };
            Ok(scripted_panel(config, Arc::new(fixture)))
        }
        BackendKind::Http => http_panel(config).map_err(|e| ApiError::bad_request(e.to_string())),
    }
}

async fn debates(
    Json(request): Json<DebateRequest>,
) -> Result<Json<conclave_core::engine::DebateTranscript>, ApiError> {
    let mut config = request.config.unwrap_or_default();
    let panel = resolve_panel(&mut config, request.fixture_inline.as_deref())?;
    let transcript = run_debate(&request.task, &panel, &config.params)
        .await
        .map_err(|e| ApiError::unprocessable(e.to_string()))?;
    Ok(Json(transcript))
}

fn check_batch_tasks(tasks: &[TaskInput]) -> Result<(), ApiError> {
    let mut ids: Vec<&str> = tasks.iter().map(|t| t.task_id.as_str()).collect();
    ids.sort_unstable();
    let before = ids.len();
    ids.dedup();
    if ids.len() != before {
        return Err(ApiError::bad_request(
            "task_id values must be unique within a batch",
        ));
    }
    Ok(())
}

async fn batches(Json(request): Json<BatchRequest>) -> Result<Json<BatchResponse>, ApiError> {
    check_batch_tasks(&request.tasks)?;
    let mut config = request.config.unwrap_or_default();
    let panel = resolve_panel(&mut config, request.fixture_inline.as_deref())?;
    let params = config.params.clone();
    let parallelism = config.parallelism.max(1);

    let outcomes: Vec<TaskOutcome> = futures::stream::iter(request.tasks.into_iter().map(|task| {
        let panel = panel.clone();
        let params = params.clone();
        async move {
            match run_debate(&task, &panel, &params).await {
                Ok(transcript) => TaskOutcome {
                    task_id: task.task_id,
                    transcript: Some(transcript),
                    error: None,
                },
                Err(e) => TaskOutcome {
                    task_id: task.task_id,
                    transcript: None,
                    error: Some(e.to_string()),
                },
            }
        }
    }))
    .buffered(parallelism)
    .collect()
    .await;

    Ok(Json(BatchResponse { outcomes }))
}

async fn simulate(
    Json(request): Json<SimulateRequest>,
) -> Result<Json<SimulateResponse>, ApiError> {
    let fixture = match (&request.scenario_inline, &request.scenario_path) {
        (Some(raw), _) => {
            ScenarioFixture::from_toml_str(raw).map_err(|e| ApiError::bad_request(e.to_string()))?
        }
        (None, Some(path)) => ScenarioFixture::load(std::path::Path::new(path))
            .map_err(|e| ApiError::bad_request(e.to_string()))?,
        (None, None) => {
            return Err(ApiError::bad_request(
                "simulate needs scenario_inline or scenario_path",
            ))
        }
    };
    let task = fixture.task.clone().ok_or_else(|| {
        ApiError::bad_request(
            "scenario does not embed a [task]; use /v1/debates with your own task",
        )
    })?;
    let mut config = request.config.unwrap_or_default();
    config.backend = BackendKind::Scripted;
    if config.scripted.fixture.is_none() {
        config.scripted.fixture = Some(PathBuf::from("<inline>"));
    }
    config
        .validate()
        .map_err(|e| ApiError::bad_request(e.to_string()))?;
    let panel = scripted_panel(&config, Arc::new(fixture));
    let transcript = run_debate(&task, &panel, &config.params)
        .await
        .map_err(|e| ApiError::unprocessable(e.to_string()))?;
    let trace = RoundTrace::from_transcript(&transcript);
    Ok(Json(SimulateResponse { transcript, trace }))
}

async fn report(
    Json(request): Json<ReportRequest>,
) -> Result<Json<conclave_core::analytics::BatchAnalytics>, ApiError> {
    if request.bins == 0 {
        return Err(ApiError::bad_request("bins must be >= 1"));
    }
    let analytics = batch_analytics(&request.transcripts, request.bins, request.ua_threshold)
        .map_err(|e| ApiError::bad_request(e.to_string()))?;
    Ok(Json(analytics))
}

async fn ops_assess(Json(request): Json<OpsAssessRequest>) -> Json<OpsAssessResponse> {
    let params = request.params.unwrap_or_default();
    let (uncertainty, source) = assess(
        &request.text,
        request.token_distributions.as_deref(),
        &params,
    );
    Json(OpsAssessResponse {
        uncertainty,
        source,
    })
}

async fn ops_weights(
    Json(request): Json<OpsWeightsRequest>,
) -> Result<Json<OpsWeightsResponse>, ApiError> {
    if request.uncertainties.is_empty() {
        return Err(ApiError::bad_request("uncertainties must be non-empty"));
    }
    if request.beta < 0.0 {
        return Err(ApiError::bad_request("beta must be >= 0"));
    }
    Ok(Json(OpsWeightsResponse {
        weights: softmax_weights(&request.uncertainties, request.beta),
    }))
}

async fn ops_parse_claims(
    Json(request): Json<OpsParseClaimsRequest>,
) -> Result<Json<OpsParseClaimsResponse>, ApiError> {
    let claims = parse_claims(&request.text).map_err(|e| ApiError::bad_request(e.to_string()))?;
    Ok(Json(OpsParseClaimsResponse { claims }))
}
