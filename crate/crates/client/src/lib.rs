//! Thin HTTP client for the conclave debate service, plus the wire types
//! shared between the service and its clients.

pub mod types;

use thiserror::Error;

use conclave_core::analytics::BatchAnalytics;
use conclave_core::engine::DebateTranscript;

use types::{
    BatchRequest, BatchResponse, DebateRequest, OpsAssessRequest, OpsAssessResponse,
    OpsParseClaimsResponse, OpsWeightsRequest, OpsWeightsResponse, ReportRequest, SimulateRequest,
    SimulateResponse,
};

#[derive(Debug, Error)]
pub enum ClientError {
    #[error("transport failure talking to {url}: {source}")]
    Transport {
        url: String,
        #[source]
        source: reqwest::Error,
    },
    #[error("service returned {status}: {message}")]
    Api { status: u16, message: String },
    #[error("cannot decode service response: {0}")]
    Decode(String),
}

/// Client for one service instance.
#[derive(Debug, Clone)]
pub struct Client {
    base: String,
    http: reqwest::Client,
}

impl Client {
    pub fn new(base_url: impl Into<String>) -> Self {
        Client {
            base: base_url.into().trim_end_matches('/').to_string(),
            http: reqwest::Client::new(),
        }
    }

    pub fn base_url(&self) -> &str {
        &self.base
    }

    async fn post<Req: serde::Serialize, Resp: serde::de::DeserializeOwned>(
        &self,
        path: &str,
        body: &Req,
    ) -> Result<Resp, ClientError> {
        let url = format!("{}{path}", self.base);
        let response = self
            .http
            .post(&url)
            .json(body)
            .send()
            .await
            .map_err(|source| ClientError::Transport {
                url: url.clone(),
                source,
            })?;
        let status = response.status();
        let bytes = response
            .bytes()
            .await
            .map_err(|source| ClientError::Transport { url, source })?;
        if !status.is_success() {
            let message = serde_json::from_slice::<types::ErrorBody>(&bytes)
                .map(|e| e.error)
                .unwrap_or_else(|_| String::from_utf8_lossy(&bytes).into_owned());
            return Err(ClientError::Api {
                status: status.as_u16(),
                message,
            });
        }
        serde_json::from_slice(&bytes).map_err(|e| ClientError::Decode(e.to_string()))
    }

    pub async fn health(&self) -> Result<(), ClientError> {
        let url = format!("{}/healthz", self.base);
        let response =
            self.http
                .get(&url)
                .send()
                .await
                .map_err(|source| ClientError::Transport {
                    url: url.clone(),
                    source,
                })?;
        if response.status().is_success() {
            Ok(())
        } else {
            Err(ClientError::Api {
                status: response.status().as_u16(),
                message: "health check failed".to_string(),
            })
        }
    }

    pub async fn run_debate(
        &self,
        request: &DebateRequest,
    ) -> Result<DebateTranscript, ClientError> {
        self.post("/v1/debates", request).await
    }

    pub async fn run_batch(&self, request: &BatchRequest) -> Result<BatchResponse, ClientError> {
        self.post("/v1/batches", request).await
    }

    pub async fn simulate(
        &self,
        request: &SimulateRequest,
    ) -> Result<SimulateResponse, ClientError> {
        self.post("/v1/simulate", request).await
    }

    pub async fn report(&self, request: &ReportRequest) -> Result<BatchAnalytics, ClientError> {
        self.post("/v1/analytics/report", request).await
    }

    pub async fn assess(
        &self,
        request: &OpsAssessRequest,
    ) -> Result<OpsAssessResponse, ClientError> {
        self.post("/v1/ops/assess", request).await
    }

    pub async fn weights(
        &self,
        request: &OpsWeightsRequest,
    ) -> Result<OpsWeightsResponse, ClientError> {
        self.post("/v1/ops/weights", request).await
    }

    pub async fn parse_claims(&self, text: &str) -> Result<OpsParseClaimsResponse, ClientError> {
        self.post(
            "/v1/ops/parse-claims",
            &types::OpsParseClaimsRequest {
                text: text.to_string(),
            },
        )
        .await
    }
}
