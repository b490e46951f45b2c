//! Request/response bodies of the debate service API.

use serde::{Deserialize, Serialize};

use conclave_core::config::RunConfig;
use conclave_core::engine::DebateTranscript;
use conclave_core::model::{
    ClaimTuple, TaskInput, TerminationReason, TokenDistribution, UncertaintySource,
};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ErrorBody {
    pub error: String,
}

/// Run one debate. Scripted configurations may inline the scenario TOML
/// instead of pointing at a server-side file.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DebateRequest {
    pub task: TaskInput,
    #[serde(default)]
    pub config: Option<RunConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fixture_inline: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BatchRequest {
    pub tasks: Vec<TaskInput>,
    #[serde(default)]
    pub config: Option<RunConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fixture_inline: Option<String>,
}

/// Per-task outcome: exactly one of `transcript` and `error` is set.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TaskOutcome {
    pub task_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub transcript: Option<DebateTranscript>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BatchResponse {
    pub outcomes: Vec<TaskOutcome>,
}

/// Replay a scripted scenario that embeds its own task.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SimulateRequest {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scenario_inline: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scenario_path: Option<String>,
    #[serde(default)]
    pub config: Option<RunConfig>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SimulateResponse {
    pub transcript: DebateTranscript,
    pub trace: Vec<RoundTrace>,
}

/// One row per agent of a round's trace table.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AgentTraceRow {
    pub agent_id: String,
    pub weight: f64,
    pub uncertainty: f64,
}

/// The per-round quantities a trajectory plot would show: weights,
/// uncertainties, system uncertainty, conflict, dispute count, and the
/// termination reason.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RoundTrace {
    pub round: u32,
    pub agents: Vec<AgentTraceRow>,
    pub system_uncertainty: f64,
    pub conflict_score: f64,
    pub dispute_count: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub termination: Option<TerminationReason>,
    pub integrated_answer: String,
}

impl RoundTrace {
    pub fn from_transcript(transcript: &DebateTranscript) -> Vec<RoundTrace> {
        transcript
            .states
            .iter()
            .map(|state| RoundTrace {
                round: state.round,
                agents: state
                    .weights
                    .entries()
                    .iter()
                    .map(|(id, w)| AgentTraceRow {
                        agent_id: id.clone(),
                        weight: *w,
                        uncertainty: state
                            .responses
                            .iter()
                            .find(|r| &r.agent_id == id)
                            .map(|r| r.uncertainty)
                            .unwrap_or(f64::NAN),
                    })
                    .collect(),
                system_uncertainty: state.system_uncertainty,
                conflict_score: state.conflict_score,
                dispute_count: state
                    .dispute
                    .as_ref()
                    .map(|d| d.disputed_claims.len())
                    .unwrap_or(0),
                termination: state.termination,
                integrated_answer: state.integrated_answer.clone(),
            })
            .collect()
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReportRequest {
    pub transcripts: Vec<DebateTranscript>,
    #[serde(default = "default_bins")]
    pub bins: usize,
    #[serde(default = "default_ua_threshold")]
    pub ua_threshold: f64,
}

fn default_bins() -> usize {
    10
}

fn default_ua_threshold() -> f64 {
    0.5
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OpsAssessRequest {
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub token_distributions: Option<Vec<TokenDistribution>>,
    #[serde(default)]
    pub params: Option<conclave_core::config::HyperParams>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OpsAssessResponse {
    pub uncertainty: f64,
    pub source: UncertaintySource,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OpsWeightsRequest {
    pub uncertainties: Vec<f64>,
    pub beta: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OpsWeightsResponse {
    pub weights: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OpsParseClaimsRequest {
    pub text: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OpsParseClaimsResponse {
    pub claims: Vec<ClaimTuple>,
}
