//! The debate state machine: initial fan-out, conflict-gated iterative
//! debate, integration, and termination, over pluggable agent backends.

pub mod backend;
pub mod fixture;
pub mod http;
pub mod transcript;

use std::sync::Arc;
use std::time::Instant;

use thiserror::Error;
use tracing::{debug, warn};

pub use backend::{AgentBackend, BackendError, BackendResponse};
pub use fixture::{FixtureError, ScenarioFixture, ScriptedBackend};
pub use http::HttpBackend;
pub use transcript::{parse_lines, write_lines, CriticReview, DebateTranscript, TranscriptError};

use crate::claims::{claim_confidence_to_uncertainty, parse_claims};
use crate::config::{ArgumentWeighting, BackendKind, HyperParams, IntegrateMode, RunConfig};
use crate::consensus::{
    conflict_score, final_answer, identify_disputes, normalize_answer, should_debate,
    should_terminate, system_uncertainty,
};
use crate::game::{softmax, softmax_weights};
use crate::model::{
    AgentRole, ArgumentPackage, DebateState, DisputeSet, ModelError, ResponseRecord, RoleCategory,
    TaskInput, TerminationReason, WeightVector,
};
use crate::uncertainty::assess;

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("only {survivors} agents produced usable output, need at least 2")]
    InsufficientAgents { survivors: usize },
    #[error("delegated integration requires an aggregator backend")]
    NoAggregator,
    #[error("aggregator failed: {0}")]
    AggregatorFailed(#[source] BackendError),
    #[error(transparent)]
    Consensus(#[from] crate::consensus::ConsensusError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Fixture(#[from] FixtureError),
    #[error("invalid task: {0}")]
    InvalidTask(String),
}

/// One agent slot: its id (the specialty), role, and backend.
#[derive(Clone)]
pub struct AgentHandle {
    pub id: String,
    pub role: AgentRole,
    pub backend: Arc<dyn AgentBackend>,
}

/// The full cast of a debate.
#[derive(Clone)]
pub struct DebatePanel {
    pub bases: Vec<AgentHandle>,
    pub critics: Vec<AgentHandle>,
    pub aggregator: Option<AgentHandle>,
    pub mode: IntegrateMode,
}

impl DebatePanel {
    fn sort(&mut self) {
        // Reductions iterate agents in id order so transcripts are
        // independent of completion scheduling.
        self.bases.sort_by(|a, b| a.id.cmp(&b.id));
        self.critics.sort_by(|a, b| a.id.cmp(&b.id));
    }
}

fn build_panel(
    config: &RunConfig,
    make_backend: impl Fn(&AgentRole) -> Arc<dyn AgentBackend>,
) -> DebatePanel {
    let take = |category: RoleCategory, count: usize| -> Vec<AgentHandle> {
        config
            .roles
            .iter()
            .filter(|r| r.category == category)
            .take(count)
            .map(|role| AgentHandle {
                id: role.specialty.clone(),
                role: role.clone(),
                backend: make_backend(role),
            })
            .collect()
    };
    let aggregator = config
        .roles
        .iter()
        .find(|r| r.category == RoleCategory::Aggregator)
        .map(|role| AgentHandle {
            id: role.specialty.clone(),
            role: role.clone(),
            backend: make_backend(role),
        });
    let mut panel = DebatePanel {
        bases: take(RoleCategory::Base, config.params.n_base),
        critics: take(RoleCategory::Critic, config.params.n_crit),
        aggregator,
        mode: config.integrate_mode,
    };
    panel.sort();
    panel
}

/// Builds a panel whose agents replay a scripted scenario.
pub fn scripted_panel(config: &RunConfig, fixture: Arc<ScenarioFixture>) -> DebatePanel {
    build_panel(config, |_| {
        Arc::new(ScriptedBackend::new(Arc::clone(&fixture))) as Arc<dyn AgentBackend>
    })
}

/// Builds a panel backed by an OpenAI-compatible endpoint.
pub fn http_panel(config: &RunConfig) -> Result<DebatePanel, BackendError> {
    let shared: Arc<dyn AgentBackend> = Arc::new(HttpBackend::new(config.http.clone())?);
    Ok(build_panel(config, |_| Arc::clone(&shared)))
}

/// Builds the panel selected by the run configuration, loading the
/// scripted fixture from disk when applicable.
pub fn panel_from_config(config: &RunConfig) -> Result<DebatePanel, EngineError> {
    match config.backend {
        BackendKind::Scripted => {
            let path = config
                .scripted
                .fixture
                .as_ref()
                .expect("validated config carries a fixture path");
            let fixture = Arc::new(ScenarioFixture::load(path)?);
            Ok(scripted_panel(config, fixture))
        }
        BackendKind::Http => {
            http_panel(config).map_err(|e| EngineError::InvalidTask(e.to_string()))
        }
    }
}

struct AgentOutput {
    handle: AgentHandle,
    response: BackendResponse,
    claims: Vec<crate::model::ClaimTuple>,
}

/// Fans one generation round out to the given agents, drops failures with
/// a warning, and returns survivors in agent-id order.
async fn fan_out(
    agents: &[AgentHandle],
    task: &TaskInput,
    round: u32,
    context: &str,
) -> Result<Vec<AgentOutput>, EngineError> {
    let calls = agents.iter().map(|handle| {
        let handle = handle.clone();
        async move {
            let result = handle
                .backend
                .generate(&handle.role, task, round, context)
                .await;
            (handle, result)
        }
    });
    let mut outputs = Vec::with_capacity(agents.len());
    for (handle, result) in futures::future::join_all(calls).await {
        match result {
            Ok(response) => match parse_claims(&response.text) {
                Ok(claims) => outputs.push(AgentOutput {
                    handle,
                    response,
                    claims,
                }),
                Err(e) => {
                    warn!(agent = %handle.id, round, error = %e, "unparseable claims, dropping agent output")
                }
            },
            Err(e) => warn!(agent = %handle.id, round, error = %e, "backend failure"),
        }
    }
    if outputs.len() < 2 {
        return Err(EngineError::InsufficientAgents {
            survivors: outputs.len(),
        });
    }
    outputs.sort_by(|a, b| a.handle.id.cmp(&b.handle.id));
    Ok(outputs)
}

/// Previous-round material serialized into the delegated aggregator
/// context, in protocol order: previous answer, initial responses, then
/// the dispute focus around the current updates.
pub struct IntegrationExtras<'a> {
    pub prev_answer: Option<&'a str>,
    pub initial_responses: Option<&'a [ResponseRecord]>,
    pub dispute: Option<&'a DisputeSet>,
}

impl IntegrationExtras<'_> {
    pub fn none() -> IntegrationExtras<'static> {
        IntegrationExtras {
            prev_answer: None,
            initial_responses: None,
            dispute: None,
        }
    }
}

/// Combines weighted agent material into one answer.
///
/// `weighted_vote` sums weights per distinct normalized answer and returns
/// the winner (ties break to the lexicographically smallest normalized
/// answer). `delegated` serializes the original input, previous answer,
/// initial responses, current updates, weights, and dispute focus into the
/// aggregator's context and returns its text. `auto` votes on choice tasks
/// and delegates free-text tasks.
pub async fn integrate_judge(
    task: &TaskInput,
    responses: &[ResponseRecord],
    weights: &WeightVector,
    mode: IntegrateMode,
    aggregator: Option<&AgentHandle>,
    extras: IntegrationExtras<'_>,
) -> Result<String, EngineError> {
    let mode = match mode {
        IntegrateMode::Auto if task.answer_options.is_some() => IntegrateMode::WeightedVote,
        IntegrateMode::Auto => IntegrateMode::Delegated,
        explicit => explicit,
    };
    match mode {
        IntegrateMode::Auto => unreachable!("auto resolved above"),
        IntegrateMode::WeightedVote => Ok(weighted_vote(task, responses, weights)),
        IntegrateMode::Delegated => {
            let aggregator = aggregator.ok_or(EngineError::NoAggregator)?;
            let round = responses.first().map(|r| r.round).unwrap_or(0);
            let context = delegated_context(task, responses, weights, &extras);
            let out = aggregator
                .backend
                .generate(&aggregator.role, task, round, &context)
                .await
                .map_err(EngineError::AggregatorFailed)?;
            Ok(out.text)
        }
    }
}

fn weighted_vote(task: &TaskInput, responses: &[ResponseRecord], weights: &WeightVector) -> String {
    // normalized answer -> (accumulated weight, first-seen original form)
    let mut tally: std::collections::BTreeMap<String, (f64, String)> =
        std::collections::BTreeMap::new();
    for resp in responses {
        // choice tasks vote on the extracted label, free-text tasks on the
        // whole response
        let raw = if task.answer_options.is_some() {
            final_answer(&resp.text).unwrap_or_else(|| resp.text.clone())
        } else {
            resp.text.clone()
        };
        let weight = weights.get(&resp.agent_id).unwrap_or(0.0);
        let entry = tally
            .entry(normalize_answer(&raw))
            .or_insert_with(|| (0.0, raw));
        entry.0 += weight;
    }
    let mut winner = None;
    let mut best = f64::NEG_INFINITY;
    for (mass, original) in tally.values() {
        if *mass > best {
            best = *mass;
            winner = Some(original.clone());
        }
    }
    winner.unwrap_or_default()
}

fn describe_responses(label: &str, responses: &[ResponseRecord], out: &mut String) {
    out.push_str(label);
    out.push('\n');
    for resp in responses {
        out.push_str(&format!(
            "[{} | U={:.4}] {}\n",
            resp.agent_id, resp.uncertainty, resp.text
        ));
    }
}

fn delegated_context(
    task: &TaskInput,
    responses: &[ResponseRecord],
    weights: &WeightVector,
    extras: &IntegrationExtras<'_>,
) -> String {
    let mut ctx = String::new();
    ctx.push_str(&format!("QUESTION: {}\n", task.question));
    if let Some(options) = &task.answer_options {
        ctx.push_str("OPTIONS:\n");
        for option in options {
            ctx.push_str(&format!("{}: {}\n", option.label, option.text));
        }
    }
    if let Some(prev) = extras.prev_answer {
        ctx.push_str(&format!("\nPREVIOUS ANSWER: {prev}\n"));
    }
    if let Some(initial) = extras.initial_responses {
        describe_responses("\nINITIAL RESPONSES:", initial, &mut ctx);
    }
    describe_responses("\nCURRENT UPDATES:", responses, &mut ctx);
    ctx.push_str("\nWEIGHTS:\n");
    for (id, w) in weights.entries() {
        ctx.push_str(&format!("{id}: {w:.6}\n"));
    }
    if let Some(dispute) = extras.dispute {
        ctx.push_str("\nDISPUTED CLAIMS:\n");
        for claim in &dispute.disputed_claims {
            ctx.push_str(&format!(
                "- {} ({:?}; agents {})\n",
                claim.claim_key,
                claim.reason,
                claim.involved_agents.join(", ")
            ));
        }
    }
    ctx
}

fn weights_for(
    params: &HyperParams,
    uncertainties: &[f64],
    confidences: &[f64],
    initial: bool,
) -> Vec<f64> {
    if initial {
        return softmax_weights(uncertainties, params.beta_weight);
    }
    match params.argument_weighting {
        ArgumentWeighting::Uncertainty => softmax_weights(uncertainties, params.beta_weight),
        ArgumentWeighting::Confidence => {
            let scores: Vec<f64> = confidences.iter().map(|c| params.gamma_sys * c).collect();
            softmax(&scores)
        }
    }
}

fn build_state(
    round: u32,
    outputs: Vec<AgentOutput>,
    params: &HyperParams,
    initial: bool,
) -> Result<(DebateState, Vec<ArgumentPackage>), EngineError> {
    let mut responses = Vec::with_capacity(outputs.len());
    let mut arguments = Vec::new();
    let mut uncertainties = Vec::with_capacity(outputs.len());
    let mut confidences = Vec::with_capacity(outputs.len());

    for output in outputs {
        let (text_u, source) = assess(
            &output.response.text,
            output.response.token_distributions.as_deref(),
            params,
        );
        let claim_u = claim_confidence_to_uncertainty(&output.claims);
        let uncertainty = if initial {
            text_u
        } else {
            params.uncertainty_blend * text_u + (1.0 - params.uncertainty_blend) * claim_u
        };
        let confidence = 1.0 - claim_u;
        if !initial {
            arguments.push(ArgumentPackage {
                agent_id: output.handle.id.clone(),
                round,
                argument_text: output.response.text.clone(),
                evidence_items: output.claims.clone(),
                confidence,
            });
        }
        uncertainties.push(uncertainty);
        confidences.push(confidence);
        responses.push(ResponseRecord {
            agent_id: output.handle.id.clone(),
            role: output.handle.role.clone(),
            round,
            text: output.response.text,
            token_distributions: output.response.token_distributions,
            claims: output.claims,
            uncertainty,
            uncertainty_source: source,
            token_cost: output.response.token_cost,
        });
    }

    let weight_values = weights_for(params, &uncertainties, &confidences, initial);
    let weights = WeightVector::new(
        responses
            .iter()
            .map(|r| r.agent_id.clone())
            .zip(weight_values.iter().copied())
            .collect(),
    )?;
    let u_sys = system_uncertainty(&weight_values, &uncertainties)?;
    let conflict = conflict_score(&responses)?;

    Ok((
        DebateState {
            round,
            responses,
            weights,
            system_uncertainty: u_sys,
            conflict_score: conflict,
            dispute: None,
            integrated_answer: String::new(),
            termination: None,
        },
        arguments,
    ))
}

/// Round 0: every base agent analyzes the task once; uncertainties,
/// weights, conflict, and the integrated answer are computed from the
/// surviving responses.
pub async fn initial_round(
    task: &TaskInput,
    panel: &DebatePanel,
    params: &HyperParams,
) -> Result<DebateState, EngineError> {
    let outputs = fan_out(&panel.bases, task, 0, "").await?;
    let (mut state, _) = build_state(0, outputs, params, true)?;
    state.integrated_answer = integrate_judge(
        task,
        &state.responses,
        &state.weights,
        panel.mode,
        panel.aggregator.as_ref(),
        IntegrationExtras::none(),
    )
    .await?;
    Ok(state)
}

fn argument_context(prev: &DebateState, dispute: &DisputeSet, reviews: &[CriticReview]) -> String {
    let mut ctx = String::new();
    ctx.push_str(&format!("PREVIOUS ANSWER: {}\n", prev.integrated_answer));
    ctx.push_str("DISPUTED CLAIMS:\n");
    for claim in &dispute.disputed_claims {
        ctx.push_str(&format!(
            "- {} ({:?}; agents {})\n",
            claim.claim_key,
            claim.reason,
            claim.involved_agents.join(", ")
        ));
    }
    if !reviews.is_empty() {
        ctx.push_str("CRITIC REVIEWS:\n");
        for review in reviews {
            ctx.push_str(&format!(
                "[{} r{}] {}\n",
                review.agent_id, review.round, review.text
            ));
        }
    }
    ctx.push_str(
        "Address the disputed claims with a targeted argument, restating your claims in the \
         structured grammar and finishing with an ANSWER line.",
    );
    ctx
}

fn critic_context(dispute: &DisputeSet, arguments: &[ArgumentPackage]) -> String {
    let mut ctx = String::new();
    ctx.push_str("ARGUMENTS UNDER REVIEW:\n");
    for argument in arguments {
        ctx.push_str(&format!(
            "[{}] {}\n",
            argument.agent_id, argument.argument_text
        ));
    }
    ctx.push_str("DISPUTED CLAIMS:\n");
    for claim in &dispute.disputed_claims {
        ctx.push_str(&format!("- {}\n", claim.claim_key));
    }
    ctx
}

/// The outcome of one debate round.
pub struct RoundOutcome {
    pub state: DebateState,
    pub arguments: Vec<ArgumentPackage>,
    pub reviews: Vec<CriticReview>,
}

/// One full debate round `k >= 1`: dispute focus, expert argumentation,
/// critic review, uncertainty/weight updates, integration, and the
/// termination check. An empty dispute set skips argumentation and
/// re-integrates the previous round's material.
pub async fn debate_round(
    k: u32,
    task: &TaskInput,
    prev: &DebateState,
    initial_responses: &[ResponseRecord],
    prev_reviews: &[CriticReview],
    panel: &DebatePanel,
    params: &HyperParams,
) -> Result<RoundOutcome, EngineError> {
    debug_assert!(
        prev.termination.is_none(),
        "debate_round on a terminated state"
    );
    let dispute = identify_disputes(
        &prev.responses,
        &prev.integrated_answer,
        prev.system_uncertainty,
        params,
    );

    let (mut state, arguments, reviews) = if dispute.disputed_claims.is_empty() {
        debug!(
            round = k,
            "no disputes; skipping argumentation and re-integrating"
        );
        let responses: Vec<ResponseRecord> = prev
            .responses
            .iter()
            .cloned()
            .map(|mut r| {
                r.round = k;
                // no agent was re-invoked, so the round spends no tokens
                r.token_cost = 0;
                r
            })
            .collect();
        let state = DebateState {
            round: k,
            responses,
            weights: prev.weights.clone(),
            system_uncertainty: prev.system_uncertainty,
            conflict_score: prev.conflict_score,
            dispute: None,
            integrated_answer: String::new(),
            termination: None,
        };
        (state, Vec::new(), Vec::new())
    } else {
        let context = argument_context(prev, &dispute, prev_reviews);
        let outputs = fan_out(&panel.bases, task, k, &context).await?;
        let (mut state, arguments) = build_state(k, outputs, params, false)?;
        state.dispute = Some(dispute.clone());

        let mut reviews = Vec::new();
        if !panel.critics.is_empty() {
            let ctx = critic_context(&dispute, &arguments);
            let calls = panel.critics.iter().map(|handle| {
                let handle = handle.clone();
                let ctx = ctx.clone();
                async move {
                    let result = handle.backend.generate(&handle.role, task, k, &ctx).await;
                    (handle, result)
                }
            });
            for (handle, result) in futures::future::join_all(calls).await {
                match result {
                    Ok(response) => reviews.push(CriticReview {
                        agent_id: handle.id,
                        round: k,
                        text: response.text,
                    }),
                    Err(e) => warn!(critic = %handle.id, round = k, error = %e, "critic failure"),
                }
            }
            reviews.sort_by(|a, b| a.agent_id.cmp(&b.agent_id));
        }
        (state, arguments, reviews)
    };

    state.integrated_answer = integrate_judge(
        task,
        &state.responses,
        &state.weights,
        panel.mode,
        panel.aggregator.as_ref(),
        IntegrationExtras {
            prev_answer: Some(&prev.integrated_answer),
            initial_responses: Some(initial_responses),
            dispute: state.dispute.as_ref(),
        },
    )
    .await?;

    state.termination = should_terminate(
        state.system_uncertainty,
        Some(prev.system_uncertainty),
        k,
        params,
    );

    Ok(RoundOutcome {
        state,
        arguments,
        reviews,
    })
}

/// Runs the full protocol on one task: round 0, the trigger decision, the
/// debate loop, and transcript assembly.
pub async fn run_debate(
    task: &TaskInput,
    panel: &DebatePanel,
    params: &HyperParams,
) -> Result<DebateTranscript, EngineError> {
    task.validate()
        .map_err(|e| EngineError::InvalidTask(e.to_string()))?;
    let started = Instant::now();

    let mut states = vec![initial_round(task, panel, params).await?];
    let mut arguments = Vec::new();
    let mut reviews = Vec::new();

    let triggered = should_debate(
        states[0].system_uncertainty,
        states[0].conflict_score,
        params,
    );
    if !triggered {
        states[0].termination = Some(TerminationReason::NoDebateNeeded);
    } else if params.k_max == 0 {
        states[0].termination = Some(TerminationReason::MaxRounds);
    } else {
        let initial_responses = states[0].responses.clone();
        let mut prev_reviews: Vec<CriticReview> = Vec::new();
        for k in 1..=params.k_max {
            let outcome = debate_round(
                k,
                task,
                states.last().expect("at least round 0"),
                &initial_responses,
                &prev_reviews,
                panel,
                params,
            )
            .await?;
            prev_reviews = outcome.reviews.clone();
            arguments.extend(outcome.arguments);
            reviews.extend(outcome.reviews);
            let terminated = outcome.state.termination.is_some();
            states.push(outcome.state);
            if terminated {
                break;
            }
        }
        debug_assert!(states.last().unwrap().termination.is_some());
    }

    let total_token_cost = states
        .iter()
        .flat_map(|s| s.responses.iter())
        .map(|r| r.token_cost)
        .sum();
    let final_answer = states
        .last()
        .map(|s| s.integrated_answer.clone())
        .unwrap_or_default();

    let transcript = DebateTranscript {
        task: task.clone(),
        states,
        arguments,
        critic_reviews: reviews,
        final_answer,
        total_token_cost,
        wall_time_ms: started.elapsed().as_millis() as u64,
    };
    debug_assert_eq!(transcript.check(), Ok(()));
    Ok(transcript)
}
