//! End-to-end engine runs over the scripted scenario fixtures.

use std::path::PathBuf;
use std::sync::Arc;

use async_trait::async_trait;
use conclave_core::config::{HyperParams, RunConfig};
use conclave_core::engine::{
    run_debate, scripted_panel, write_lines, AgentBackend, BackendError, BackendResponse,
    DebatePanel, EngineError, ScenarioFixture, ScriptedBackend,
};
use conclave_core::model::{validate_state, AgentRole, TaskInput, TerminationReason};

fn fixture_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join(format!("fixtures/{name}.toml"))
}

fn load(name: &str) -> (Arc<ScenarioFixture>, TaskInput) {
    let fixture = Arc::new(ScenarioFixture::load(&fixture_path(name)).unwrap());
    let task = fixture.task.clone().expect("fixture embeds a task");
    (fixture, task)
}

fn panel(fixture: Arc<ScenarioFixture>) -> DebatePanel {
    let config = RunConfig::default();
    scripted_panel(&config, fixture)
}

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol
}

#[tokio::test]
async fn easy_consensus_skips_debate() {
    let (fixture, task) = load("easy_consensus");
    let params = HyperParams::default();
    let transcript = run_debate(&task, &panel(fixture), &params).await.unwrap();

    assert_eq!(transcript.states.len(), 1);
    let state = &transcript.states[0];
    assert_eq!(state.termination, Some(TerminationReason::NoDebateNeeded));
    assert!(close(state.system_uncertainty, 0.0, 1e-12));
    assert!(close(state.conflict_score, 0.0, 1e-12));
    for (_, w) in state.weights.entries() {
        assert!(close(*w, 1.0 / 3.0, 1e-12));
    }
    assert_eq!(transcript.final_answer, "A");
    assert_eq!(transcript.total_token_cost, 330);
    assert!(transcript.arguments.is_empty());
    assert!(transcript.critic_reviews.is_empty());
}

#[tokio::test]
async fn fast_converge_runs_exactly_one_round() {
    let (fixture, task) = load("fast_converge");
    let params = HyperParams::default();
    let transcript = run_debate(&task, &panel(fixture), &params).await.unwrap();

    assert_eq!(transcript.states.len(), 2);
    let round0 = &transcript.states[0];

    // sorted agent order is object_recognition, ocr, scene_description
    let ids: Vec<&str> = round0
        .responses
        .iter()
        .map(|r| r.agent_id.as_str())
        .collect();
    assert_eq!(ids, vec!["object_recognition", "ocr", "scene_description"]);
    let us: Vec<f64> = round0.responses.iter().map(|r| r.uncertainty).collect();
    assert!(close(us[0], 0.2, 1e-9));
    assert!(close(us[1], 0.5, 1e-9));
    assert!(close(us[2], 0.8, 1e-9));

    let ws = round0.weights.values();
    assert!(close(ws[0], 0.48917, 1e-4));
    assert!(close(ws[1], 0.31193, 1e-4));
    assert!(close(ws[2], 0.19890, 1e-4));
    assert!(close(round0.system_uncertainty, 0.412919, 1e-5));
    assert!(close(round0.conflict_score, 2.0 / 3.0, 1e-12));
    assert_eq!(round0.integrated_answer, "A");

    let round1 = &transcript.states[1];
    let dispute = round1
        .dispute
        .as_ref()
        .expect("round 1 has a dispute focus");
    let keys: Vec<&str> = dispute
        .disputed_claims
        .iter()
        .map(|d| d.claim_key.as_str())
        .collect();
    assert!(keys.contains(&"plate text"));
    assert!(keys.contains(&"vehicle color"));
    assert!(close(round1.system_uncertainty, 0.0, 1e-12));
    assert_eq!(
        round1.termination,
        Some(TerminationReason::UncertaintyBelowThreshold)
    );
    assert_eq!(transcript.final_answer, "A");
    assert_eq!(transcript.arguments.len(), 3);
    assert_eq!(transcript.critic_reviews.len(), 3);
    assert_eq!(transcript.total_token_cost, 750);
}

#[tokio::test]
async fn stagnation_fires_at_round_two() {
    let (fixture, task) = load("stagnation");
    let params = HyperParams::default();
    let transcript = run_debate(&task, &panel(fixture), &params).await.unwrap();

    assert_eq!(transcript.states.len(), 3);
    assert!(close(transcript.states[1].system_uncertainty, 0.35, 1e-9));
    assert!(close(transcript.states[2].system_uncertainty, 0.35, 1e-9));
    assert_eq!(
        transcript.states[2].termination,
        Some(TerminationReason::Stagnation)
    );
}

#[tokio::test]
async fn round_cap_fires_at_k_max() {
    let (fixture, task) = load("max_rounds_cap");
    let params = HyperParams::default();
    let transcript = run_debate(&task, &panel(fixture), &params).await.unwrap();

    assert_eq!(transcript.states.len(), 4);
    let us: Vec<f64> = transcript
        .states
        .iter()
        .map(|s| s.system_uncertainty)
        .collect();
    assert!(close(us[1], 0.35, 1e-9));
    assert!(close(us[2], 0.33, 1e-9));
    assert!(close(us[3], 0.31, 1e-9));
    assert_eq!(
        transcript.states[3].termination,
        Some(TerminationReason::MaxRounds)
    );
    assert!(transcript.debate_rounds() <= params.k_max);
}

#[tokio::test]
async fn zero_round_cap_never_debates() {
    let (fixture, task) = load("max_rounds_cap");
    let params = HyperParams {
        k_max: 0,
        ..HyperParams::default()
    };
    let transcript = run_debate(&task, &panel(fixture), &params).await.unwrap();
    assert_eq!(transcript.states.len(), 1);
    assert_eq!(
        transcript.states[0].termination,
        Some(TerminationReason::MaxRounds)
    );
}

#[tokio::test]
async fn every_emitted_state_validates_cleanly() {
    let params = HyperParams::default();
    for name in [
        "easy_consensus",
        "fast_converge",
        "stagnation",
        "max_rounds_cap",
    ] {
        let (fixture, task) = load(name);
        let transcript = run_debate(&task, &panel(fixture), &params).await.unwrap();
        assert_eq!(transcript.check(), Ok(()), "{name}");
        for state in &transcript.states {
            let report = validate_state(state, &params);
            assert!(
                report.is_empty(),
                "{name} round {}: {report:?}",
                state.round
            );
        }
        // cumulative cost never decreases across rounds
        let mut cumulative = 0u64;
        for state in &transcript.states {
            let round_cost: u64 = state.responses.iter().map(|r| r.token_cost).sum();
            let next = cumulative + round_cost;
            assert!(next >= cumulative);
            cumulative = next;
        }
        assert_eq!(cumulative, transcript.total_token_cost);
    }
}

#[tokio::test]
async fn termination_reasons_replay_against_the_uncertainty_trajectory() {
    use conclave_core::consensus::{should_debate, should_terminate};

    let params = HyperParams::default();
    for name in [
        "easy_consensus",
        "fast_converge",
        "stagnation",
        "max_rounds_cap",
        "delegated_freetext",
    ] {
        let (fixture, task) = load(name);
        let transcript = run_debate(&task, &panel(fixture), &params).await.unwrap();
        for (i, state) in transcript.states.iter().enumerate() {
            let is_last = i == transcript.states.len() - 1;
            if state.round == 0 {
                let triggered =
                    should_debate(state.system_uncertainty, state.conflict_score, &params);
                match state.termination {
                    Some(TerminationReason::NoDebateNeeded) => assert!(!triggered, "{name}"),
                    Some(TerminationReason::MaxRounds) => {
                        assert!(triggered && params.k_max == 0, "{name}")
                    }
                    None => assert!(triggered && !is_last, "{name}"),
                    other => panic!("{name}: unexpected round-0 reason {other:?}"),
                }
                continue;
            }
            let prev = transcript.states[i - 1].system_uncertainty;
            let expected = should_terminate(
                state.system_uncertainty,
                Some(prev),
                state.round,
                &params,
            );
            assert_eq!(state.termination, expected, "{name} round {}", state.round);
            assert_eq!(expected.is_some(), is_last, "{name} round {}", state.round);
        }
    }
}

#[tokio::test]
async fn scripted_replay_is_byte_identical() {
    let params = HyperParams::default();
    for name in [
        "easy_consensus",
        "fast_converge",
        "stagnation",
        "max_rounds_cap",
    ] {
        let (fixture, task) = load(name);
        let first = run_debate(&task, &panel(Arc::clone(&fixture)), &params)
            .await
            .unwrap();
        let second = run_debate(&task, &panel(fixture), &params).await.unwrap();
        assert_eq!(write_lines(&first), write_lines(&second), "{name}");
    }
}

// Round-1 claim confidences (0.9, 0.5, 0.1) with one-hot distributions:
// blended uncertainties 0.5 * (1 - c) = (0.05, 0.25, 0.45).
const ASYMMETRIC_ROUND: &str = r#"
name = "asymmetric"

[task]
task_id = "asymmetric"
question = "Which option?"
answer_options = [ { label = "A", text = "a" }, { label = "B", text = "b" } ]

[[entries]]
specialty = "object_recognition"
round = 0
probs = [[1.0]]
vocab_size_hint = 2
text = """
CLAIM: subject | CONF: 0.4 | EVIDENCE: partly hidden
ANSWER: A
"""

[[entries]]
specialty = "ocr"
round = 0
probs = [[1.0]]
vocab_size_hint = 2
text = """
CLAIM: subject | CONF: 0.4 | EVIDENCE: partly hidden
ANSWER: A
"""

[[entries]]
specialty = "scene_description"
round = 0
probs = [[1.0]]
vocab_size_hint = 2
text = """
CLAIM: subject | CONF: 0.4 | EVIDENCE: partly hidden
ANSWER: B
"""

[[entries]]
specialty = "object_recognition"
round = 1
probs = [[1.0]]
vocab_size_hint = 2
text = """
CLAIM: subject | CONF: 0.9 | EVIDENCE: now fully visible
ANSWER: A
"""

[[entries]]
specialty = "ocr"
round = 1
probs = [[1.0]]
vocab_size_hint = 2
text = """
CLAIM: subject | CONF: 0.5 | EVIDENCE: half readable
ANSWER: A
"""

[[entries]]
specialty = "scene_description"
round = 1
probs = [[1.0]]
vocab_size_hint = 2
text = """
CLAIM: subject | CONF: 0.1 | EVIDENCE: still obscured
ANSWER: B
"""

[[entries]]
specialty = "fact_checker"
round = 1
text = "Reviewed."

[[entries]]
specialty = "completeness_checker"
round = 1
text = "Reviewed."

[[entries]]
specialty = "logic_checker"
round = 1
text = "Reviewed."
"#;

#[tokio::test]
async fn argument_weighting_signal_switch_changes_round_weights() {
    use conclave_core::config::ArgumentWeighting;

    let fixture = Arc::new(ScenarioFixture::from_toml_str(ASYMMETRIC_ROUND).unwrap());
    let task = fixture.task.clone().unwrap();

    // uncertainty form: w ~ exp(-1.5 * (0.05, 0.25, 0.45))
    let params = HyperParams {
        k_max: 1,
        ..HyperParams::default()
    };
    let transcript = run_debate(&task, &panel(Arc::clone(&fixture)), &params)
        .await
        .unwrap();
    let ws = transcript.states[1].weights.values();
    assert!(close(ws[0], 0.43675, 1e-4), "{ws:?}");
    assert!(close(ws[1], 0.32355, 1e-4));
    assert!(close(ws[2], 0.23969, 1e-4));

    // confidence form: w ~ exp(0.2 * (0.9, 0.5, 0.1))
    let params = HyperParams {
        k_max: 1,
        argument_weighting: ArgumentWeighting::Confidence,
        ..HyperParams::default()
    };
    let transcript = run_debate(&task, &panel(Arc::clone(&fixture)), &params)
        .await
        .unwrap();
    let ws = transcript.states[1].weights.values();
    assert!(close(ws[0], 0.36033, 1e-4), "{ws:?}");
    assert!(close(ws[1], 0.33262, 1e-4));
    assert!(close(ws[2], 0.30705, 1e-4));
}

#[tokio::test]
async fn uncertainty_blend_controls_the_round_signal_mix() {
    let fixture = Arc::new(ScenarioFixture::from_toml_str(ASYMMETRIC_ROUND).unwrap());
    let task = fixture.task.clone().unwrap();

    // full weight on the text channel: one-hot distributions mean zero
    // uncertainty, so the debate terminates below the threshold
    let params = HyperParams {
        uncertainty_blend: 1.0,
        ..HyperParams::default()
    };
    let transcript = run_debate(&task, &panel(fixture), &params).await.unwrap();
    assert_eq!(
        transcript.states[1].termination,
        Some(TerminationReason::UncertaintyBelowThreshold)
    );
    assert!(close(transcript.states[1].system_uncertainty, 0.0, 1e-12));
}

#[tokio::test]
async fn free_text_tasks_delegate_to_the_aggregator() {
    let (fixture, task) = load("delegated_freetext");
    let params = HyperParams::default();
    let transcript = run_debate(&task, &panel(fixture), &params).await.unwrap();

    assert_eq!(transcript.states.len(), 1);
    assert_eq!(
        transcript.states[0].termination,
        Some(TerminationReason::NoDebateNeeded)
    );
    // the integrated answer is the aggregator's synthesis, not a vote
    assert_eq!(transcript.final_answer, "A red sedan parked by the curb.");
    assert!(transcript.states[0].conflict_score < 0.55);
}

#[tokio::test]
async fn delegation_without_an_aggregator_entry_fails() {
    let raw = std::fs::read_to_string(fixture_path("delegated_freetext")).unwrap();
    let truncated: String = raw
        .split("[[entries]]")
        .filter(|block| !block.contains("specialty = \"aggregator\""))
        .collect::<Vec<_>>()
        .join("[[entries]]");
    let fixture = Arc::new(ScenarioFixture::from_toml_str(&truncated).unwrap());
    assert_eq!(fixture.len(), 3);
    let task = fixture.task.clone().unwrap();
    let err = run_debate(&task, &panel(fixture), &HyperParams::default())
        .await
        .unwrap_err();
    assert!(matches!(err, EngineError::AggregatorFailed(_)), "{err}");
}

#[tokio::test]
async fn dispute_free_rounds_skip_argumentation_and_stall() {
    // the trigger fires on conflict but nobody emits claims, so the first
    // debate round has nothing to argue about: it re-integrates the same
    // material, spends no tokens, and stalls immediately
    let fixture = ScenarioFixture::from_toml_str(
        r#"
[task]
task_id = "no_claims"
question = "Which one?"
answer_options = [ { label = "A", text = "a" }, { label = "B", text = "b" } ]

[[entries]]
specialty = "object_recognition"
round = 0
token_cost = 100
text = "ANSWER: A"

[[entries]]
specialty = "ocr"
round = 0
token_cost = 100
text = "ANSWER: A"

[[entries]]
specialty = "scene_description"
round = 0
token_cost = 100
text = "ANSWER: B"
"#,
    )
    .unwrap();
    let fixture = Arc::new(fixture);
    let task = fixture.task.clone().unwrap();
    let transcript = run_debate(&task, &panel(fixture), &HyperParams::default())
        .await
        .unwrap();

    assert_eq!(transcript.states.len(), 2);
    assert!(transcript.states[1].dispute.is_none());
    assert_eq!(
        transcript.states[1].termination,
        Some(TerminationReason::Stagnation)
    );
    assert!(transcript.arguments.is_empty());
    assert!(transcript.critic_reviews.is_empty());
    // only round 0 spent tokens
    assert_eq!(transcript.total_token_cost, 300);
    assert_eq!(transcript.check(), Ok(()));
}

/// Wrapper that records every context handed to an agent.
struct RecordingBackend {
    inner: ScriptedBackend,
    contexts: std::sync::Mutex<Vec<(u32, String)>>,
}

#[async_trait]
impl AgentBackend for RecordingBackend {
    async fn generate(
        &self,
        role: &AgentRole,
        task: &TaskInput,
        round: u32,
        context: &str,
    ) -> Result<BackendResponse, BackendError> {
        self.contexts
            .lock()
            .unwrap()
            .push((round, context.to_string()));
        self.inner.generate(role, task, round, context).await
    }
}

#[tokio::test]
async fn critic_reviews_feed_the_next_rounds_argument_context() {
    let (fixture, task) = load("max_rounds_cap");
    let mut panel = panel(Arc::clone(&fixture));
    let recorder = Arc::new(RecordingBackend {
        inner: ScriptedBackend::new(Arc::clone(&fixture)),
        contexts: std::sync::Mutex::new(Vec::new()),
    });
    panel.bases[0].backend = Arc::clone(&recorder) as Arc<dyn AgentBackend>;

    run_debate(&task, &panel, &HyperParams::default()).await.unwrap();

    let contexts = recorder.contexts.lock().unwrap();
    let by_round = |k: u32| {
        contexts
            .iter()
            .find(|(round, _)| *round == k)
            .map(|(_, ctx)| ctx.clone())
            .unwrap()
    };
    // round 1 arguments predate any review; rounds 2 and 3 carry the
    // previous round's critic notes
    assert!(!by_round(1).contains("CRITIC REVIEWS"));
    assert!(by_round(2).contains("CRITIC REVIEWS"));
    assert!(by_round(2).contains("Neither color claim can be confirmed yet."));
    assert!(by_round(3).contains("Partial plate reading adds little to the color question."));
    // dispute focus and the previous answer are always present
    assert!(by_round(1).contains("DISPUTED CLAIMS"));
    assert!(by_round(1).contains("PREVIOUS ANSWER"));
}

struct FailingBackend;

#[async_trait]
impl AgentBackend for FailingBackend {
    async fn generate(
        &self,
        _role: &AgentRole,
        _task: &TaskInput,
        _round: u32,
        _context: &str,
    ) -> Result<BackendResponse, BackendError> {
        Err(BackendError::Transport("synthetic outage".to_string()))
    }
}

fn panel_with_failures(fixture: Arc<ScenarioFixture>, failing: &[&str]) -> DebatePanel {
    let config = RunConfig::default();
    let mut panel = scripted_panel(&config, Arc::clone(&fixture));
    for handle in panel.bases.iter_mut() {
        if failing.contains(&handle.id.as_str()) {
            handle.backend = Arc::new(FailingBackend);
        } else {
            handle.backend = Arc::new(ScriptedBackend::new(Arc::clone(&fixture)));
        }
    }
    panel
}

#[tokio::test]
async fn one_failed_backend_degrades_to_survivors() {
    let (fixture, task) = load("easy_consensus");
    let params = HyperParams::default();
    let panel = panel_with_failures(fixture, &["ocr"]);
    let transcript = run_debate(&task, &panel, &params).await.unwrap();
    let state = &transcript.states[0];
    assert_eq!(state.responses.len(), 2);
    let ids: Vec<&str> = state
        .responses
        .iter()
        .map(|r| r.agent_id.as_str())
        .collect();
    assert_eq!(ids, vec!["object_recognition", "scene_description"]);
    let sum: f64 = state.weights.values().iter().sum();
    assert!(close(sum, 1.0, 1e-9));
}

#[tokio::test]
async fn two_failed_backends_abort() {
    let (fixture, task) = load("easy_consensus");
    let params = HyperParams::default();
    let panel = panel_with_failures(fixture, &["ocr", "scene_description"]);
    let err = run_debate(&task, &panel, &params).await.unwrap_err();
    assert!(matches!(
        err,
        EngineError::InsufficientAgents { survivors: 1 }
    ));
}

#[tokio::test]
async fn missing_round_entry_surfaces_as_failure() {
    // truncate fast_converge to round 0 only: round 1 lookups all fail
    let raw = std::fs::read_to_string(fixture_path("fast_converge")).unwrap();
    let head: String = raw.split("# Round 1").next().unwrap().to_string();
    let fixture = Arc::new(ScenarioFixture::from_toml_str(&head).unwrap());
    let task = fixture.task.clone().unwrap();
    let params = HyperParams::default();
    let err = run_debate(&task, &panel(fixture), &params)
        .await
        .unwrap_err();
    assert!(matches!(
        err,
        EngineError::InsufficientAgents { survivors: 0 }
    ));
}
