//! Service API tests through the real client over a loopback listener.

use std::path::PathBuf;

use conclave_client::types::{
    BatchRequest, DebateRequest, OpsAssessRequest, OpsWeightsRequest, ReportRequest,
    SimulateRequest,
};
use conclave_client::{Client, ClientError};
use conclave_core::model::{AnswerOption, TaskInput, TerminationReason, UncertaintySource};

fn fixture(name: &str) -> String {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../core/fixtures")
        .join(format!("{name}.toml"));
    std::fs::read_to_string(path).unwrap()
}

async fn client() -> Client {
    let addr = conclave_server::spawn("127.0.0.1:0").await.unwrap();
    Client::new(format!("http://{addr}"))
}

fn task(id: &str) -> TaskInput {
    TaskInput {
        task_id: id.to_string(),
        question: "What fruit is on the table?".to_string(),
        media: vec![],
        answer_options: Some(vec![
            AnswerOption {
                label: "A".into(),
                text: "an apple".into(),
            },
            AnswerOption {
                label: "B".into(),
                text: "a pear".into(),
            },
        ]),
        ground_truth: Some("A".to_string()),
    }
}

#[tokio::test]
async fn health_endpoint_responds() {
    let client = client().await;
    client.health().await.unwrap();
}

#[tokio::test]
async fn debate_endpoint_runs_an_inline_scenario() {
    let client = client().await;
    let transcript = client
        .run_debate(&DebateRequest {
            task: task("api-1"),
            config: None,
            fixture_inline: Some(fixture("easy_consensus")),
        })
        .await
        .unwrap();
    assert_eq!(transcript.final_answer, "A");
    assert_eq!(
        transcript.final_state().termination,
        Some(TerminationReason::NoDebateNeeded)
    );
}

#[tokio::test]
async fn debate_endpoint_rejects_configs_without_fixture() {
    let client = client().await;
    let err = client
        .run_debate(&DebateRequest {
            task: task("api-2"),
            config: None,
            fixture_inline: None,
        })
        .await
        .unwrap_err();
    match err {
        ClientError::Api { status, message } => {
            assert_eq!(status, 400);
            assert!(message.contains("fixture"), "{message}");
        }
        other => panic!("expected API error, got {other}"),
    }
}

#[tokio::test]
async fn batch_endpoint_runs_tasks_and_rejects_duplicates() {
    let client = client().await;
    let response = client
        .run_batch(&BatchRequest {
            tasks: vec![task("b1"), task("b2"), task("b3")],
            config: None,
            fixture_inline: Some(fixture("easy_consensus")),
        })
        .await
        .unwrap();
    assert_eq!(response.outcomes.len(), 3);
    assert!(response.outcomes.iter().all(|o| o.transcript.is_some()));

    let err = client
        .run_batch(&BatchRequest {
            tasks: vec![task("dup"), task("dup")],
            config: None,
            fixture_inline: Some(fixture("easy_consensus")),
        })
        .await
        .unwrap_err();
    assert!(matches!(err, ClientError::Api { status: 400, .. }));
}

#[tokio::test]
async fn simulate_endpoint_traces_rounds() {
    let client = client().await;
    let response = client
        .simulate(&SimulateRequest {
            scenario_inline: Some(fixture("fast_converge")),
            scenario_path: None,
            config: None,
        })
        .await
        .unwrap();
    assert_eq!(response.trace.len(), 2);
    assert_eq!(response.trace[0].agents.len(), 3);
    assert_eq!(
        response.trace[1].termination,
        Some(TerminationReason::UncertaintyBelowThreshold)
    );
    assert!(response.trace[1].dispute_count >= 1);

    let err = client
        .simulate(&SimulateRequest {
            scenario_inline: Some("not valid = [toml".to_string()),
            scenario_path: None,
            config: None,
        })
        .await
        .unwrap_err();
    assert!(matches!(err, ClientError::Api { status: 400, .. }));
}

#[tokio::test]
async fn report_endpoint_aggregates_transcripts() {
    let client = client().await;
    let mut transcripts = Vec::new();
    for (id, scenario) in [("r1", "easy_consensus"), ("r2", "fast_converge")] {
        transcripts.push(
            client
                .run_debate(&DebateRequest {
                    task: task(id),
                    config: None,
                    fixture_inline: Some(fixture(scenario)),
                })
                .await
                .unwrap(),
        );
    }
    let analytics = client
        .report(&ReportRequest {
            transcripts,
            bins: 10,
            ua_threshold: 0.5,
        })
        .await
        .unwrap();
    assert_eq!(analytics.cost.trigger_rate, 0.5);
    let calibration = analytics.calibration.expect("tasks carry ground truth");
    assert_eq!(calibration.n_samples, 2);
}

#[tokio::test]
async fn ops_endpoints_cover_the_pure_operations() {
    let client = client().await;

    let weights = client
        .weights(&OpsWeightsRequest {
            uncertainties: vec![0.2, 0.5, 0.8],
            beta: 1.5,
        })
        .await
        .unwrap()
        .weights;
    assert!((weights[0] - 0.48917).abs() < 1e-4);

    let assessed = client
        .assess(&OpsAssessRequest {
            text: "this might possibly be wrong".to_string(),
            token_distributions: None,
            params: None,
        })
        .await
        .unwrap();
    assert_eq!(assessed.source, UncertaintySource::Semantic);
    assert!(assessed.uncertainty > 0.0 && assessed.uncertainty < 1.0);

    let parsed = client
        .parse_claims("CLAIM: a thing | CONF: 0.8 | EVIDENCE: seen clearly")
        .await
        .unwrap();
    assert_eq!(parsed.claims.len(), 1);
    assert_eq!(parsed.claims[0].confidence, 0.8);

    let err = client
        .parse_claims("CLAIM: bad | CONF: 7")
        .await
        .unwrap_err();
    assert!(matches!(err, ClientError::Api { status: 400, .. }));
}
