//! Debate transcripts and their canonical line-delimited serialization.
//!
//! A transcript file carries one JSON record per line: a schema-versioned
//! meta record, one record per state/argument/review, and a closing
//! summary. Record ordering is canonical (states by round, arguments and
//! reviews by round then agent id), so replaying a scripted scenario
//! reproduces the file byte for byte. Wall-clock time is kept on the
//! in-memory transcript but deliberately left out of the canonical lines.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{ArgumentPackage, DebateState, TaskInput};

pub const TRANSCRIPT_SCHEMA: &str = "conclave.transcript/1";

#[derive(Debug, Error)]
pub enum TranscriptError {
    #[error("line {line}: {reason}")]
    Malformed { line: usize, reason: String },
    #[error("unsupported schema {got:?}, expected {TRANSCRIPT_SCHEMA:?}")]
    SchemaMismatch { got: String },
    #[error("transcript is missing its {0} record")]
    MissingRecord(&'static str),
}

/// A critic's verification note on one round's arguments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriticReview {
    pub agent_id: String,
    pub round: u32,
    pub text: String,
}

/// Full record of one debate: every state, argument, and review, plus the
/// final answer and cost totals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DebateTranscript {
    pub task: TaskInput,
    pub states: Vec<DebateState>,
    pub arguments: Vec<ArgumentPackage>,
    pub critic_reviews: Vec<CriticReview>,
    pub final_answer: String,
    pub total_token_cost: u64,
    #[serde(default)]
    pub wall_time_ms: u64,
}

impl DebateTranscript {
    /// Structural invariants: rounds consecutive from 0, termination only
    /// and always on the last state, token totals consistent.
    pub fn check(&self) -> Result<(), String> {
        if self.states.is_empty() {
            return Err("transcript has no states".to_string());
        }
        for (i, state) in self.states.iter().enumerate() {
            if state.round != i as u32 {
                return Err(format!("state {i} carries round {}", state.round));
            }
            let is_last = i == self.states.len() - 1;
            if is_last && state.termination.is_none() {
                return Err("final state lacks a termination reason".to_string());
            }
            if !is_last && state.termination.is_some() {
                return Err(format!("non-final state {i} carries a termination reason"));
            }
        }
        let cost: u64 = self
            .states
            .iter()
            .flat_map(|s| s.responses.iter())
            .map(|r| r.token_cost)
            .sum();
        if cost != self.total_token_cost {
            return Err(format!(
                "total_token_cost {} != summed response cost {cost}",
                self.total_token_cost
            ));
        }
        Ok(())
    }

    /// Debate rounds actually run (states beyond round 0).
    pub fn debate_rounds(&self) -> u32 {
        (self.states.len() as u32).saturating_sub(1)
    }

    pub fn final_state(&self) -> &DebateState {
        self.states
            .last()
            .expect("transcript has at least one state")
    }
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum Record {
    Meta {
        schema: String,
        task: TaskInput,
    },
    State {
        state: DebateState,
    },
    Argument {
        argument: ArgumentPackage,
    },
    Review {
        review: CriticReview,
    },
    Summary {
        final_answer: String,
        total_token_cost: u64,
    },
}

/// Serializes a transcript into its canonical line-delimited form.
pub fn write_lines(transcript: &DebateTranscript) -> String {
    let mut arguments = transcript.arguments.clone();
    arguments.sort_by(|a, b| (a.round, &a.agent_id).cmp(&(b.round, &b.agent_id)));
    let mut reviews = transcript.critic_reviews.clone();
    reviews.sort_by(|a, b| (a.round, &a.agent_id).cmp(&(b.round, &b.agent_id)));

    let mut records = Vec::new();
    records.push(Record::Meta {
        schema: TRANSCRIPT_SCHEMA.to_string(),
        task: transcript.task.clone(),
    });
    for state in &transcript.states {
        records.push(Record::State {
            state: state.clone(),
        });
    }
    for argument in arguments {
        records.push(Record::Argument { argument });
    }
    for review in reviews {
        records.push(Record::Review { review });
    }
    records.push(Record::Summary {
        final_answer: transcript.final_answer.clone(),
        total_token_cost: transcript.total_token_cost,
    });

    let mut out = String::new();
    for record in records {
        out.push_str(&serde_json::to_string(&record).expect("transcript records serialize"));
        out.push('\n');
    }
    out
}

/// Parses the canonical line format back into a transcript. Wall time is
/// not part of the canonical form and comes back as 0.
pub fn parse_lines(input: &str) -> Result<DebateTranscript, TranscriptError> {
    let mut task = None;
    let mut states = Vec::new();
    let mut arguments = Vec::new();
    let mut critic_reviews = Vec::new();
    let mut summary = None;

    for (idx, line) in input.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let record: Record =
            serde_json::from_str(line).map_err(|e| TranscriptError::Malformed {
                line: idx + 1,
                reason: e.to_string(),
            })?;
        match record {
            Record::Meta { schema, task: t } => {
                if schema != TRANSCRIPT_SCHEMA {
                    return Err(TranscriptError::SchemaMismatch { got: schema });
                }
                task = Some(t);
            }
            Record::State { state } => states.push(state),
            Record::Argument { argument } => arguments.push(argument),
            Record::Review { review } => critic_reviews.push(review),
            Record::Summary {
                final_answer,
                total_token_cost,
            } => summary = Some((final_answer, total_token_cost)),
        }
    }

    let task = task.ok_or(TranscriptError::MissingRecord("meta"))?;
    let (final_answer, total_token_cost) =
        summary.ok_or(TranscriptError::MissingRecord("summary"))?;
    states.sort_by_key(|s| s.round);
    Ok(DebateTranscript {
        task,
        states,
        arguments,
        critic_reviews,
        final_answer,
        total_token_cost,
        wall_time_ms: 0,
    })
}
