//! Scenario fixtures: deterministic scripted agents for desk-scale runs.
//!
//! A fixture is a TOML file mapping `(specialty, round)` to a response.
//! Entries may optionally pin a `task_id`, letting one fixture drive a
//! heterogeneous batch; lookup tries the task-specific key first. An
//! optional `[task]` table embeds a task so the scenario is runnable on
//! its own (the `simulate` path).
//!
//! ```toml
//! name = "easy_consensus"
//!
//! [task]
//! task_id = "demo"
//! question = "Which label fits?"
//! answer_options = [{ label = "A", text = "first" }]
//!
//! [[entries]]
//! specialty = "object_recognition"
//! round = 0
//! text = """
//! CLAIM: subject | CONF: 0.9 | EVIDENCE: clearly visible
//! ANSWER: A
//! """
//! token_cost = 100
//! probs = [[1.0]]          # optional per-position probabilities
//! vocab_size_hint = 2      # optional, defaults to 32000
//! ```

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use async_trait::async_trait;
use serde::Deserialize;
use thiserror::Error;

use crate::engine::backend::{AgentBackend, BackendError, BackendResponse};
use crate::model::{AgentRole, ModelError, TaskInput, TokenDistribution};

pub const DEFAULT_VOCAB_SIZE_HINT: usize = 32000;

#[derive(Debug, Error)]
pub enum FixtureError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("cannot parse scenario: {0}")]
    Parse(String),
    #[error("entry {index} ({specialty:?} round {round}): {source}")]
    Entry {
        index: usize,
        specialty: String,
        round: u32,
        #[source]
        source: ModelError,
    },
    #[error("duplicate entry for {specialty:?} round {round}")]
    Duplicate { specialty: String, round: u32 },
}

#[derive(Debug, Deserialize)]
struct RawFixture {
    #[serde(default)]
    name: String,
    #[serde(default)]
    task: Option<TaskInput>,
    #[serde(default)]
    entries: Vec<RawEntry>,
}

#[derive(Debug, Deserialize)]
struct RawEntry {
    specialty: String,
    round: u32,
    #[serde(default)]
    task_id: Option<String>,
    text: String,
    #[serde(default)]
    token_cost: u64,
    #[serde(default)]
    probs: Option<Vec<Vec<f64>>>,
    #[serde(default)]
    vocab_size_hint: Option<usize>,
}

type EntryKey = (Option<String>, String, u32);

/// A parsed, validated scenario.
#[derive(Debug)]
pub struct ScenarioFixture {
    pub name: String,
    pub task: Option<TaskInput>,
    entries: HashMap<EntryKey, BackendResponse>,
}

impl ScenarioFixture {
    pub fn load(path: &Path) -> Result<Self, FixtureError> {
        let raw = std::fs::read_to_string(path).map_err(|source| FixtureError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_toml_str(&raw)
    }

    pub fn from_toml_str(raw: &str) -> Result<Self, FixtureError> {
        let parsed: RawFixture =
            toml::from_str(raw).map_err(|e| FixtureError::Parse(e.to_string()))?;
        let mut entries = HashMap::new();
        for (index, entry) in parsed.entries.into_iter().enumerate() {
            let hint = entry.vocab_size_hint.unwrap_or(DEFAULT_VOCAB_SIZE_HINT);
            let dists = match entry.probs {
                None => None,
                Some(positions) => {
                    let mut dists = Vec::with_capacity(positions.len());
                    for probs in &positions {
                        let dist = TokenDistribution::from_probs(probs, hint.max(probs.len()))
                            .map_err(|source| FixtureError::Entry {
                                index,
                                specialty: entry.specialty.clone(),
                                round: entry.round,
                                source,
                            })?;
                        dists.push(dist);
                    }
                    Some(dists)
                }
            };
            let key = (entry.task_id, entry.specialty.clone(), entry.round);
            let response = BackendResponse {
                text: entry.text,
                token_distributions: dists,
                token_cost: entry.token_cost,
            };
            if entries.insert(key, response).is_some() {
                return Err(FixtureError::Duplicate {
                    specialty: entry.specialty,
                    round: entry.round,
                });
            }
        }
        Ok(ScenarioFixture {
            name: parsed.name,
            task: parsed.task,
            entries,
        })
    }

    pub fn lookup(&self, task_id: &str, specialty: &str, round: u32) -> Option<&BackendResponse> {
        self.entries
            .get(&(Some(task_id.to_string()), specialty.to_string(), round))
            .or_else(|| self.entries.get(&(None, specialty.to_string(), round)))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Backend that replays fixture entries keyed by (specialty, round).
#[derive(Debug, Clone)]
pub struct ScriptedBackend {
    fixture: Arc<ScenarioFixture>,
}

impl ScriptedBackend {
    pub fn new(fixture: Arc<ScenarioFixture>) -> Self {
        ScriptedBackend { fixture }
    }
}

#[async_trait]
impl AgentBackend for ScriptedBackend {
    async fn generate(
        &self,
        role: &AgentRole,
        task: &TaskInput,
        round: u32,
        _context: &str,
    ) -> Result<BackendResponse, BackendError> {
        self.fixture
            .lookup(&task.task_id, &role.specialty, round)
            .cloned()
            .ok_or_else(|| BackendError::MissingFixtureEntry {
                specialty: role.specialty.clone(),
                round,
            })
    }
}
