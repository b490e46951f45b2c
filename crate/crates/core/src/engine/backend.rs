//! Pluggable agent backend contract.

use async_trait::async_trait;
use thiserror::Error;

use crate::model::{AgentRole, TaskInput, TokenDistribution};

#[derive(Debug, Error)]
pub enum BackendError {
    #[error("no fixture entry for specialty {specialty:?} at round {round}")]
    MissingFixtureEntry { specialty: String, round: u32 },
    #[error("http status {status}: {message}")]
    Http { status: u16, message: String },
    #[error("transport failure: {0}")]
    Transport(String),
    #[error("gave up after {attempts} attempts: {last}")]
    Exhausted { attempts: u32, last: String },
    #[error("invalid backend response: {0}")]
    InvalidResponse(String),
}

/// Raw material returned by one agent invocation.
#[derive(Debug, Clone)]
pub struct BackendResponse {
    pub text: String,
    pub token_distributions: Option<Vec<TokenDistribution>>,
    /// Prompt tokens plus completion tokens.
    pub token_cost: u64,
}

/// An agent implementation. Scripted backends must be deterministic: the
/// same (role, task, round, context) always yields the same output. Live
/// backends must be safe for concurrent `generate` calls; the engine fans
/// out one call per agent within a round.
#[async_trait]
pub trait AgentBackend: Send + Sync {
    async fn generate(
        &self,
        role: &AgentRole,
        task: &TaskInput,
        round: u32,
        context: &str,
    ) -> Result<BackendResponse, BackendError>;
}
