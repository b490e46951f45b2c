//! Uncertainty-driven, game-theoretic multi-agent debate engine.
//!
//! The crate orchestrates a panel of specialist agents over a shared task:
//! each agent's uncertainty is quantified from token distributions (or from
//! hedge-marker density when distributions are unavailable), influence
//! weights are allocated by an entropy-regularized softmax, and a conflict-
//! gated debate loop iterates until the weighted system uncertainty
//! converges. Agent backends are pluggable, so the whole protocol runs
//! deterministically against scripted scenario fixtures as well as against
//! OpenAI-compatible HTTP endpoints.

pub mod analytics;
pub mod claims;
pub mod config;
pub mod consensus;
pub mod engine;
pub mod game;
pub mod model;
pub mod uncertainty;

pub use config::{HyperParams, RunConfig};
pub use engine::{run_debate, DebateTranscript};
pub use model::{
    AgentRole, ArgumentPackage, ClaimTuple, DebateState, DisputeSet, MarkerLexicon, RegionRef,
    ResponseRecord, TaskInput, TerminationReason, TokenDistribution, WeightVector,
};
