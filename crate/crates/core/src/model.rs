//! Domain types shared by every stage of the debate pipeline.
//!
//! All types are immutable value objects once constructed; constructors
//! validate the invariants that later stages rely on. Weight vectors
//! computed internally must lie on the simplex to 1e-9, while probability
//! vectors ingested from external sources are accepted to 1e-6 because
//! serialized data carries rounding noise.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Simplex tolerance for internally computed weight vectors.
pub const WEIGHT_SUM_TOL: f64 = 1e-9;
/// Sum tolerance for externally ingested probability vectors.
pub const PROB_SUM_TOL: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("invalid {type_name}: {reason}")]
    Invalid {
        type_name: &'static str,
        reason: String,
    },
}

impl ModelError {
    fn invalid(type_name: &'static str, reason: impl Into<String>) -> Self {
        ModelError::Invalid {
            type_name,
            reason: reason.into(),
        }
    }
}

/// One labeled answer choice of a multiple-choice task.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnswerOption {
    pub label: String,
    pub text: String,
}

/// A single task instance: a question over optional media, with optional
/// answer choices and an optional evaluation-only ground truth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskInput {
    pub task_id: String,
    pub question: String,
    #[serde(default)]
    pub media: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub answer_options: Option<Vec<AnswerOption>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ground_truth: Option<String>,
}

impl TaskInput {
    pub fn validate(&self) -> Result<(), ModelError> {
        if self.task_id.trim().is_empty() {
            return Err(ModelError::invalid(
                "TaskInput",
                "task_id must be non-empty",
            ));
        }
        if let Some(options) = &self.answer_options {
            let mut labels: Vec<&str> = options.iter().map(|o| o.label.as_str()).collect();
            labels.sort_unstable();
            labels.dedup();
            if labels.len() != options.len() {
                return Err(ModelError::invalid(
                    "TaskInput",
                    "answer option labels must be distinct",
                ));
            }
        }
        Ok(())
    }
}

/// Probability distribution over candidate tokens at one generation
/// position, sorted descending. `vocab_size_hint` is the effective support
/// size used to normalize entropy: real APIs expose only top-K
/// probabilities, so the full-vocabulary entropy is unobservable and the
/// hint stands in for the vocabulary size.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TokenDistribution {
    probabilities: Vec<(String, f64)>,
    vocab_size_hint: usize,
}

impl TokenDistribution {
    pub fn new(
        probabilities: Vec<(String, f64)>,
        vocab_size_hint: usize,
    ) -> Result<Self, ModelError> {
        let dist = TokenDistribution {
            probabilities,
            vocab_size_hint,
        };
        dist.check()?;
        Ok(dist)
    }

    /// Builds a distribution from bare probabilities, naming tokens by
    /// position. Convenient for scripted fixtures and tests.
    pub fn from_probs(probs: &[f64], vocab_size_hint: usize) -> Result<Self, ModelError> {
        let entries = probs
            .iter()
            .enumerate()
            .map(|(i, &p)| (format!("t{i}"), p))
            .collect();
        Self::new(entries, vocab_size_hint)
    }

    fn check(&self) -> Result<(), ModelError> {
        if self.probabilities.is_empty() {
            return Err(ModelError::invalid(
                "TokenDistribution",
                "support must be non-empty",
            ));
        }
        if self.vocab_size_hint < self.probabilities.len() {
            return Err(ModelError::invalid(
                "TokenDistribution",
                format!(
                    "vocab_size_hint {} smaller than support {}",
                    self.vocab_size_hint,
                    self.probabilities.len()
                ),
            ));
        }
        let mut sum = 0.0;
        let mut prev = f64::INFINITY;
        for (token, p) in &self.probabilities {
            if !(0.0..=1.0).contains(p) {
                return Err(ModelError::invalid(
                    "TokenDistribution",
                    format!("probability {p} for token {token:?} outside [0,1]"),
                ));
            }
            if *p > prev {
                return Err(ModelError::invalid(
                    "TokenDistribution",
                    "probabilities must be sorted descending",
                ));
            }
            prev = *p;
            sum += p;
        }
        if (sum - 1.0).abs() > PROB_SUM_TOL {
            return Err(ModelError::invalid(
                "TokenDistribution",
                format!("probabilities sum to {sum}, expected 1 within {PROB_SUM_TOL}"),
            ));
        }
        Ok(())
    }

    pub fn probabilities(&self) -> &[(String, f64)] {
        &self.probabilities
    }

    /// Probabilities without token ids, descending.
    pub fn probs(&self) -> impl Iterator<Item = f64> + '_ {
        self.probabilities.iter().map(|(_, p)| *p)
    }

    pub fn vocab_size_hint(&self) -> usize {
        self.vocab_size_hint
    }
}

/// Visual region reference attached to a claim: either a normalized
/// bounding box or a free-text descriptor, with the mapping confidence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionRef {
    pub shape: RegionShape,
    pub map_confidence: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RegionShape {
    /// Corners normalized to `[0,1]`; x0 < x1 and y0 < y1.
    Bbox {
        x0: f64,
        y0: f64,
        x1: f64,
        y1: f64,
    },
    Descriptor {
        text: String,
    },
}

impl RegionRef {
    pub fn bbox(
        x0: f64,
        y0: f64,
        x1: f64,
        y1: f64,
        map_confidence: f64,
    ) -> Result<Self, ModelError> {
        let r = RegionRef {
            shape: RegionShape::Bbox { x0, y0, x1, y1 },
            map_confidence,
        };
        r.check()?;
        Ok(r)
    }

    pub fn descriptor(text: impl Into<String>, map_confidence: f64) -> Result<Self, ModelError> {
        let r = RegionRef {
            shape: RegionShape::Descriptor { text: text.into() },
            map_confidence,
        };
        r.check()?;
        Ok(r)
    }

    pub fn check(&self) -> Result<(), ModelError> {
        if !(0.0..=1.0).contains(&self.map_confidence) {
            return Err(ModelError::invalid(
                "RegionRef",
                "map_confidence outside [0,1]",
            ));
        }
        match &self.shape {
            RegionShape::Bbox { x0, y0, x1, y1 } => {
                let coords = [*x0, *y0, *x1, *y1];
                if coords.iter().any(|c| !(0.0..=1.0).contains(c)) {
                    return Err(ModelError::invalid(
                        "RegionRef",
                        "bbox coordinates outside [0,1]",
                    ));
                }
                if x0 >= x1 || y0 >= y1 {
                    return Err(ModelError::invalid(
                        "RegionRef",
                        "bbox corners must be ordered",
                    ));
                }
            }
            RegionShape::Descriptor { text } => {
                if text.trim().is_empty() {
                    return Err(ModelError::invalid(
                        "RegionRef",
                        "descriptor must be non-empty",
                    ));
                }
            }
        }
        Ok(())
    }
}

/// Structured unit of agent output: a claim with its self-reported
/// confidence, supporting evidence text, and an optional visual region.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClaimTuple {
    pub claim: String,
    pub confidence: f64,
    pub evidence: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub region: Option<RegionRef>,
}

impl ClaimTuple {
    pub fn check(&self) -> Result<(), ModelError> {
        if self.claim.trim().is_empty() {
            return Err(ModelError::invalid("ClaimTuple", "claim must be non-empty"));
        }
        if !(0.0..=1.0).contains(&self.confidence) {
            return Err(ModelError::invalid(
                "ClaimTuple",
                format!("confidence {} outside [0,1]", self.confidence),
            ));
        }
        if let Some(region) = &self.region {
            region.check()?;
        }
        Ok(())
    }
}

/// Normalized dispute-grouping key for a claim: lower-cased,
/// punctuation-stripped, whitespace-normalized claim text.
pub fn claim_key(text: &str) -> String {
    let lowered = text.to_lowercase();
    let stripped: String = lowered
        .chars()
        .map(|c| {
            if c.is_alphanumeric() || c.is_whitespace() {
                c
            } else {
                ' '
            }
        })
        .collect();
    stripped.split_whitespace().collect::<Vec<_>>().join(" ")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RoleCategory {
    Base,
    Critic,
    Aggregator,
}

/// Agent role configuration: category, specialty tag, and the persona
/// prompt injected as the system message for live backends.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentRole {
    pub category: RoleCategory,
    pub specialty: String,
    pub prompt_template: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UncertaintySource {
    Generation,
    Semantic,
}

/// One agent's output for one round, with its quantified uncertainty.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResponseRecord {
    pub agent_id: String,
    pub role: AgentRole,
    pub round: u32,
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub token_distributions: Option<Vec<TokenDistribution>>,
    pub claims: Vec<ClaimTuple>,
    pub uncertainty: f64,
    pub uncertainty_source: UncertaintySource,
    pub token_cost: u64,
}

impl ResponseRecord {
    pub fn check(&self) -> Result<(), ModelError> {
        if !(0.0..=1.0).contains(&self.uncertainty) {
            return Err(ModelError::invalid(
                "ResponseRecord",
                format!("uncertainty {} outside [0,1]", self.uncertainty),
            ));
        }
        if self.uncertainty_source == UncertaintySource::Generation
            && self
                .token_distributions
                .as_ref()
                .map(|d| d.is_empty())
                .unwrap_or(true)
        {
            return Err(ModelError::invalid(
                "ResponseRecord",
                "generation-sourced uncertainty requires token distributions",
            ));
        }
        if let Some(dists) = &self.token_distributions {
            for d in dists {
                d.check()?;
            }
        }
        for c in &self.claims {
            c.check()?;
        }
        Ok(())
    }
}

/// Per-agent influence weights on the simplex, paired with agent ids in a
/// fixed order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightVector {
    weights: Vec<(String, f64)>,
}

impl WeightVector {
    pub fn new(weights: Vec<(String, f64)>) -> Result<Self, ModelError> {
        if weights.is_empty() {
            return Err(ModelError::invalid("WeightVector", "must be non-empty"));
        }
        let mut sum = 0.0;
        for (id, w) in &weights {
            if *w < 0.0 {
                return Err(ModelError::invalid(
                    "WeightVector",
                    format!("weight {w} for {id:?} is negative"),
                ));
            }
            sum += w;
        }
        if (sum - 1.0).abs() > WEIGHT_SUM_TOL {
            return Err(ModelError::invalid(
                "WeightVector",
                format!("weights sum to {sum}, expected 1 within {WEIGHT_SUM_TOL}"),
            ));
        }
        Ok(WeightVector { weights })
    }

    pub fn entries(&self) -> &[(String, f64)] {
        &self.weights
    }

    /// Weights in entry order, without agent ids.
    pub fn values(&self) -> Vec<f64> {
        self.weights.iter().map(|(_, w)| *w).collect()
    }

    pub fn get(&self, agent_id: &str) -> Option<f64> {
        self.weights
            .iter()
            .find(|(id, _)| id == agent_id)
            .map(|(_, w)| *w)
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }
}

/// Argument emitted by a base agent inside a debate round (rounds >= 1).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArgumentPackage {
    pub agent_id: String,
    pub round: u32,
    pub argument_text: String,
    pub evidence_items: Vec<ClaimTuple>,
    pub confidence: f64,
}

impl ArgumentPackage {
    pub fn check(&self) -> Result<(), ModelError> {
        if self.round < 1 {
            return Err(ModelError::invalid(
                "ArgumentPackage",
                "arguments exist only inside debates (round >= 1)",
            ));
        }
        if !(0.0..=1.0).contains(&self.confidence) {
            return Err(ModelError::invalid(
                "ArgumentPackage",
                "confidence outside [0,1]",
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DisputeReason {
    LowConfidence,
    Contradiction,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DisputedClaim {
    pub claim_key: String,
    pub involved_agents: Vec<String>,
    pub reason: DisputeReason,
}

/// Claims selected as the focus of one debate round.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DisputeSet {
    pub round: u32,
    pub disputed_claims: Vec<DisputedClaim>,
}

/// Why a debate stopped. When several criteria hold at once the most
/// informative one wins: uncertainty_below_threshold > stagnation >
/// max_rounds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TerminationReason {
    UncertaintyBelowThreshold,
    Stagnation,
    MaxRounds,
    NoDebateNeeded,
}

/// Full system state after one round: responses, weights, the weighted
/// system uncertainty, conflict score, dispute focus, and the integrated
/// answer. `termination` is present only on the final state of a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DebateState {
    pub round: u32,
    pub responses: Vec<ResponseRecord>,
    pub weights: WeightVector,
    pub system_uncertainty: f64,
    pub conflict_score: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dispute: Option<DisputeSet>,
    pub integrated_answer: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub termination: Option<TerminationReason>,
}

/// Lexicon of hedge/confidence markers used by the semantic uncertainty
/// estimator. Phrases are case-normalized; weights are positive.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarkerLexicon {
    entries: Vec<(String, f64)>,
}

impl MarkerLexicon {
    pub fn new(entries: Vec<(String, f64)>) -> Result<Self, ModelError> {
        let mut normalized = Vec::with_capacity(entries.len());
        for (phrase, weight) in entries {
            let phrase = phrase.to_lowercase();
            if phrase.trim().is_empty() {
                return Err(ModelError::invalid("MarkerLexicon", "empty marker phrase"));
            }
            if weight <= 0.0 {
                return Err(ModelError::invalid(
                    "MarkerLexicon",
                    format!("non-positive weight {weight} for {phrase:?}"),
                ));
            }
            normalized.push((phrase, weight));
        }
        // Longest-match-first scan order; lexicographic tiebreak keeps the
        // ordering deterministic.
        normalized.sort_by(|(a, _), (b, _)| b.len().cmp(&a.len()).then_with(|| a.cmp(b)));
        Ok(MarkerLexicon {
            entries: normalized,
        })
    }

    /// Entries sorted longest phrase first.
    pub fn entries(&self) -> &[(String, f64)] {
        &self.entries
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Checks every type invariant of a debate state against the configured
/// parameters, returning a human-readable line per violation. Violations
/// are reported, not thrown: the empty report means the state is sound.
pub fn validate_state(state: &DebateState, _params: &crate::config::HyperParams) -> Vec<String> {
    let mut report = Vec::new();

    let mut sum = 0.0;
    for (id, w) in state.weights.entries() {
        if *w < 0.0 {
            report.push(format!("weight for {id:?} is negative: {w}"));
        }
        sum += w;
    }
    if (sum - 1.0).abs() > WEIGHT_SUM_TOL {
        report.push(format!(
            "weights sum to {sum}, expected 1 within {WEIGHT_SUM_TOL}"
        ));
    }

    for resp in &state.responses {
        if let Err(e) = resp.check() {
            report.push(format!("response {:?}: {e}", resp.agent_id));
        }
        if resp.round != state.round {
            report.push(format!(
                "response {:?} carries round {}, state is round {}",
                resp.agent_id, resp.round, state.round
            ));
        }
        if state.weights.get(&resp.agent_id).is_none() {
            report.push(format!(
                "response {:?} has no matching weight entry",
                resp.agent_id
            ));
        }
    }

    if !(0.0..=1.0).contains(&state.system_uncertainty) {
        report.push(format!(
            "system_uncertainty {} outside [0,1]",
            state.system_uncertainty
        ));
    }
    if !(0.0..=1.0).contains(&state.conflict_score) {
        report.push(format!(
            "conflict_score {} outside [0,1]",
            state.conflict_score
        ));
    }

    // U_sys must equal weight-dot-uncertainty over the recorded responses.
    let mut dot = 0.0;
    let mut matched = true;
    for (id, w) in state.weights.entries() {
        match state.responses.iter().find(|r| &r.agent_id == id) {
            Some(resp) => dot += w * resp.uncertainty,
            None => matched = false,
        }
    }
    if matched && (dot - state.system_uncertainty).abs() > WEIGHT_SUM_TOL {
        report.push(format!(
            "system_uncertainty {} != weight-dot-uncertainty {dot}",
            state.system_uncertainty
        ));
    }

    if let Some(dispute) = &state.dispute {
        if dispute.disputed_claims.is_empty() {
            report.push("dispute set present but empty".to_string());
        }
        if dispute.round < 1 {
            report.push("dispute set round must be >= 1".to_string());
        }
    }

    report
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::HyperParams;

    fn role(specialty: &str) -> AgentRole {
        AgentRole {
            category: RoleCategory::Base,
            specialty: specialty.to_string(),
            prompt_template: String::new(),
        }
    }

    fn response(agent_id: &str, uncertainty: f64) -> ResponseRecord {
        ResponseRecord {
            agent_id: agent_id.to_string(),
            role: role(agent_id),
            round: 0,
            text: "x".to_string(),
            token_distributions: None,
            claims: vec![],
            uncertainty,
            uncertainty_source: UncertaintySource::Semantic,
            token_cost: 0,
        }
    }

    fn state(
        weights: Vec<(String, f64)>,
        responses: Vec<ResponseRecord>,
        u_sys: f64,
    ) -> DebateState {
        DebateState {
            round: 0,
            responses,
            weights: WeightVector { weights },
            system_uncertainty: u_sys,
            conflict_score: 0.0,
            dispute: None,
            integrated_answer: String::new(),
            termination: None,
        }
    }

    #[test]
    fn token_distribution_accepts_valid_and_rejects_invalid() {
        assert!(TokenDistribution::from_probs(&[0.7, 0.2, 0.1], 3).is_ok());
        assert!(TokenDistribution::from_probs(&[0.2, 0.7, 0.1], 3).is_err());
        assert!(TokenDistribution::from_probs(&[0.7, 0.2], 3).is_err());
        assert!(TokenDistribution::from_probs(&[0.7, 0.2, 0.1], 2).is_err());
        assert!(TokenDistribution::from_probs(&[], 4).is_err());
        // 1e-6 ingestion slack
        assert!(TokenDistribution::from_probs(&[0.7, 0.2, 0.0999999], 3).is_ok());
    }

    #[test]
    fn weight_vector_requires_simplex() {
        assert!(WeightVector::new(vec![("a".into(), 0.5), ("b".into(), 0.5)]).is_ok());
        assert!(WeightVector::new(vec![("a".into(), 0.6), ("b".into(), 0.6)]).is_err());
        assert!(WeightVector::new(vec![("a".into(), 1.1), ("b".into(), -0.1)]).is_err());
        assert!(WeightVector::new(vec![]).is_err());
    }

    #[test]
    fn region_ref_invariants() {
        assert!(RegionRef::bbox(0.1, 0.2, 0.5, 0.6, 0.9).is_ok());
        assert!(RegionRef::bbox(0.5, 0.2, 0.1, 0.6, 0.9).is_err());
        assert!(RegionRef::bbox(0.1, 0.2, 1.5, 0.6, 0.9).is_err());
        assert!(RegionRef::descriptor(" ", 0.5).is_err());
        assert!(RegionRef::descriptor("the sign on the left", 0.5).is_ok());
    }

    #[test]
    fn claim_key_normalizes() {
        assert_eq!(claim_key("The Car,  is RED!"), "the car is red");
        assert_eq!(claim_key("car color"), "car color");
        assert_eq!(claim_key("  "), "");
    }

    #[test]
    fn validate_state_empty_report_on_consistent_state() {
        let s = state(
            vec![("a".into(), 0.5), ("b".into(), 0.5)],
            vec![response("a", 0.2), response("b", 0.62)],
            0.41,
        );
        assert!(validate_state(&s, &HyperParams::default()).is_empty());
    }

    #[test]
    fn validate_state_reports_simplex_violation() {
        let s = state(
            vec![("a".into(), 0.6), ("b".into(), 0.6)],
            vec![response("a", 0.2), response("b", 0.2)],
            0.24,
        );
        let report = validate_state(&s, &HyperParams::default());
        assert!(report.iter().any(|line| line.contains("sum")), "{report:?}");
    }

    #[test]
    fn validate_state_reports_usys_mismatch() {
        // weight-dot-uncertainty is 0.5*0.2 + 0.5*0.62 = 0.41, not 0.4
        let s = state(
            vec![("a".into(), 0.5), ("b".into(), 0.5)],
            vec![response("a", 0.2), response("b", 0.62)],
            0.4,
        );
        let report = validate_state(&s, &HyperParams::default());
        assert!(
            report
                .iter()
                .any(|line| line.contains("weight-dot-uncertainty")),
            "{report:?}"
        );
    }

    #[test]
    fn generation_source_requires_distributions() {
        let mut r = response("a", 0.1);
        r.uncertainty_source = UncertaintySource::Generation;
        assert!(r.check().is_err());
        r.token_distributions = Some(vec![TokenDistribution::from_probs(&[1.0], 1).unwrap()]);
        assert!(r.check().is_ok());
    }
}
