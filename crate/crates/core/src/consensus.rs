//! System-level consensus logic: weighted system uncertainty, conflict
//! scoring, the debate trigger, dispute identification, and termination.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::config::HyperParams;
use crate::game::similarity;
use crate::model::{
    claim_key, DisputeReason, DisputeSet, DisputedClaim, ResponseRecord, TerminationReason,
};

/// Same-key claims whose evidence similarity falls below this are treated
/// as contradicting each other.
pub const CONTRADICTION_SIM_CUTOFF: f64 = 0.5;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ConsensusError {
    #[error("conflict score needs at least 2 responses, got {0}")]
    TooFewResponses(usize),
    #[error("dimension mismatch: {0} weights vs {1} uncertainties")]
    DimensionMismatch(usize, usize),
}

/// Weighted average uncertainty `sum_i w_i U_i`.
pub fn system_uncertainty(weights: &[f64], uncertainties: &[f64]) -> Result<f64, ConsensusError> {
    if weights.len() != uncertainties.len() {
        return Err(ConsensusError::DimensionMismatch(
            weights.len(),
            uncertainties.len(),
        ));
    }
    Ok(weights.iter().zip(uncertainties).map(|(w, u)| w * u).sum())
}

/// Extracts the final answer from response text: the last line of the form
/// `ANSWER: <text>` (case-insensitive tag).
pub fn final_answer(text: &str) -> Option<String> {
    text.lines().rev().find_map(|line| {
        let trimmed = line.trim();
        let tag_len = "ANSWER:".len();
        let prefix = trimmed.get(..tag_len)?;
        if !prefix.eq_ignore_ascii_case("ANSWER:") {
            return None;
        }
        let rest = trimmed[tag_len..].trim();
        (!rest.is_empty()).then(|| rest.to_string())
    })
}

/// Canonical form used when comparing answers: lower-cased with collapsed
/// whitespace.
pub fn normalize_answer(answer: &str) -> String {
    answer
        .to_lowercase()
        .split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
}

/// Inter-agent conflict in `[0,1]`. When every response carries an
/// extractable final answer this is the fraction of disagreeing agent
/// pairs; otherwise it falls back to one minus the mean pairwise text
/// similarity.
pub fn conflict_score(responses: &[ResponseRecord]) -> Result<f64, ConsensusError> {
    let n = responses.len();
    if n < 2 {
        return Err(ConsensusError::TooFewResponses(n));
    }
    let answers: Vec<Option<String>> = responses
        .iter()
        .map(|r| final_answer(&r.text).map(|a| normalize_answer(&a)))
        .collect();
    let pairs = (n * (n - 1) / 2) as f64;
    if answers.iter().all(Option::is_some) {
        let mut disagreeing = 0usize;
        for i in 0..n {
            for j in (i + 1)..n {
                if answers[i] != answers[j] {
                    disagreeing += 1;
                }
            }
        }
        Ok(disagreeing as f64 / pairs)
    } else {
        let mut total = 0.0;
        for i in 0..n {
            for j in (i + 1)..n {
                total += similarity(&responses[i].text, &responses[j].text);
            }
        }
        Ok((1.0 - total / pairs).clamp(0.0, 1.0))
    }
}

/// Dual-criterion debate trigger: strict threshold crossings on either the
/// system uncertainty or the conflict score.
pub fn should_debate(u_sys: f64, conflict: f64, params: &HyperParams) -> bool {
    u_sys > params.theta_u || conflict > params.theta_c
}

/// Termination check for debate round `round_k >= 1`. Criteria in priority
/// order: uncertainty below the termination threshold, stagnation of the
/// uncertainty trajectory, then the round cap.
pub fn should_terminate(
    u_sys_k: f64,
    u_sys_prev: Option<f64>,
    round_k: u32,
    params: &HyperParams,
) -> Option<TerminationReason> {
    if u_sys_k < params.theta_u_term {
        return Some(TerminationReason::UncertaintyBelowThreshold);
    }
    if let Some(prev) = u_sys_prev {
        if (u_sys_k - prev).abs() < params.epsilon_conv {
            return Some(TerminationReason::Stagnation);
        }
    }
    if round_k >= params.k_max {
        return Some(TerminationReason::MaxRounds);
    }
    None
}

/// Selects the claims a debate round should focus on: claims asserted with
/// low confidence, and same-key claims from different agents whose
/// evidence diverges. Output ordering is deterministic (by claim key, low
/// confidence before contradiction). `prev_answer` and `u_sys_prev`
/// complete the previous-round picture for focusing policies layered on
/// top; the default selection uses the claims alone.
pub fn identify_disputes(
    responses: &[ResponseRecord],
    _prev_answer: &str,
    _u_sys_prev: f64,
    params: &HyperParams,
) -> DisputeSet {
    let round = responses.iter().map(|r| r.round + 1).max().unwrap_or(1);

    let mut by_key: BTreeMap<String, Vec<(&str, &crate::model::ClaimTuple)>> = BTreeMap::new();
    for resp in responses {
        for claim in &resp.claims {
            let key = claim_key(&claim.claim);
            if key.is_empty() {
                continue;
            }
            by_key.entry(key).or_default().push((&resp.agent_id, claim));
        }
    }

    let mut disputed = Vec::new();
    for (key, entries) in &by_key {
        let mut low_conf_agents: Vec<String> = entries
            .iter()
            .filter(|(_, c)| c.confidence < params.sigma_min_dispute)
            .map(|(agent, _)| agent.to_string())
            .collect();
        low_conf_agents.sort();
        low_conf_agents.dedup();
        if !low_conf_agents.is_empty() {
            disputed.push(DisputedClaim {
                claim_key: key.clone(),
                involved_agents: low_conf_agents,
                reason: DisputeReason::LowConfidence,
            });
        }

        let mut agents: Vec<&str> = entries.iter().map(|(agent, _)| *agent).collect();
        agents.sort_unstable();
        agents.dedup();
        if agents.len() >= 2 {
            let mut contradicting = false;
            'outer: for i in 0..entries.len() {
                for j in (i + 1)..entries.len() {
                    if entries[i].0 == entries[j].0 {
                        continue;
                    }
                    let sim = similarity(&entries[i].1.evidence, &entries[j].1.evidence);
                    if sim < CONTRADICTION_SIM_CUTOFF {
                        contradicting = true;
                        break 'outer;
                    }
                }
            }
            if contradicting {
                disputed.push(DisputedClaim {
                    claim_key: key.clone(),
                    involved_agents: agents.iter().map(|a| a.to_string()).collect(),
                    reason: DisputeReason::Contradiction,
                });
            }
        }
    }

    DisputeSet {
        round,
        disputed_claims: disputed,
    }
}
