//! Uncertainty quantification over agent responses.
//!
//! Two estimators with a priority rule between them: when per-position
//! token distributions are available the generation-process metric blends
//! normalized entropy (hesitation) with the inverse top-probability gap
//! (lack of conviction); otherwise a semantic estimator scores the density
//! of hedge markers in the response text through a sigmoid.

use thiserror::Error;

use crate::config::HyperParams;
use crate::model::{MarkerLexicon, ResponseRecord, TokenDistribution, UncertaintySource};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum UncertaintyError {
    /// No token distributions were supplied; the semantic fallback must be
    /// used instead.
    #[error("no token distributions available for generation-process uncertainty")]
    EmptyGeneration,
}

/// Shannon entropy of the listed support in nats. Zero-probability entries
/// contribute nothing.
pub fn token_entropy(dist: &TokenDistribution) -> f64 {
    dist.probs().filter(|p| *p > 0.0).map(|p| -p * p.ln()).sum()
}

/// Gap between the top two probabilities. With a single listed token the
/// runner-up is taken as 0.
pub fn top_gap(dist: &TokenDistribution) -> f64 {
    let mut probs = dist.probs();
    let first = probs.next().unwrap_or(0.0);
    let second = probs.next().unwrap_or(0.0);
    first - second
}

/// Generation-process uncertainty: the per-position mean of
/// `alpha * H_hat + beta * max(0, 1 - top_gap)`, where `H_hat` is entropy
/// normalized by `ln(vocab_size_hint)` (raw entropy when normalization is
/// disabled). With `alpha + beta = 1` the result lies in `[0,1]`.
pub fn phi_gen_plus(
    dists: &[TokenDistribution],
    params: &HyperParams,
) -> Result<f64, UncertaintyError> {
    if dists.is_empty() {
        return Err(UncertaintyError::EmptyGeneration);
    }
    if params.normalize_entropy {
        debug_assert!(
            (params.alpha_phi + params.beta_phi - 1.0).abs() < 1e-9,
            "normalized variant expects alpha_phi + beta_phi = 1"
        );
    }
    let mut total = 0.0;
    for dist in dists {
        let h = token_entropy(dist);
        let hesitation = if params.normalize_entropy {
            if h <= 0.0 {
                0.0
            } else {
                h / (dist.vocab_size_hint().max(2) as f64).ln()
            }
        } else {
            h
        };
        let conviction_gap = (1.0 - top_gap(dist)).max(0.0);
        total += params.alpha_phi * hesitation + params.beta_phi * conviction_gap;
    }
    Ok(total / dists.len() as f64)
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Weighted hedge-marker density: non-overlapping, longest-match-first,
/// case-insensitive phrase counts over the whitespace-token length
/// (floored at 1).
pub fn marker_density(text: &str, lexicon: &MarkerLexicon) -> f64 {
    let lowered = text.to_lowercase();
    let token_count = lowered.split_whitespace().count().max(1) as f64;
    let mut claimed: Vec<(usize, usize)> = Vec::new();
    let mut weighted = 0.0;
    for (phrase, weight) in lexicon.entries() {
        for (begin, found) in lowered.match_indices(phrase.as_str()) {
            let end = begin + found.len();
            if claimed.iter().any(|&(s, e)| begin < e && s < end) {
                continue;
            }
            claimed.push((begin, end));
            weighted += weight;
        }
    }
    weighted / token_count
}

/// Semantic-marker uncertainty: `sigmoid(sem_k * (density - sem_offset))`.
/// Always in (0,1); empty text maps to the no-marker baseline.
pub fn phi_sem(text: &str, params: &HyperParams) -> f64 {
    let rho = marker_density(text, &params.lexicon);
    sigmoid(params.sem_k * (rho - params.sem_offset))
}

/// Priority rule over the two estimators given the raw response parts:
/// generation-process when distributions are present and non-empty,
/// semantic otherwise. Output clamped to `[0,1]` so unnormalized-entropy
/// configurations still produce a valid uncertainty.
pub fn assess(
    text: &str,
    dists: Option<&[TokenDistribution]>,
    params: &HyperParams,
) -> (f64, UncertaintySource) {
    if let Some(dists) = dists {
        if let Ok(u) = phi_gen_plus(dists, params) {
            return (u.clamp(0.0, 1.0), UncertaintySource::Generation);
        }
    }
    (phi_sem(text, params), UncertaintySource::Semantic)
}

/// Priority-rule assessment of a full response record.
pub fn assess_uncertainty(resp: &ResponseRecord, params: &HyperParams) -> (f64, UncertaintySource) {
    assess(&resp.text, resp.token_distributions.as_deref(), params)
}
