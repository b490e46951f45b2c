//! Game-theoretic layer: dynamic softmax weighting, per-agent and total
//! utility, cooperative value scores, the entropy-regularized optimum, and
//! the equivalence between the analytic optimum and the dynamic protocol.

use thiserror::Error;

use crate::config::HyperParams;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum GameError {
    #[error("dimension mismatch: {context} (expected {expected}, got {got})")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("invalid similarity matrix: {0}")]
    InvalidMatrix(String),
}

/// Symmetric pairwise response-similarity matrix with unit diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct SimMatrix {
    n: usize,
    values: Vec<Vec<f64>>,
}

impl SimMatrix {
    pub fn new(values: Vec<Vec<f64>>) -> Result<Self, GameError> {
        let n = values.len();
        for (i, row) in values.iter().enumerate() {
            if row.len() != n {
                return Err(GameError::DimensionMismatch {
                    context: "similarity matrix row",
                    expected: n,
                    got: row.len(),
                });
            }
            for (j, &v) in row.iter().enumerate() {
                if !(0.0..=1.0).contains(&v) {
                    return Err(GameError::InvalidMatrix(format!(
                        "value {v} at ({i},{j}) outside [0,1]"
                    )));
                }
                if (v - values[j][i]).abs() > 1e-12 {
                    return Err(GameError::InvalidMatrix(format!(
                        "not symmetric at ({i},{j})"
                    )));
                }
            }
            if (row[i] - 1.0).abs() > 1e-12 {
                return Err(GameError::InvalidMatrix(format!(
                    "diagonal entry {} at {i} is not 1",
                    row[i]
                )));
            }
        }
        Ok(SimMatrix { n, values })
    }

    /// Pairwise similarity matrix over response texts using the default
    /// text backend. The fill is symmetric by construction, so the result
    /// is independent of evaluation order.
    #[allow(clippy::needless_range_loop)]
    pub fn from_texts<S: AsRef<str>>(texts: &[S]) -> Self {
        let n = texts.len();
        let mut values = vec![vec![1.0; n]; n];
        for i in 0..n {
            for j in (i + 1)..n {
                let s = similarity(texts[i].as_ref(), texts[j].as_ref());
                values[i][j] = s;
                values[j][i] = s;
            }
        }
        SimMatrix { n, values }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i][j]
    }
}

/// Max-subtracted softmax over raw scores.
pub fn softmax(scores: &[f64]) -> Vec<f64> {
    assert!(!scores.is_empty(), "softmax over empty scores");
    let max = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = scores.iter().map(|s| (s - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// Uncertainty-driven influence weights `w_i ∝ exp(-beta * U_i)`. Lower
/// uncertainty earns higher weight; `beta = 0` yields the uniform vector.
pub fn softmax_weights(uncertainties: &[f64], beta: f64) -> Vec<f64> {
    let scores: Vec<f64> = uncertainties.iter().map(|u| -beta * u).collect();
    softmax(&scores)
}

/// System-weighted average uncertainty.
fn weighted_uncertainty(weights: &[f64], uncertainties: &[f64]) -> f64 {
    weights.iter().zip(uncertainties).map(|(w, u)| w * u).sum()
}

/// Utility of agent `i`: the individual contribution `w_i (1 - U_i)`, plus
/// the collaboration reward `lambda * sum_{j != i} w_j Sim(i,j)`, minus the
/// shared system penalty `gamma * U_sys`.
pub fn agent_utility(
    i: usize,
    sim: &SimMatrix,
    uncertainties: &[f64],
    weights: &[f64],
    params: &HyperParams,
) -> Result<f64, GameError> {
    let n = sim.n();
    check_dims("agent_utility", n, uncertainties, weights)?;
    if i >= n {
        return Err(GameError::DimensionMismatch {
            context: "agent index",
            expected: n,
            got: i,
        });
    }
    let collaboration: f64 = (0..n)
        .filter(|&j| j != i)
        .map(|j| weights[j] * sim.get(i, j))
        .sum();
    let u_sys = weighted_uncertainty(weights, uncertainties);
    Ok(
        weights[i] * (1.0 - uncertainties[i]) + params.lambda_collab * collaboration
            - params.gamma_sys * u_sys,
    )
}

/// Total utility via the closed form
/// `1 + lambda * sum_i sum_{j != i} w_j Sim(i,j) - (1 + N*gamma) * U_sys`,
/// which equals the sum of per-agent utilities on the simplex.
pub fn total_utility(
    sim: &SimMatrix,
    uncertainties: &[f64],
    weights: &[f64],
    params: &HyperParams,
) -> Result<f64, GameError> {
    let n = sim.n();
    check_dims("total_utility", n, uncertainties, weights)?;
    let mut cross = 0.0;
    for i in 0..n {
        for (j, w) in weights.iter().enumerate() {
            if j != i {
                cross += w * sim.get(i, j);
            }
        }
    }
    let u_sys = weighted_uncertainty(weights, uncertainties);
    Ok(1.0 + params.lambda_collab * cross - (1.0 + n as f64 * params.gamma_sys) * u_sys)
}

/// Cooperative value score of agent `k`:
/// `lambda * sum_{i != k} Sim(i,k) - (1 + N*gamma) * U_k`.
pub fn cooperative_score(
    k: usize,
    sim: &SimMatrix,
    uncertainties: &[f64],
    params: &HyperParams,
) -> f64 {
    let n = sim.n();
    assert_eq!(uncertainties.len(), n, "uncertainty vector length");
    assert!(k < n, "agent index {k} out of range");
    let peer_sim: f64 = (0..n).filter(|&i| i != k).map(|i| sim.get(i, k)).sum();
    params.lambda_collab * peer_sim - (1.0 + n as f64 * params.gamma_sys) * uncertainties[k]
}

/// Analytic maximizer of the entropy-regularized weight objective:
/// `w_k* ∝ exp(eta * Score_k)`.
pub fn optimal_weights(scores: &[f64], eta: f64) -> Vec<f64> {
    assert!(eta > 0.0, "eta must be > 0");
    let scaled: Vec<f64> = scores.iter().map(|s| eta * s).collect();
    softmax(&scaled)
}

/// Entropy-regularized weight objective
/// `sum_k w_k Score_k - (1/eta) sum_k w_k ln w_k`; zero weights contribute
/// nothing to the entropy term.
pub fn regularized_objective(weights: &[f64], scores: &[f64], eta: f64) -> f64 {
    assert!(eta > 0.0, "eta must be > 0");
    assert_eq!(weights.len(), scores.len(), "weights/scores length");
    let value: f64 = weights.iter().zip(scores).map(|(w, s)| w * s).sum();
    let entropy: f64 = weights
        .iter()
        .filter(|w| **w > 0.0)
        .map(|w| w * w.ln())
        .sum();
    value - entropy / eta
}

/// Verifies that the analytic optimum over confidence scores `1 - U_i` at
/// temperature `eta = beta` reproduces the dynamic weighting protocol
/// componentwise: the constant `exp(beta)` factor cancels in the softmax.
pub fn protocol_equivalence_check(uncertainties: &[f64], beta: f64, tolerance: f64) -> bool {
    assert!(beta > 0.0, "beta must be > 0");
    let scores: Vec<f64> = uncertainties.iter().map(|u| 1.0 - u).collect();
    let analytic = optimal_weights(&scores, beta);
    let dynamic = softmax_weights(uncertainties, beta);
    analytic
        .iter()
        .zip(&dynamic)
        .all(|(a, d)| (a - d).abs() <= tolerance)
}

/// Default stopword list for the text similarity backend.
pub const DEFAULT_STOPWORDS: &[&str] = &[
    "the", "a", "an", "of", "is", "are", "and", "or", "to", "in", "on",
];

fn content_words(text: &str, stopwords: &[&str]) -> std::collections::BTreeSet<String> {
    text.to_lowercase()
        .split_whitespace()
        .map(|t| t.trim_matches(|c: char| !c.is_alphanumeric()))
        .filter(|t| !t.is_empty())
        .filter(|t| !stopwords.contains(t))
        .map(str::to_string)
        .collect()
}

/// Jaccard similarity over case-normalized content-word sets with a
/// configurable stopword list. All-stopword texts fall back to comparing
/// the raw token sets so identical texts still score 1.
pub fn similarity_with_stopwords(a: &str, b: &str, stopwords: &[&str]) -> f64 {
    let mut left = content_words(a, stopwords);
    let mut right = content_words(b, stopwords);
    if left.is_empty() && right.is_empty() {
        left = content_words(a, &[]);
        right = content_words(b, &[]);
        if left.is_empty() && right.is_empty() {
            return 0.0;
        }
    }
    let intersection = left.intersection(&right).count() as f64;
    let union = left.union(&right).count() as f64;
    if union == 0.0 {
        0.0
    } else {
        intersection / union
    }
}

/// Default text-similarity backend.
pub fn similarity(a: &str, b: &str) -> f64 {
    similarity_with_stopwords(a, b, DEFAULT_STOPWORDS)
}

fn check_dims(
    context: &'static str,
    n: usize,
    uncertainties: &[f64],
    weights: &[f64],
) -> Result<(), GameError> {
    if uncertainties.len() != n {
        return Err(GameError::DimensionMismatch {
            context,
            expected: n,
            got: uncertainties.len(),
        });
    }
    if weights.len() != n {
        return Err(GameError::DimensionMismatch {
            context,
            expected: n,
            got: weights.len(),
        });
    }
    Ok(())
}
