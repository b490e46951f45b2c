//! Post-hoc analysis over finished debates: exponential uncertainty-decay
//! fitting, calibration metrics, and cost aggregation.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engine::DebateTranscript;
use crate::model::TerminationReason;

#[derive(Debug, Error, PartialEq)]
pub enum AnalyticsError {
    #[error("need at least {needed} points, got {got}")]
    TooFewPoints { needed: usize, got: usize },
    #[error("uncertainty {0} is not positive; log-space fit undefined")]
    NonPositive(f64),
    #[error("empty sample")]
    EmptySample,
    #[error("degenerate sample: zero variance in {0}")]
    DegenerateSample(&'static str),
}

/// Exponential decay model `u(k) = u0 * exp(-lambda * k)` fitted to a
/// system-uncertainty trajectory. `per_round_decay_rate` is the derived
/// fraction `1 - exp(-lambda)` removed per round.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecayFit {
    pub u0: f64,
    pub lambda_decay: f64,
    pub per_round_decay_rate: f64,
    /// RMS residual of the fit in log space.
    pub residual: f64,
}

/// Least-squares fit of `ln u` against the round index.
pub fn fit_decay(series: &[(u32, f64)]) -> Result<DecayFit, AnalyticsError> {
    if series.len() < 2 {
        return Err(AnalyticsError::TooFewPoints {
            needed: 2,
            got: series.len(),
        });
    }
    for &(_, u) in series {
        if u <= 0.0 {
            return Err(AnalyticsError::NonPositive(u));
        }
    }
    let n = series.len() as f64;
    let xs: Vec<f64> = series.iter().map(|&(k, _)| k as f64).collect();
    let ys: Vec<f64> = series.iter().map(|&(_, u)| u.ln()).collect();
    let x_mean = xs.iter().sum::<f64>() / n;
    let y_mean = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - x_mean).powi(2)).sum();
    if sxx == 0.0 {
        return Err(AnalyticsError::DegenerateSample("round index"));
    }
    let sxy: f64 = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| (x - x_mean) * (y - y_mean))
        .sum();
    let slope = sxy / sxx;
    let intercept = y_mean - slope * x_mean;
    let residual = (xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| (y - (intercept + slope * x)).powi(2))
        .sum::<f64>()
        / n)
        .sqrt();
    let lambda = -slope;
    Ok(DecayFit {
        u0: intercept.exp(),
        lambda_decay: lambda,
        per_round_decay_rate: 1.0 - (-lambda).exp(),
        residual,
    })
}

/// Expected calibration error over `bins` equal-width confidence bins
/// (right-closed except the first): the sample-weighted mean absolute gap
/// between a bin's mean confidence and its accuracy.
pub fn expected_calibration_error(
    samples: &[(f64, bool)],
    bins: usize,
) -> Result<f64, AnalyticsError> {
    if samples.is_empty() {
        return Err(AnalyticsError::EmptySample);
    }
    assert!(bins > 0, "bin count must be positive");
    let mut conf_sum = vec![0.0; bins];
    let mut correct = vec![0usize; bins];
    let mut count = vec![0usize; bins];
    for &(confidence, is_correct) in samples {
        let scaled = confidence * bins as f64;
        let bin = if scaled <= 1.0 {
            0
        } else {
            (scaled.ceil() as usize - 1).min(bins - 1)
        };
        conf_sum[bin] += confidence;
        correct[bin] += is_correct as usize;
        count[bin] += 1;
    }
    let n = samples.len() as f64;
    let mut ece = 0.0;
    for bin in 0..bins {
        if count[bin] == 0 {
            continue;
        }
        let mean_conf = conf_sum[bin] / count[bin] as f64;
        let accuracy = correct[bin] as f64 / count[bin] as f64;
        ece += (count[bin] as f64 / n) * (mean_conf - accuracy).abs();
    }
    Ok(ece)
}

/// Classification accuracy of the high-uncertainty flag against the
/// actually-problematic label.
pub fn uncertainty_accuracy(samples: &[(bool, bool)]) -> Result<f64, AnalyticsError> {
    if samples.is_empty() {
        return Err(AnalyticsError::EmptySample);
    }
    let matches = samples
        .iter()
        .filter(|(flagged, problematic)| flagged == problematic)
        .count();
    Ok(matches as f64 / samples.len() as f64)
}

/// Point-biserial correlation between the initial system uncertainty and
/// the debate-trigger indicator.
pub fn dynamic_adaptability(samples: &[(f64, bool)]) -> Result<f64, AnalyticsError> {
    if samples.len() < 2 {
        return Err(AnalyticsError::TooFewPoints {
            needed: 2,
            got: samples.len(),
        });
    }
    let n = samples.len() as f64;
    let xs: Vec<f64> = samples.iter().map(|&(u, _)| u).collect();
    let ys: Vec<f64> = samples.iter().map(|&(_, t)| t as u8 as f64).collect();
    let x_mean = xs.iter().sum::<f64>() / n;
    let y_mean = ys.iter().sum::<f64>() / n;
    let var_x: f64 = xs.iter().map(|x| (x - x_mean).powi(2)).sum();
    let var_y: f64 = ys.iter().map(|y| (y - y_mean).powi(2)).sum();
    if var_x == 0.0 {
        return Err(AnalyticsError::DegenerateSample("initial uncertainty"));
    }
    if var_y == 0.0 {
        return Err(AnalyticsError::DegenerateSample("trigger indicator"));
    }
    let cov: f64 = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| (x - x_mean) * (y - y_mean))
        .sum();
    Ok(cov / (var_x.sqrt() * var_y.sqrt()))
}

/// Calibration summary over a batch with ground truth. `da` is absent
/// when either the uncertainty or the trigger sample is degenerate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationReport {
    pub ece: f64,
    pub ua: f64,
    pub da: Option<f64>,
    pub bin_count: usize,
    pub n_samples: usize,
}

/// Cost and convergence aggregates over a batch of transcripts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostReport {
    /// Mean cumulative token cost after each round, over the transcripts
    /// that reached that round.
    pub per_round_mean_cumulative_cost: Vec<f64>,
    pub mean_debate_rounds: f64,
    pub trigger_rate: f64,
    pub termination_histogram: BTreeMap<String, usize>,
}

pub fn reason_key(reason: TerminationReason) -> &'static str {
    match reason {
        TerminationReason::UncertaintyBelowThreshold => "uncertainty_below_threshold",
        TerminationReason::Stagnation => "stagnation",
        TerminationReason::MaxRounds => "max_rounds",
        TerminationReason::NoDebateNeeded => "no_debate_needed",
    }
}

/// Aggregates per-round cumulative cost, mean rounds, trigger rate, and
/// the termination-reason histogram.
pub fn cost_report(transcripts: &[DebateTranscript]) -> Result<CostReport, AnalyticsError> {
    if transcripts.is_empty() {
        return Err(AnalyticsError::EmptySample);
    }
    let max_rounds = transcripts
        .iter()
        .map(|t| t.states.len())
        .max()
        .unwrap_or(0);
    let mut per_round = Vec::with_capacity(max_rounds);
    for round in 0..max_rounds {
        let mut total = 0.0;
        let mut count = 0usize;
        for transcript in transcripts {
            if round < transcript.states.len() {
                let cumulative: u64 = transcript.states[..=round]
                    .iter()
                    .flat_map(|s| s.responses.iter())
                    .map(|r| r.token_cost)
                    .sum();
                total += cumulative as f64;
                count += 1;
            }
        }
        per_round.push(total / count as f64);
    }

    let n = transcripts.len() as f64;
    let mean_debate_rounds = transcripts
        .iter()
        .map(|t| t.debate_rounds() as f64)
        .sum::<f64>()
        / n;

    let mut histogram: BTreeMap<String, usize> = BTreeMap::new();
    let mut triggered = 0usize;
    for transcript in transcripts {
        let reason = transcript
            .final_state()
            .termination
            .unwrap_or(TerminationReason::MaxRounds);
        *histogram.entry(reason_key(reason).to_string()).or_insert(0) += 1;
        if reason != TerminationReason::NoDebateNeeded {
            triggered += 1;
        }
    }

    Ok(CostReport {
        per_round_mean_cumulative_cost: per_round,
        mean_debate_rounds,
        trigger_rate: triggered as f64 / n,
        termination_histogram: histogram,
    })
}

/// Everything the `report` surface emits for one batch of transcripts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchAnalytics {
    pub decay: Option<DecayFit>,
    pub cost: CostReport,
    pub calibration: Option<CalibrationReport>,
    /// Human-readable notices about skipped sections.
    pub notes: Vec<String>,
}

/// Assembles the decay fit, cost report, and (when ground truth is
/// available) calibration metrics for a batch. Sections that cannot be
/// computed are skipped with an explanatory note rather than failing the
/// whole report.
pub fn batch_analytics(
    transcripts: &[DebateTranscript],
    bins: usize,
    ua_threshold: f64,
) -> Result<BatchAnalytics, AnalyticsError> {
    let cost = cost_report(transcripts)?;
    let mut notes = Vec::new();

    let decay_points: Vec<(u32, f64)> = transcripts
        .iter()
        .flat_map(|t| t.states.iter())
        .filter(|s| s.system_uncertainty > 0.0)
        .map(|s| (s.round, s.system_uncertainty))
        .collect();
    let decay = match fit_decay(&decay_points) {
        Ok(fit) => Some(fit),
        Err(e) => {
            notes.push(format!("decay fit skipped: {e}"));
            None
        }
    };

    let judged: Vec<&DebateTranscript> = transcripts
        .iter()
        .filter(|t| t.task.ground_truth.is_some())
        .collect();
    let calibration = if judged.is_empty() {
        notes.push("calibration skipped: no task carries ground truth".to_string());
        None
    } else {
        let ece_samples: Vec<(f64, bool)> = judged
            .iter()
            .map(|t| {
                let confidence = (1.0 - t.final_state().system_uncertainty).clamp(0.0, 1.0);
                (confidence, transcript_correct(t))
            })
            .collect();
        let ua_samples: Vec<(bool, bool)> = judged
            .iter()
            .map(|t| {
                let flagged = t.final_state().system_uncertainty > ua_threshold;
                (flagged, !transcript_correct(t))
            })
            .collect();
        let da_samples: Vec<(f64, bool)> = judged
            .iter()
            .map(|t| {
                let triggered =
                    t.final_state().termination != Some(TerminationReason::NoDebateNeeded);
                (t.states[0].system_uncertainty, triggered)
            })
            .collect();
        let da = match dynamic_adaptability(&da_samples) {
            Ok(r) => Some(r),
            Err(e) => {
                notes.push(format!("dynamic adaptability skipped: {e}"));
                None
            }
        };
        Some(CalibrationReport {
            ece: expected_calibration_error(&ece_samples, bins)?,
            ua: uncertainty_accuracy(&ua_samples)?,
            da,
            bin_count: bins,
            n_samples: judged.len(),
        })
    };

    Ok(BatchAnalytics {
        decay,
        cost,
        calibration,
        notes,
    })
}

fn transcript_correct(transcript: &DebateTranscript) -> bool {
    match &transcript.task.ground_truth {
        Some(truth) => {
            crate::consensus::normalize_answer(&transcript.final_answer)
                == crate::consensus::normalize_answer(truth)
        }
        None => false,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn exact_exponential_is_recovered() {
        let series: Vec<(u32, f64)> = (0..=3)
            .map(|k| (k, 0.66 * (-0.51 * k as f64).exp()))
            .collect();
        let fit = fit_decay(&series).unwrap();
        assert!(close(fit.lambda_decay, 0.51, 1e-9));
        assert!(close(fit.u0, 0.66, 1e-9));
        assert!(close(fit.per_round_decay_rate, 0.3995, 1e-4));
        assert!(fit.residual < 1e-12);
        // derived-field identity
        assert_eq!(fit.per_round_decay_rate, 1.0 - (-fit.lambda_decay).exp());
    }

    #[test]
    fn constant_series_has_zero_decay() {
        let fit = fit_decay(&[(0, 0.4), (1, 0.4), (2, 0.4)]).unwrap();
        assert!(close(fit.lambda_decay, 0.0, 1e-12));
        assert!(close(fit.per_round_decay_rate, 0.0, 1e-12));
    }

    #[test]
    fn noisy_exponential_recovers_lambda() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(42);
        let series: Vec<(u32, f64)> = (0..=8)
            .map(|k| {
                let noise = 1.0 + rng.random_range(-0.01..0.01);
                (k, 0.7 * (-0.51 * k as f64).exp() * noise)
            })
            .collect();
        let fit = fit_decay(&series).unwrap();
        assert!(
            close(fit.lambda_decay, 0.51, 0.02),
            "lambda {}",
            fit.lambda_decay
        );
    }

    #[test]
    fn decay_rejects_non_positive_and_short_series() {
        assert_eq!(
            fit_decay(&[(0, 0.5)]),
            Err(AnalyticsError::TooFewPoints { needed: 2, got: 1 })
        );
        assert_eq!(
            fit_decay(&[(0, 0.5), (1, 0.0)]),
            Err(AnalyticsError::NonPositive(0.0))
        );
    }

    #[test]
    fn ece_single_occupied_bin_cases() {
        // all confident, half correct
        let samples: Vec<(f64, bool)> = (0..100).map(|i| (1.0, i % 2 == 0)).collect();
        assert!(close(
            expected_calibration_error(&samples, 10).unwrap(),
            0.5,
            1e-12
        ));
        // one sample
        assert!(close(
            expected_calibration_error(&[(0.7, true)], 10).unwrap(),
            0.3,
            1e-12
        ));
        assert_eq!(
            expected_calibration_error(&[], 10),
            Err(AnalyticsError::EmptySample)
        );
    }

    #[test]
    fn ece_is_permutation_invariant_and_zero_for_sharp_correct() {
        let mut samples = vec![(0.95, true), (0.2, false), (0.7, true), (0.7, false)];
        let before = expected_calibration_error(&samples, 10).unwrap();
        samples.reverse();
        assert!(close(
            expected_calibration_error(&samples, 10).unwrap(),
            before,
            1e-12
        ));

        let sharp: Vec<(f64, bool)> = vec![(1.0, true); 50];
        assert!(close(
            expected_calibration_error(&sharp, 10).unwrap(),
            0.0,
            1e-12
        ));
    }

    #[test]
    fn ua_cases_and_flip_symmetry() {
        let all_match = vec![(true, true), (false, false), (true, true)];
        assert_eq!(uncertainty_accuracy(&all_match).unwrap(), 1.0);
        let inverted = vec![(true, false), (false, true)];
        assert_eq!(uncertainty_accuracy(&inverted).unwrap(), 0.0);
        let three_of_four = vec![(true, true), (false, false), (true, true), (false, true)];
        assert_eq!(uncertainty_accuracy(&three_of_four).unwrap(), 0.75);

        let flipped: Vec<(bool, bool)> = three_of_four.iter().map(|&(f, p)| (!f, !p)).collect();
        assert_eq!(
            uncertainty_accuracy(&three_of_four).unwrap(),
            uncertainty_accuracy(&flipped).unwrap()
        );
    }

    #[test]
    fn da_sign_follows_the_trigger_policy() {
        let above: Vec<(f64, bool)> = (0..100).map(|i| (i as f64 / 100.0, i >= 50)).collect();
        assert!(dynamic_adaptability(&above).unwrap() > 0.8);
        let below: Vec<(f64, bool)> = (0..100).map(|i| (i as f64 / 100.0, i < 50)).collect();
        assert!(dynamic_adaptability(&below).unwrap() < -0.8);
        assert_eq!(
            dynamic_adaptability(&[(0.5, true), (0.5, false)]),
            Err(AnalyticsError::DegenerateSample("initial uncertainty"))
        );
        assert_eq!(
            dynamic_adaptability(&[(0.1, true), (0.9, true)]),
            Err(AnalyticsError::DegenerateSample("trigger indicator"))
        );
    }
}
