//! Threshold calibration, uniformity curves, and corpus statistics.
//!
//! The context and variation thresholds are calibrated from data: pool the
//! absolute single-step logit deltas (for `tau_c`) and the per-turn mean
//! absolute variations (for `tau_v`) across a corpus, then take a
//! percentile of each pool. The uniformity curve sweeps a range of alpha
//! thresholds and reports what fraction of conversations would be judged
//! uniform by the stop-point weights alone versus by the switch-based
//! fallback visual.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::switches::{analyze, detect_variation_flags, SwitchDirection};
use crate::trace::{AnalysisConfig, AttentionTrace};
use crate::uniformity::alpha_unchecked;
use crate::visual::select_visualization;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CalibrationError {
    #[error("no eligible logit pairs: every trace has a single turn")]
    EmptyPool,
    #[error("percentile {0} outside (0, 100)")]
    BadPercentile(f64),
}

/// Calibrated thresholds. `tau_c` or `tau_v` equal to zero means the
/// corpus carried no signal (constant logits) and the calibration is
/// degenerate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CalibratedThresholds {
    pub tau_c: f64,
    pub tau_v: f64,
}

impl CalibratedThresholds {
    pub fn is_degenerate(&self) -> bool {
        self.tau_c == 0.0 || self.tau_v == 0.0
    }
}

/// Percentile by linear interpolation between the closest order
/// statistics: rank `h = (n - 1) * p / 100`, interpolating between
/// `floor(h)` and `ceil(h)`.
pub fn percentile(values: &[f64], p: f64) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite pool values"));
    let h = (sorted.len() - 1) as f64 * p / 100.0;
    let lo = h.floor() as usize;
    let frac = h - lo as f64;
    let value = if lo + 1 < sorted.len() {
        sorted[lo] + frac * (sorted[lo + 1] - sorted[lo])
    } else {
        sorted[lo]
    };
    Some(value)
}

/// Calibrate `tau_c` and `tau_v` as the given percentile of the pooled
/// logit deltas and pooled per-turn mean variations.
pub fn calibrate_thresholds(
    corpus: &[AttentionTrace],
    pct: f64,
) -> Result<CalibratedThresholds, CalibrationError> {
    if !(0.0..100.0).contains(&pct) || pct == 0.0 {
        return Err(CalibrationError::BadPercentile(pct));
    }
    let mut delta_pool = Vec::new();
    let mut variation_pool = Vec::new();
    for trace in corpus {
        let n = trace.len();
        if n < 2 {
            continue;
        }
        for pair in trace.steps.windows(2) {
            for turn in 0..pair[0].step_index {
                delta_pool.push((pair[1].logits[turn] - pair[0].logits[turn]).abs());
            }
        }
        let (_, means) = detect_variation_flags(trace, f64::INFINITY, Default::default());
        variation_pool.extend_from_slice(&means[..n - 1]);
    }
    let tau_c = percentile(&delta_pool, pct).ok_or(CalibrationError::EmptyPool)?;
    let tau_v = percentile(&variation_pool, pct).ok_or(CalibrationError::EmptyPool)?;
    Ok(CalibratedThresholds { tau_c, tau_v })
}

// ---------------------------------------------------------------------------
// Uniformity curve
// ---------------------------------------------------------------------------

/// Fraction of conversations judged uniform at each alpha threshold, for
/// the stop-point weights alone (`model`) and for the visual actually
/// chosen at that threshold (`fallback`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UniformityCurve {
    pub thresholds: Vec<f64>,
    pub fraction_uniform_model: Vec<f64>,
    pub fraction_uniform_fallback: Vec<f64>,
}

impl UniformityCurve {
    /// Delimiter-separated export with a fixed header.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("threshold,model_uniform_frac,fallback_uniform_frac\n");
        for i in 0..self.thresholds.len() {
            out.push_str(&format!(
                "{},{},{}\n",
                self.thresholds[i],
                self.fraction_uniform_model[i],
                self.fraction_uniform_fallback[i]
            ));
        }
        out
    }
}

/// Whether an intensity vector, renormalized to a probability vector, is
/// t-uniform. The all-zero vector counts as uniform.
fn intensities_are_uniform(per_turn: &[f64], t: f64) -> bool {
    let sum: f64 = per_turn.iter().sum();
    if sum <= 0.0 {
        return true;
    }
    let renormalized: Vec<f64> = per_turn.iter().map(|v| v / sum).collect();
    alpha_unchecked(&renormalized) <= t
}

/// Sweep alpha thresholds over a corpus. For each threshold `t` the
/// fallback fraction re-runs visualization selection with `tau_a = t`, so
/// both curves answer "how many conversations would look uniform at this
/// threshold".
pub fn uniformity_curve(
    corpus: &[AttentionTrace],
    config: &AnalysisConfig,
    thresholds: &[f64],
) -> UniformityCurve {
    let mut thresholds = thresholds.to_vec();
    thresholds.sort_by(|a, b| a.partial_cmp(b).expect("finite thresholds"));
    let total = corpus.len() as f64;
    let stop_alphas: Vec<f64> = corpus
        .iter()
        .map(|trace| {
            alpha_unchecked(
                &trace
                    .stop_step()
                    .expect("valid trace has steps")
                    .normalized_weights,
            )
        })
        .collect();

    let mut fraction_uniform_model = Vec::with_capacity(thresholds.len());
    let mut fraction_uniform_fallback = Vec::with_capacity(thresholds.len());
    for &t in &thresholds {
        let model = stop_alphas.iter().filter(|&&a| a <= t).count() as f64;
        let config_t = AnalysisConfig {
            tau_a: t,
            ..config.clone()
        };
        let fallback = corpus
            .iter()
            .filter(|trace| {
                let viz = select_visualization(trace, &config_t);
                intensities_are_uniform(&viz.per_turn, t)
            })
            .count() as f64;
        if total == 0.0 {
            fraction_uniform_model.push(0.0);
            fraction_uniform_fallback.push(0.0);
        } else {
            fraction_uniform_model.push(model / total);
            fraction_uniform_fallback.push(fallback / total);
        }
    }
    UniformityCurve {
        thresholds,
        fraction_uniform_model,
        fraction_uniform_fallback,
    }
}

// ---------------------------------------------------------------------------
// Corpus statistics
// ---------------------------------------------------------------------------

/// Switch occurrence counts and their co-occurrence with escalation.
/// Single-turn conversations are excluded from every switch count; an
/// event coincides with escalation when its step equals the trace's
/// escalation turn.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct CorpusStats {
    pub n_conversations: usize,
    pub n_turns: usize,
    /// Turns whose logit was moved >= tau_c by some later addition.
    pub context_switch_turns: usize,
    /// Of those, turns with such a move caused at the escalation turn.
    pub context_coincide_escalation: usize,
    /// Turns whose variation flag is set.
    pub variation_switch_turns: usize,
    /// Of those, flagged turns that are the escalation turn.
    pub variation_coincide_escalation: usize,
    pub uniform_to_nonuniform_pairs: usize,
    pub nonuniform_to_uniform_pairs: usize,
    pub u2n_coincide_escalation: usize,
    pub n2u_coincide_escalation: usize,
}

impl CorpusStats {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("stats serialize")
    }
}

/// Count switch occurrences and escalation co-occurrence over a corpus.
pub fn corpus_statistics(corpus: &[AttentionTrace], config: &AnalysisConfig) -> CorpusStats {
    let mut stats = CorpusStats {
        n_conversations: corpus.len(),
        ..CorpusStats::default()
    };
    for trace in corpus {
        let n = trace.len();
        stats.n_turns += n;
        if n < 2 {
            continue;
        }
        let escalation_turn = if trace.escalated {
            trace.escalation_turn
        } else {
            None
        };
        let report = analyze(trace, config);

        for turn in 1..=n {
            let events: Vec<_> = report
                .context_events
                .iter()
                .filter(|e| e.affected_turn == turn)
                .collect();
            if !events.is_empty() {
                stats.context_switch_turns += 1;
                if let Some(esc) = escalation_turn {
                    if events.iter().any(|e| e.caused_by_step == esc) {
                        stats.context_coincide_escalation += 1;
                    }
                }
            }
        }

        for (idx, &flag) in report.variation_flags.iter().enumerate() {
            if flag {
                stats.variation_switch_turns += 1;
                if escalation_turn == Some(idx + 1) {
                    stats.variation_coincide_escalation += 1;
                }
            }
        }

        for event in &report.attention_events {
            let coincides = escalation_turn == Some(event.at_step);
            match event.direction {
                SwitchDirection::UniformToNonuniform => {
                    stats.uniform_to_nonuniform_pairs += 1;
                    if coincides {
                        stats.u2n_coincide_escalation += 1;
                    }
                }
                SwitchDirection::NonuniformToUniform => {
                    stats.nonuniform_to_uniform_pairs += 1;
                    if coincides {
                        stats.n2u_coincide_escalation += 1;
                    }
                }
            }
        }
    }
    stats
}
