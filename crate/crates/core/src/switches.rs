//! Detection of the three attention behaviors over a trace.
//!
//! As each turn is added, three kinds of change can occur:
//!
//! - *attention dependency switch*: the addition flips the weight
//!   distribution between uniform and non-uniform (judged by alpha against
//!   `tau_a`); computed on the normalized weights.
//! - *context dependency switch*: the addition moves some previous turn's
//!   logit by at least `tau_c`; computed on the unnormalized logits.
//! - *variation dependency switch*: a turn's mean absolute logit change
//!   across all subsequent steps reaches `tau_v`; also on the logits.
//!
//! Attention reads normalized weights while context and variation read raw
//! logits; the two sequences live side by side in [`StepRecord`] so the
//! detectors cannot be fed the wrong one.
//!
//! All detectors assume a trace that passes
//! [`validate_trace`](crate::trace::validate_trace).

use serde::{Deserialize, Serialize};

use crate::trace::{AnalysisConfig, AttentionTrace, LastTurnVariationPolicy};
use crate::uniformity::alpha_unchecked;

/// Direction of an attention dependency switch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SwitchDirection {
    UniformToNonuniform,
    NonuniformToUniform,
}

/// The addition of turn `at_step` flipped the uniformity verdict of the
/// weight distribution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AttentionDependencyEvent {
    /// The added turn (>= 2; step 1 carries a single weight and is always
    /// uniform).
    pub at_step: usize,
    pub direction: SwitchDirection,
}

/// The addition of turn `caused_by_step` moved `affected_turn`'s logit by
/// `delta >= tau_c`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContextDependencyEvent {
    /// Previous turn whose logit moved (`affected_turn < caused_by_step`).
    pub affected_turn: usize,
    /// The turn whose addition caused the move.
    pub caused_by_step: usize,
    /// Absolute logit change.
    pub delta: f64,
}

/// All detected events and per-turn variation values for one trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SwitchReport {
    pub attention_events: Vec<AttentionDependencyEvent>,
    pub context_events: Vec<ContextDependencyEvent>,
    /// Per turn: `mean_variations[i] >= tau_v` (always false for the final
    /// turn under the zero policy).
    pub variation_flags: Vec<bool>,
    /// Per turn: mean absolute logit change over subsequent steps; the
    /// final turn's value is 0 under the zero policy.
    pub mean_variations: Vec<f64>,
}

impl SwitchReport {
    /// Number of turns the report covers.
    pub fn len(&self) -> usize {
        self.variation_flags.len()
    }

    pub fn is_empty(&self) -> bool {
        self.variation_flags.is_empty()
    }

    pub fn has_events(&self) -> bool {
        !self.attention_events.is_empty()
            || !self.context_events.is_empty()
            || self.variation_flags.iter().any(|&f| f)
    }
}

/// One event per step in `[2, N]` where the verdict `alpha >= tau_a`
/// differs between the previous prefix and the new one.
pub fn detect_attention_switches(
    trace: &AttentionTrace,
    tau_a: f64,
) -> Vec<AttentionDependencyEvent> {
    let mut events = Vec::new();
    let mut prev_nonuniform: Option<bool> = None;
    for step in &trace.steps {
        let nonuniform = alpha_unchecked(&step.normalized_weights) >= tau_a;
        if let Some(prev) = prev_nonuniform {
            if nonuniform != prev {
                events.push(AttentionDependencyEvent {
                    at_step: step.step_index,
                    direction: if nonuniform {
                        SwitchDirection::UniformToNonuniform
                    } else {
                        SwitchDirection::NonuniformToUniform
                    },
                });
            }
        }
        prev_nonuniform = Some(nonuniform);
    }
    events
}

/// One event per pair `(affected_turn, caused_by_step)` where the logit of
/// a previous turn moved by at least `tau_c`, ordered by causing step then
/// affected turn.
pub fn detect_context_switches(trace: &AttentionTrace, tau_c: f64) -> Vec<ContextDependencyEvent> {
    let mut events = Vec::new();
    for pair in trace.steps.windows(2) {
        let (before, after) = (&pair[0], &pair[1]);
        for turn in 1..=before.step_index {
            let delta = (after.logits[turn - 1] - before.logits[turn - 1]).abs();
            if delta >= tau_c {
                events.push(ContextDependencyEvent {
                    affected_turn: turn,
                    caused_by_step: after.step_index,
                    delta,
                });
            }
        }
    }
    events
}

/// Per-turn mean absolute logit change over all subsequent steps, and the
/// flags `mean >= tau_v`. The final turn's sum is empty; `policy` decides
/// its value (currently always 0 / false).
pub fn detect_variation_flags(
    trace: &AttentionTrace,
    tau_v: f64,
    policy: LastTurnVariationPolicy,
) -> (Vec<bool>, Vec<f64>) {
    let n = trace.len();
    let mut means = Vec::with_capacity(n);
    let mut flags = Vec::with_capacity(n);
    for turn in 1..=n {
        if turn == n {
            let LastTurnVariationPolicy::Zero = policy;
            means.push(0.0);
            flags.push(false);
            continue;
        }
        let mut sum = 0.0;
        for k in turn..n {
            let before = trace.steps[k - 1].logits[turn - 1];
            let after = trace.steps[k].logits[turn - 1];
            sum += (after - before).abs();
        }
        let mean = sum / (n - turn) as f64;
        means.push(mean);
        flags.push(mean >= tau_v);
    }
    (flags, means)
}

/// Run all three detectors with the config's thresholds.
pub fn analyze(trace: &AttentionTrace, config: &AnalysisConfig) -> SwitchReport {
    let attention_events = detect_attention_switches(trace, config.tau_a);
    let context_events = detect_context_switches(trace, config.tau_c);
    let (variation_flags, mean_variations) =
        detect_variation_flags(trace, config.tau_v, config.last_turn_variation_policy);
    SwitchReport {
        attention_events,
        context_events,
        variation_flags,
        mean_variations,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trace::{validate_trace, StepRecord};
    use proptest::prelude::*;

    fn trace_from(weights: Vec<Vec<f64>>, logits: Vec<Vec<f64>>) -> AttentionTrace {
        let steps = weights
            .into_iter()
            .zip(logits)
            .enumerate()
            .map(|(k, (w, l))| StepRecord {
                step_index: k + 1,
                normalized_weights: w,
                logits: l,
            })
            .collect();
        let trace = AttentionTrace {
            id: "t".to_string(),
            steps,
            turn_texts: None,
            escalated: false,
            escalation_turn: None,
        };
        assert!(validate_trace(&trace).is_empty(), "test trace invalid");
        trace
    }

    fn uniform_weights(n: usize) -> Vec<Vec<f64>> {
        (1..=n).map(|i| vec![1.0 / i as f64; i]).collect()
    }

    fn constant_logits(n: usize, value: f64) -> Vec<Vec<f64>> {
        (1..=n).map(|i| vec![value; i]).collect()
    }

    /// Uniform through step 3, spike at step 4 — the canonical
    /// uniform-to-non-uniform construction.
    fn spike_at_four() -> AttentionTrace {
        let mut weights = uniform_weights(3);
        weights.push(vec![0.05, 0.05, 0.05, 0.85]);
        // New turn's first logit appears at step 4 and has no prior value,
        // so constant per-turn logits yield zero deltas everywhere.
        let logits = vec![
            vec![0.2],
            vec![0.2, 0.2],
            vec![0.2, 0.2, 0.2],
            vec![0.2, 0.2, 0.2, 0.9],
        ];
        trace_from(weights, logits)
    }

    #[test]
    fn always_uniform_trace_has_no_attention_events() {
        let trace = trace_from(uniform_weights(3), constant_logits(3, 0.0));
        assert!(detect_attention_switches(&trace, 0.18).is_empty());
    }

    #[test]
    fn spike_at_step_four_yields_one_uniform_to_nonuniform_event() {
        let events = detect_attention_switches(&spike_at_four(), 0.18);
        assert_eq!(
            events,
            vec![AttentionDependencyEvent {
                at_step: 4,
                direction: SwitchDirection::UniformToNonuniform,
            }]
        );
    }

    #[test]
    fn constant_logits_yield_no_context_events() {
        let trace = trace_from(uniform_weights(4), constant_logits(4, 0.7));
        assert!(detect_context_switches(&trace, 0.095).is_empty());
    }

    #[test]
    fn single_logit_jump_yields_one_context_event() {
        let trace = trace_from(
            vec![vec![1.0], vec![0.5, 0.5]],
            vec![vec![0.0], vec![0.2, 0.1]],
        );
        let events = detect_context_switches(&trace, 0.095);
        assert_eq!(events.len(), 1);
        assert_eq!(events[0].affected_turn, 1);
        assert_eq!(events[0].caused_by_step, 2);
        assert!((events[0].delta - 0.2).abs() < 1e-15);
    }

    #[test]
    fn context_events_are_ordered_by_step_then_turn() {
        // Every addition moves every prior logit by 1.
        let logits: Vec<Vec<f64>> = (1..=4)
            .map(|i| (0..i).map(|_| i as f64).collect())
            .collect();
        let trace = trace_from(uniform_weights(4), logits);
        let events = detect_context_switches(&trace, 0.5);
        let keys: Vec<(usize, usize)> = events
            .iter()
            .map(|e| (e.caused_by_step, e.affected_turn))
            .collect();
        let mut sorted = keys.clone();
        sorted.sort_unstable();
        assert_eq!(keys, sorted);
        assert_eq!(events.len(), 1 + 2 + 3);
    }

    #[test]
    fn single_turn_variation_is_zero_by_policy() {
        let trace = trace_from(vec![vec![1.0]], vec![vec![0.4]]);
        let (flags, means) = detect_variation_flags(&trace, 0.124, LastTurnVariationPolicy::Zero);
        assert_eq!(flags, vec![false]);
        assert_eq!(means, vec![0.0]);
    }

    #[test]
    fn variation_mean_matches_hand_evaluation() {
        // Turn 1's logit sequence over steps 1..3 is 0.0, 0.4, 0.4:
        // mean = (|0.4 - 0| + |0.4 - 0.4|) / 2 = 0.2.
        let trace = trace_from(
            uniform_weights(3),
            vec![vec![0.0], vec![0.4, 0.0], vec![0.4, 0.0, 0.0]],
        );
        let (_, means) = detect_variation_flags(&trace, 0.124, LastTurnVariationPolicy::Zero);
        assert!((means[0] - 0.2).abs() < 1e-15);
        assert_eq!(means[2], 0.0);
    }

    #[test]
    fn constant_uniform_trace_analyzes_to_empty_report() {
        let trace = trace_from(uniform_weights(5), constant_logits(5, 0.3));
        let report = analyze(&trace, &AnalysisConfig::default());
        assert!(report.attention_events.is_empty());
        assert!(report.context_events.is_empty());
        assert!(report.variation_flags.iter().all(|&f| !f));
        assert!(!report.has_events());
    }

    #[test]
    fn attention_switch_without_context_switch() {
        // Spike at step 4 while no prior turn's logit moves.
        let report = analyze(&spike_at_four(), &AnalysisConfig::default());
        assert_eq!(report.attention_events.len(), 1);
        assert_eq!(report.attention_events[0].at_step, 4);
        assert!(report.context_events.is_empty());
    }

    #[test]
    fn context_switch_without_attention_switch() {
        // Six steps, all spiky (never uniform), and every prior logit
        // shifts by 0.2 when turn 6 arrives.
        let spiky = |n: usize| -> Vec<f64> {
            let mut w = vec![0.05; n];
            w[n - 1] = 1.0 - 0.05 * (n - 1) as f64;
            w
        };
        let weights: Vec<Vec<f64>> = (1..=6).map(spiky).collect();
        let mut logits: Vec<Vec<f64>> = (1..=6).map(|i| vec![0.1; i]).collect();
        for value in logits[5].iter_mut().take(5) {
            *value += 0.2;
        }
        let trace = trace_from(weights, logits);
        let report = analyze(&trace, &AnalysisConfig::default());
        // Steps 2..6 are all non-uniform, so the only attention event is
        // the 1 -> 2 flip; adding turn 6 changed no verdict.
        assert_eq!(report.attention_events.len(), 1);
        assert_eq!(report.attention_events[0].at_step, 2);
        let at_six = report
            .context_events
            .iter()
            .filter(|e| e.caused_by_step == 6)
            .count();
        assert_eq!(at_six, 5);
    }

    // -- brute-force oracles --------------------------------------------

    /// Alpha recomputed from scratch with a plain log2 sum; no shared code
    /// with the crate's entropy path beyond the definition itself.
    fn alpha_naive(weights: &[f64]) -> f64 {
        let h: f64 = weights
            .iter()
            .filter(|&&w| w > 0.0)
            .map(|&w| -w * w.log2())
            .sum();
        weights.len() as f64 - h.exp2()
    }

    fn attention_oracle(trace: &AttentionTrace, tau_a: f64) -> Vec<(usize, bool)> {
        let mut events = Vec::new();
        for s in 2..=trace.len() {
            let prev = alpha_naive(&trace.steps[s - 2].normalized_weights) >= tau_a;
            let cur = alpha_naive(&trace.steps[s - 1].normalized_weights) >= tau_a;
            if prev != cur {
                events.push((s, cur));
            }
        }
        events
    }

    fn context_oracle(trace: &AttentionTrace, tau_c: f64) -> Vec<(usize, usize, f64)> {
        let n = trace.len();
        let mut events = Vec::new();
        for added in 2..=n {
            for turn in 1..added {
                let before = trace.steps[added - 2].logits[turn - 1];
                let after = trace.steps[added - 1].logits[turn - 1];
                let delta = (after - before).abs();
                if delta >= tau_c {
                    events.push((added, turn, delta));
                }
            }
        }
        events
    }

    fn variation_oracle(trace: &AttentionTrace, tau_v: f64) -> (Vec<bool>, Vec<f64>) {
        let n = trace.len();
        let mut means = vec![0.0; n];
        let mut flags = vec![false; n];
        for turn in 1..n {
            let mut sum = 0.0;
            for k in turn..n {
                sum +=
                    (trace.steps[k].logits[turn - 1] - trace.steps[k - 1].logits[turn - 1]).abs();
            }
            means[turn - 1] = sum / (n - turn) as f64;
            flags[turn - 1] = means[turn - 1] >= tau_v;
        }
        (flags, means)
    }

    /// Random triangular trace: per-step logits drawn freely, weights from
    /// a softmax over separate draws so both sequences vary independently.
    fn arb_trace(max_n: usize) -> impl Strategy<Value = AttentionTrace> {
        (1..=max_n)
            .prop_flat_map(|n| {
                let logits = (1..=n)
                    .map(|i| prop::collection::vec(-1.0f64..1.0, i..=i))
                    .collect::<Vec<_>>();
                let raws = (1..=n)
                    .map(|i| prop::collection::vec(-2.0f64..2.0, i..=i))
                    .collect::<Vec<_>>();
                (logits, raws)
            })
            .prop_map(|(logits, raws)| {
                let weights: Vec<Vec<f64>> = raws
                    .into_iter()
                    .map(|raw| {
                        let max = raw.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                        let exp: Vec<f64> = raw.iter().map(|x| (x - max).exp()).collect();
                        let sum: f64 = exp.iter().sum();
                        exp.into_iter().map(|x| x / sum).collect()
                    })
                    .collect();
                let steps = weights
                    .into_iter()
                    .zip(logits)
                    .enumerate()
                    .map(|(k, (w, l))| StepRecord {
                        step_index: k + 1,
                        normalized_weights: w,
                        logits: l,
                    })
                    .collect();
                AttentionTrace {
                    id: "p".to_string(),
                    steps,
                    turn_texts: None,
                    escalated: false,
                    escalation_turn: None,
                }
            })
    }

    proptest! {
        #[test]
        fn attention_matches_prefix_oracle(trace in arb_trace(10), tau_a in 0.01f64..1.0) {
            let got: Vec<(usize, bool)> = detect_attention_switches(&trace, tau_a)
                .iter()
                .map(|e| (e.at_step, e.direction == SwitchDirection::UniformToNonuniform))
                .collect();
            prop_assert_eq!(got, attention_oracle(&trace, tau_a));
        }

        #[test]
        fn context_matches_pair_oracle(trace in arb_trace(10), tau_c in 0.01f64..0.5) {
            let got: Vec<(usize, usize, f64)> = detect_context_switches(&trace, tau_c)
                .iter()
                .map(|e| (e.caused_by_step, e.affected_turn, e.delta))
                .collect();
            prop_assert_eq!(got, context_oracle(&trace, tau_c));
        }

        #[test]
        fn variation_matches_naive_oracle(trace in arb_trace(10), tau_v in 0.01f64..0.5) {
            let (flags, means) =
                detect_variation_flags(&trace, tau_v, LastTurnVariationPolicy::Zero);
            let (oracle_flags, oracle_means) = variation_oracle(&trace, tau_v);
            prop_assert_eq!(flags, oracle_flags);
            for (a, b) in means.iter().zip(&oracle_means) {
                prop_assert!((a - b).abs() < 1e-12);
            }
        }

        #[test]
        fn lowering_tau_c_never_removes_events(trace in arb_trace(8), tau in 0.05f64..0.5) {
            let high = detect_context_switches(&trace, tau);
            let low = detect_context_switches(&trace, tau / 2.0);
            for e in &high {
                prop_assert!(low
                    .iter()
                    .any(|l| l.affected_turn == e.affected_turn
                        && l.caused_by_step == e.caused_by_step));
            }
        }

        #[test]
        fn lowering_tau_v_never_clears_flags(trace in arb_trace(8), tau in 0.05f64..0.5) {
            let (high, _) = detect_variation_flags(&trace, tau, LastTurnVariationPolicy::Zero);
            let (low, _) =
                detect_variation_flags(&trace, tau / 2.0, LastTurnVariationPolicy::Zero);
            for (h, l) in high.iter().zip(&low) {
                prop_assert!(!h || *l);
            }
        }

        #[test]
        fn per_step_verdict_is_monotone_in_tau_a(trace in arb_trace(8), tau in 0.05f64..1.0) {
            // A step judged uniform by the detector's verdict at tau stays
            // uniform at any larger tau: the set of uniform steps can only
            // grow. Verdicts are reconstructed from the event sequence,
            // since step 1 starts uniform and each event flips the state.
            let verdicts = |t: f64| -> Vec<bool> {
                let events = detect_attention_switches(&trace, t);
                let mut nonuniform = crate::uniformity::alpha(
                    &trace.steps[0].normalized_weights).unwrap().alpha >= t;
                let mut all = vec![nonuniform];
                for s in 2..=trace.len() {
                    if events.iter().any(|e| e.at_step == s) {
                        nonuniform = !nonuniform;
                    }
                    all.push(nonuniform);
                }
                all
            };
            for (low, high) in verdicts(tau).iter().zip(verdicts(tau * 2.0)) {
                // uniform at tau (= !nonuniform) implies uniform at 2*tau
                prop_assert!(*low || !high);
            }
        }

        #[test]
        fn analyze_is_deterministic(trace in arb_trace(8)) {
            let config = AnalysisConfig::default();
            prop_assert_eq!(analyze(&trace, &config), analyze(&trace, &config));
        }
    }
}
