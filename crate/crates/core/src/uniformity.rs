//! Entropy, perplexity, and the uniformity measure alpha.
//!
//! For a probability vector `D` over N values, perplexity is `2^H(D)` with
//! `H(D) = sum D(x) * log2(1/D(x))` — the effective number of choices in the
//! distribution. Perplexity is always positive and at most N, with equality
//! exactly for the uniform distribution, so
//!
//! ```text
//! alpha_N(D) = N - perplexity(D)
//! ```
//!
//! is 0 for uniform distributions and grows toward N-1 as the distribution
//! degenerates. A distribution is tau-uniform when `alpha <= tau`. Entropy
//! is computed in bits: perplexity as `2^H` is base-consistent only with
//! log base 2.

use thiserror::Error;

use crate::trace::AttentionTrace;

/// Slack applied to normalization and range checks; see [`DomainError`].
const SUM_TOLERANCE: f64 = 1e-6;
const NEGATIVE_TOLERANCE: f64 = -1e-9;

/// Rejected inputs: these are contract breaches, not data findings.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum DomainError {
    #[error("weight {value} at position {index} is negative")]
    NegativeWeight { index: usize, value: f64 },
    #[error("weights sum to {sum}, expected 1 within {tolerance}")]
    NotNormalized { sum: f64, tolerance: f64 },
    #[error("empty weight vector")]
    Empty,
    #[error("tau {tau} outside [0, {max}] for a distribution over {n} values")]
    TauOutOfRange { tau: f64, max: f64, n: usize },
}

fn check_distribution(weights: &[f64]) -> Result<(), DomainError> {
    if weights.is_empty() {
        return Err(DomainError::Empty);
    }
    for (index, &w) in weights.iter().enumerate() {
        if w < NEGATIVE_TOLERANCE || !w.is_finite() {
            return Err(DomainError::NegativeWeight { index, value: w });
        }
    }
    let sum: f64 = weights.iter().sum();
    if (sum - 1.0).abs() > SUM_TOLERANCE {
        return Err(DomainError::NotNormalized {
            sum,
            tolerance: SUM_TOLERANCE,
        });
    }
    Ok(())
}

/// Shannon entropy in bits. Zero entries contribute nothing (the
/// `0 * log 0 := 0` convention); the result lies in `[0, log2 N]`.
pub fn entropy(weights: &[f64]) -> Result<f64, DomainError> {
    check_distribution(weights)?;
    let mut h = 0.0;
    for &w in weights {
        if w > 0.0 {
            h -= w * w.log2();
        }
    }
    Ok(h.max(0.0))
}

/// `2^entropy`: positive for every distribution and at most N, with
/// equality exactly when the distribution is uniform.
pub fn perplexity(weights: &[f64]) -> Result<f64, DomainError> {
    Ok(entropy(weights)?.exp2())
}

/// Uniformity measure of a distribution: support size, perplexity, and
/// `alpha = n - perplexity`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UniformityMeasure {
    /// Support size N.
    pub n: usize,
    /// Perplexity, in (0, n].
    pub perplexity: f64,
    /// `n - perplexity`, in [0, n-1]. Kept as the exact difference, so
    /// float rounding can leave it within ~1e-9 of the range endpoints.
    pub alpha: f64,
}

/// Compute the uniformity measure of a probability vector.
pub fn alpha(weights: &[f64]) -> Result<UniformityMeasure, DomainError> {
    let n = weights.len();
    let perplexity = perplexity(weights)?;
    Ok(UniformityMeasure {
        n,
        perplexity,
        alpha: n as f64 - perplexity,
    })
}

/// Alpha without domain checks, for internal callers operating on traces
/// that already passed validation.
pub(crate) fn alpha_unchecked(weights: &[f64]) -> f64 {
    let mut h = 0.0;
    for &w in weights {
        if w > 0.0 {
            h -= w * w.log2();
        }
    }
    weights.len() as f64 - h.max(0.0).exp2()
}

/// Whether `weights` is tau-uniform, i.e. `alpha(weights) <= tau`.
/// Valid tau ranges over `[0, N-1]`.
pub fn is_tau_uniform(weights: &[f64], tau: f64) -> Result<bool, DomainError> {
    let n = weights.len();
    if n == 0 {
        return Err(DomainError::Empty);
    }
    let max = (n - 1) as f64;
    if !(0.0..=max).contains(&tau) {
        return Err(DomainError::TauOutOfRange { tau, max, n });
    }
    Ok(alpha(weights)?.alpha <= tau)
}

/// Alpha of the stopping point's normalized weights: the escalation turn's
/// record when one is set, otherwise the final step's.
pub fn alpha_at_stop(trace: &AttentionTrace) -> Result<f64, DomainError> {
    let step = trace.stop_step().ok_or(DomainError::Empty)?;
    Ok(alpha(&step.normalized_weights)?.alpha)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trace::StepRecord;
    use proptest::prelude::*;

    // Frozen oracle values for [0.2, 0.2, 0.6], computed ahead of the build
    // by compensated summation in 50-digit precision:
    //   H = 1.37095059445466863899807606312
    //   P = 2.58640928985893279045557522586
    //   a = 0.413590710141067209544424774139
    const ORACLE_H: f64 = 1.3709505944546687;
    const ORACLE_P: f64 = 2.586409289858933;
    const ORACLE_A: f64 = 0.413590710141067;

    /// Independent entropy oracle: natural-log terms with Kahan-compensated
    /// summation, converted to bits at the end. Shares no code path with
    /// `entropy`, which sums log2 terms directly.
    fn entropy_oracle_bits(weights: &[f64]) -> f64 {
        let mut sum = 0.0f64;
        let mut carry = 0.0f64;
        for &w in weights {
            if w > 0.0 {
                let term = -(w * w.ln());
                let y = term - carry;
                let t = sum + y;
                carry = (t - sum) - y;
                sum = t;
            }
        }
        sum / std::f64::consts::LN_2
    }

    fn trace_ending_with(weights: Vec<f64>) -> AttentionTrace {
        let n = weights.len();
        let mut steps = Vec::new();
        for i in 1..n {
            steps.push(StepRecord {
                step_index: i,
                normalized_weights: vec![1.0 / i as f64; i],
                logits: vec![0.0; i],
            });
        }
        steps.push(StepRecord {
            step_index: n,
            normalized_weights: weights,
            logits: vec![0.0; n],
        });
        AttentionTrace {
            id: "t".to_string(),
            steps,
            turn_texts: None,
            escalated: false,
            escalation_turn: None,
        }
    }

    #[test]
    fn entropy_of_degenerate_is_zero() {
        assert_eq!(entropy(&[1.0]).unwrap(), 0.0);
    }

    #[test]
    fn entropy_of_fair_coin_is_one_bit() {
        assert_eq!(entropy(&[0.5, 0.5]).unwrap(), 1.0);
    }

    #[test]
    fn entropy_matches_frozen_oracle() {
        let h = entropy(&[0.2, 0.2, 0.6]).unwrap();
        assert!((h - ORACLE_H).abs() < 1e-12, "got {h}");
    }

    #[test]
    fn entropy_rejects_negative_entry() {
        let err = entropy(&[0.5, 0.6, -0.1]).unwrap_err();
        assert!(matches!(err, DomainError::NegativeWeight { index: 2, .. }));
    }

    #[test]
    fn entropy_rejects_bad_sum() {
        assert!(matches!(
            entropy(&[0.5, 0.6]).unwrap_err(),
            DomainError::NotNormalized { .. }
        ));
    }

    #[test]
    fn entropy_zero_entries_contribute_nothing() {
        assert_eq!(entropy(&[0.5, 0.5, 0.0]).unwrap(), 1.0);
    }

    #[test]
    fn perplexity_of_uniform_four_is_four() {
        let p = perplexity(&[0.25; 4]).unwrap();
        assert_eq!(p, 4.0);
    }

    #[test]
    fn perplexity_of_degenerate_is_one() {
        assert_eq!(perplexity(&[1.0, 0.0, 0.0]).unwrap(), 1.0);
    }

    #[test]
    fn perplexity_matches_frozen_oracle() {
        let p = perplexity(&[0.2, 0.2, 0.6]).unwrap();
        assert!((p - ORACLE_P).abs() < 1e-12, "got {p}");
    }

    #[test]
    fn alpha_of_uniform_is_zero() {
        let m = alpha(&[1.0 / 3.0; 3]).unwrap();
        assert!(m.alpha.abs() < 1e-9, "got {}", m.alpha);
    }

    #[test]
    fn alpha_of_degenerate_hits_upper_extreme() {
        let m = alpha(&[1.0, 0.0, 0.0]).unwrap();
        assert_eq!(m.alpha, 2.0);
    }

    #[test]
    fn alpha_matches_frozen_oracle() {
        let m = alpha(&[0.2, 0.2, 0.6]).unwrap();
        assert!((m.alpha - ORACLE_A).abs() < 1e-9, "got {}", m.alpha);
    }

    #[test]
    fn anchor_vector_is_uniform_at_half_but_not_at_default() {
        let v = [0.2, 0.2, 0.6];
        assert!(is_tau_uniform(&v, 0.5).unwrap());
        assert!(!is_tau_uniform(&v, 0.18).unwrap());
    }

    #[test]
    fn uniform_is_tau_uniform_for_any_tau() {
        let v = [0.25; 4];
        for tau in [0.0, 0.1, 1.0, 3.0] {
            assert!(is_tau_uniform(&v, tau).unwrap());
        }
    }

    #[test]
    fn tau_out_of_range_is_rejected() {
        assert!(matches!(
            is_tau_uniform(&[0.5, 0.5], 1.5).unwrap_err(),
            DomainError::TauOutOfRange { .. }
        ));
        assert!(matches!(
            is_tau_uniform(&[0.5, 0.5], -0.1).unwrap_err(),
            DomainError::TauOutOfRange { .. }
        ));
    }

    #[test]
    fn alpha_at_stop_uses_final_step() {
        let trace = trace_ending_with(vec![0.2, 0.2, 0.6]);
        let a = alpha_at_stop(&trace).unwrap();
        assert!((a - ORACLE_A).abs() < 1e-9);
    }

    #[test]
    fn alpha_at_stop_of_uniform_ending_is_zero() {
        let trace = trace_ending_with(vec![1.0 / 3.0; 3]);
        assert!(alpha_at_stop(&trace).unwrap().abs() < 1e-9);
    }

    #[test]
    fn alpha_at_stop_of_single_turn_is_zero() {
        let trace = trace_ending_with(vec![1.0]);
        assert_eq!(alpha_at_stop(&trace).unwrap(), 0.0);
    }

    #[test]
    fn alpha_at_stop_uses_escalation_turn_when_earlier() {
        let mut trace = trace_ending_with(vec![0.2, 0.2, 0.6]);
        trace.escalated = true;
        trace.escalation_turn = Some(2);
        // Step 2 is uniform [0.5, 0.5] by construction.
        assert!(alpha_at_stop(&trace).unwrap().abs() < 1e-9);
    }

    /// Random probability vector of the given size, normalized from
    /// positive raw entries.
    fn prob_vector(max_len: usize) -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(0.001f64..1.0, 1..=max_len).prop_map(|raw| {
            let sum: f64 = raw.iter().sum();
            raw.into_iter().map(|x| x / sum).collect()
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig { cases: 1000, .. ProptestConfig::default() })]

        #[test]
        fn perplexity_positive_and_bounded(v in prob_vector(50)) {
            let p = perplexity(&v).unwrap();
            prop_assert!(p > 0.0);
            prop_assert!(p <= v.len() as f64 + 1e-9);
        }

        #[test]
        fn uniform_attains_the_bound(n in 1usize..50) {
            let v = vec![1.0 / n as f64; n];
            let p = perplexity(&v).unwrap();
            prop_assert!((p - n as f64).abs() <= 1e-9);
        }

        #[test]
        fn perturbed_uniform_stays_below_the_bound(n in 2usize..50, eps in 0.01f64..0.2) {
            // Move mass from the first entry to the last; no longer uniform.
            let mut v = vec![1.0 / n as f64; n];
            let shift = eps / n as f64;
            v[0] -= shift;
            v[n - 1] += shift;
            let p = perplexity(&v).unwrap();
            prop_assert!(p < n as f64 - 1e-12);
        }

        #[test]
        fn alpha_in_range(v in prob_vector(50)) {
            let m = alpha(&v).unwrap();
            prop_assert!(m.alpha >= -1e-9);
            prop_assert!(m.alpha <= (v.len() - 1) as f64 + 1e-9);
        }

        #[test]
        fn permutation_invariant(v in prob_vector(20), seed in 0u64..1000) {
            let mut shuffled = v.clone();
            // Fisher-Yates with a tiny LCG; the permutation itself is
            // irrelevant, only that it is a permutation.
            let mut state = seed.wrapping_mul(6364136223846793005).wrapping_add(1);
            for i in (1..shuffled.len()).rev() {
                state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                let j = (state >> 33) as usize % (i + 1);
                shuffled.swap(i, j);
            }
            let a = alpha(&v).unwrap().alpha;
            let b = alpha(&shuffled).unwrap().alpha;
            prop_assert!((a - b).abs() < 1e-9);
        }

        #[test]
        fn agrees_with_compensated_oracle(v in prob_vector(50)) {
            let ours = alpha(&v).unwrap().alpha;
            let oracle = v.len() as f64 - entropy_oracle_bits(&v).exp2();
            prop_assert!((ours - oracle).abs() < 1e-9);
        }
    }
}
