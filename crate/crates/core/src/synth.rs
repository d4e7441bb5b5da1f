//! Deterministic synthetic trace generation.
//!
//! The generator exists so the analysis pipeline can be exercised end to
//! end without a trained model: corpora are reproducible from a seed, turn
//! counts follow the skewed shape seen in production IVA logs (median 3,
//! long tail capped in the 40s), and each scenario guarantees a specific
//! analysis outcome.
//!
//! Randomness comes from SplitMix64 (Steele, Lea & Flood's published
//! mixing function), chosen over an external RNG so the exact sequence is
//! pinned by this crate and corpora stay bit-identical across platforms
//! and releases.

use std::collections::BTreeMap;
use std::fmt;

use thiserror::Error;

use crate::trace::{AttentionTrace, StepRecord};

/// SplitMix64: `state += 0x9E3779B97F4A7C15`, then two xor-multiply mixing
/// rounds. Passes BigCrush, one u64 of state, trivially portable.
#[derive(Debug, Clone)]
pub struct SplitMix64 {
    state: u64,
}

impl SplitMix64 {
    pub fn new(seed: u64) -> Self {
        Self { state: seed }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(0x9E37_79B9_7F4A_7C15);
        let mut z = self.state;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }

    /// Uniform in [0, 1) with 53 bits of precision.
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform integer in [lo, hi] (inclusive).
    pub fn next_range(&mut self, lo: usize, hi: usize) -> usize {
        debug_assert!(lo <= hi);
        lo + (self.next_u64() % (hi - lo + 1) as u64) as usize
    }
}

/// Turn-count sampler with the production shape: quartiles 1/3/4, 95th
/// percentile 8, mean near 3.4, and a long thin tail out to `max_turns`.
#[derive(Debug, Clone, PartialEq)]
pub struct TurnCountModel {
    pub min_turns: usize,
    pub max_turns: usize,
}

impl Default for TurnCountModel {
    fn default() -> Self {
        Self {
            min_turns: 1,
            max_turns: 43,
        }
    }
}

impl TurnCountModel {
    /// Inverse-CDF anchors below the 95th percentile; the tail above it
    /// rises polynomially so extreme counts stay rare.
    const ANCHORS: [(f64, f64); 5] = [
        (0.0, 1.0),
        (0.25, 1.0),
        (0.5, 3.0),
        (0.75, 4.0),
        (0.95, 8.0),
    ];

    fn sample(&self, rng: &mut SplitMix64) -> usize {
        let u = rng.next_f64();
        let value = if u >= 0.95 {
            let s = (u - 0.95) / 0.05;
            let top = self.max_turns.max(8) as f64;
            8.0 + (top - 8.0) * s.powi(10)
        } else {
            let mut value = 1.0;
            for pair in Self::ANCHORS.windows(2) {
                let ((u0, v0), (u1, v1)) = (pair[0], pair[1]);
                if u < u1 {
                    value = v0 + (v1 - v0) * (u - u0) / (u1 - u0);
                    break;
                }
            }
            value
        };
        (value.round() as usize).clamp(self.min_turns, self.max_turns)
    }
}

/// What the generated corpus must look like under analysis.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scenario {
    /// Stop-point weights uniform (alpha <= 0.18) with at least one switch
    /// event, and the switch intensities never renormalize to uniform.
    UniformStop,
    /// Stop-point weights clearly non-uniform (alpha > 0.18).
    SpikyStop,
    /// At least one event of each of the three kinds per trace.
    SwitchRich,
    /// No events of any kind anywhere.
    Constant,
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            Scenario::UniformStop => "uniform_stop",
            Scenario::SpikyStop => "spiky_stop",
            Scenario::SwitchRich => "switch_rich",
            Scenario::Constant => "constant",
        };
        write!(f, "{name}")
    }
}

impl std::str::FromStr for Scenario {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "uniform_stop" => Ok(Scenario::UniformStop),
            "spiky_stop" => Ok(Scenario::SpikyStop),
            "switch_rich" => Ok(Scenario::SwitchRich),
            "constant" => Ok(Scenario::Constant),
            other => Err(format!(
                "unknown scenario {other:?}; expected uniform_stop, spiky_stop, switch_rich or constant"
            )),
        }
    }
}

/// Full recipe for one corpus. Equal specs produce identical corpora.
#[derive(Debug, Clone, PartialEq)]
pub struct GenSpec {
    pub seed: u64,
    pub n_conversations: usize,
    pub turn_counts: TurnCountModel,
    pub scenario: Scenario,
    /// Probability that a trace is marked escalated (at its final turn).
    pub escalation_rate: f64,
}

impl Default for GenSpec {
    fn default() -> Self {
        Self {
            seed: 0,
            n_conversations: 100,
            turn_counts: TurnCountModel::default(),
            scenario: Scenario::UniformStop,
            escalation_rate: 0.2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GenError {
    #[error("infeasible spec: {0}")]
    Infeasible(String),
}

/// Magnitude of the deliberate logit jumps; far above the default tau_c
/// and tau_v so scenario contracts hold.
const JUMP: f64 = 0.5;

const PHRASES: [&str; 12] = [
    "hello",
    "are you there",
    "i need to change my flight",
    "where is my refund",
    "talk to an agent",
    "seat upgrade options",
    "my booking reference is QX41",
    "is my flight delayed",
    "cancel my reservation",
    "baggage allowance",
    "rebook after cancellation",
    "help",
];

fn uniform_weights(n: usize) -> Vec<f64> {
    vec![1.0 / n as f64; n]
}

/// One dominant entry in [0.75, 0.95]; alpha lands well above 0.18 for
/// every n >= 2.
fn spiky_weights(n: usize, dominant: usize, rng: &mut SplitMix64) -> Vec<f64> {
    let peak = 0.75 + 0.2 * rng.next_f64();
    let rest = (1.0 - peak) / (n - 1) as f64;
    let mut weights = vec![rest; n];
    weights[dominant - 1] = peak;
    weights
}

fn phrases(n: usize, rng: &mut SplitMix64) -> Vec<String> {
    (0..n)
        .map(|_| PHRASES[rng.next_range(0, PHRASES.len() - 1)].to_string())
        .collect()
}

/// Build the triangular logit rows from per-turn base values plus a list
/// of (turn, at_step, delta) jumps applied from `at_step` onward.
fn logit_rows(n: usize, base: &[f64], jumps: &[(usize, usize, f64)]) -> Vec<Vec<f64>> {
    (1..=n)
        .map(|step| {
            (1..=step)
                .map(|turn| {
                    let mut value = base[turn - 1];
                    for &(jump_turn, at_step, delta) in jumps {
                        if jump_turn == turn && step >= at_step {
                            value += delta;
                        }
                    }
                    value
                })
                .collect()
        })
        .collect()
}

fn assemble(
    id: String,
    weights: Vec<Vec<f64>>,
    logits: Vec<Vec<f64>>,
    texts: Vec<String>,
    escalated: bool,
) -> AttentionTrace {
    let n = weights.len();
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
        id,
        steps,
        turn_texts: Some(texts),
        escalated,
        escalation_turn: if escalated { Some(n) } else { None },
    }
}

/// Generate a corpus satisfying the scenario contract.
pub fn generate_corpus(spec: &GenSpec) -> Result<Vec<AttentionTrace>, GenError> {
    if !(0.0..=1.0).contains(&spec.escalation_rate) {
        return Err(GenError::Infeasible(format!(
            "escalation_rate {} outside [0, 1]",
            spec.escalation_rate
        )));
    }
    if spec.turn_counts.min_turns < 1 || spec.turn_counts.min_turns > spec.turn_counts.max_turns {
        return Err(GenError::Infeasible(format!(
            "turn count bounds [{}, {}] are empty or start below 1",
            spec.turn_counts.min_turns, spec.turn_counts.max_turns
        )));
    }
    if spec.turn_counts.max_turns < 2 && spec.scenario != Scenario::Constant {
        return Err(GenError::Infeasible(format!(
            "scenario {} needs conversations of at least 2 turns, but max_turns is {}",
            spec.scenario, spec.turn_counts.max_turns
        )));
    }

    let mut rng = SplitMix64::new(spec.seed);
    let mut corpus = Vec::with_capacity(spec.n_conversations);
    for index in 0..spec.n_conversations {
        let id = format!("conv-{index:05}");
        let mut n = spec.turn_counts.sample(&mut rng);
        if spec.scenario != Scenario::Constant {
            n = n.max(2);
        }
        let escalated = rng.next_f64() < spec.escalation_rate;
        let texts = phrases(n, &mut rng);
        let trace = match spec.scenario {
            Scenario::Constant => {
                let weights = (1..=n).map(uniform_weights).collect();
                let logits = logit_rows(n, &vec![0.25; n], &[]);
                assemble(id, weights, logits, texts, escalated)
            }
            Scenario::SpikyStop => {
                let dominant = rng.next_range(1, n);
                let mut weights: Vec<Vec<f64>> = (1..=n - 1).map(uniform_weights).collect();
                weights.push(spiky_weights(n, dominant, &mut rng));
                let base: Vec<f64> = (0..n).map(|_| rng.next_f64()).collect();
                let logits = logit_rows(n, &base, &[]);
                assemble(id, weights, logits, texts, escalated)
            }
            Scenario::UniformStop => {
                // Uniform at the stop; structure comes from a mid-trace
                // spike (attention events) and one strong logit jump
                // (context + variation). Turn 1 keeps a flat logit for
                // n >= 3, guaranteeing a zero-intensity turn, so the
                // fallback visual never renormalizes to uniform.
                let base: Vec<f64> = (0..n).map(|_| 0.2 + 0.6 * rng.next_f64()).collect();
                let (weights, jumps) = if n == 2 {
                    let flat: Vec<Vec<f64>> = (1..=n).map(uniform_weights).collect();
                    (flat, vec![(1, 2, JUMP)])
                } else {
                    let spike_step = rng.next_range(2, n - 1);
                    let jump_turn = rng.next_range(2, n - 1);
                    let weights = (1..=n)
                        .map(|step| {
                            if step == spike_step {
                                spiky_weights(step, rng.next_range(1, step), &mut rng)
                            } else {
                                uniform_weights(step)
                            }
                        })
                        .collect();
                    (weights, vec![(jump_turn, jump_turn + 1, JUMP)])
                };
                let logits = logit_rows(n, &base, &jumps);
                assemble(id, weights, logits, texts, escalated)
            }
            Scenario::SwitchRich => {
                // Spike from some step to the end (one uniform-to-spiky
                // flip), plus a last-transition jump on turn n-1 whose
                // single-step mean clears tau_v.
                let spike_step = rng.next_range(2, n);
                let dominant = rng.next_range(1, spike_step);
                let weights = (1..=n)
                    .map(|step| {
                        if step >= spike_step {
                            let d = dominant.min(step);
                            spiky_weights(step, d, &mut rng)
                        } else {
                            uniform_weights(step)
                        }
                    })
                    .collect();
                let base: Vec<f64> = (0..n).map(|_| 0.2 + 0.6 * rng.next_f64()).collect();
                let jumps = vec![(n - 1, n, JUMP)];
                let logits = logit_rows(n, &base, &jumps);
                assemble(id, weights, logits, texts, escalated)
            }
        };
        corpus.push(trace);
    }
    Ok(corpus)
}

// ---------------------------------------------------------------------------
// Toy attention scorer
// ---------------------------------------------------------------------------

/// Extra logit granted to the newest turn when it matched a keyword.
pub const RECENCY_BONUS: f64 = 0.2;

fn stable_softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exp: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
    let sum: f64 = exp.iter().sum();
    exp.into_iter().map(|e| e / sum).collect()
}

/// Score a conversation with a keyword lookup instead of a neural model.
///
/// Each turn's base logit is the largest keyword weight among its words
/// (0 when nothing matches); while a matching turn is the newest one it
/// additionally carries [`RECENCY_BONUS`]. Keyword-free conversations get
/// equal logits and therefore uniform weights at every step. Weights are
/// the softmax of the step's logits.
pub fn toy_attention_trace(
    turns: &[String],
    keyword_weights: &BTreeMap<String, f64>,
) -> AttentionTrace {
    let base: Vec<f64> = turns
        .iter()
        .map(|turn| {
            turn.split(|c: char| !c.is_alphanumeric())
                .filter(|w| !w.is_empty())
                .filter_map(|w| keyword_weights.get(&w.to_lowercase()).copied())
                .fold(0.0, f64::max)
        })
        .collect();
    let steps = (1..=turns.len())
        .map(|step| {
            let mut logits: Vec<f64> = base[..step].to_vec();
            if logits[step - 1] > 0.0 {
                logits[step - 1] += RECENCY_BONUS;
            }
            StepRecord {
                step_index: step,
                normalized_weights: stable_softmax(&logits),
                logits,
            }
        })
        .collect();
    AttentionTrace {
        id: "toy".to_string(),
        steps,
        turn_texts: Some(turns.to_vec()),
        escalated: false,
        escalation_turn: None,
    }
}
