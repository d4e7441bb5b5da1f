//! Domain types for attention traces, validation, and corpus file I/O.
//!
//! A trace is triangular: the record for step `i` carries exactly `i`
//! normalized attention weights and `i` unnormalized logits, one per turn
//! seen so far. Both representations are kept because the distribution-level
//! analysis reads the normalized weights while the per-turn change analysis
//! reads the raw logits.
//!
//! Corpus files are UTF-8, one JSON record per line:
//!
//! ```text
//! {"id":"c1","turns":["hi"],"weights":[[1.0]],"logits":[[0.2]],"escalated":false}
//! ```
//!
//! `weights` and `logits` are triangular arrays of arrays (the k-th inner
//! array has length k); `turns` and `escalation_turn` are optional.

use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Sum of normalized weights may drift from 1 by this much before the
/// trace is rejected. Softmax outputs exported through float rounding
/// routinely miss exact normalization.
pub const WEIGHT_SUM_TOLERANCE: f64 = 1e-6;

/// Attention state after the i-th turn has been fed to the model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    /// 1-based step index; equals the number of turns seen so far.
    pub step_index: usize,
    /// Normalized attention weights, one per turn, length = `step_index`.
    pub normalized_weights: Vec<f64>,
    /// Unnormalized output logits, same shape as `normalized_weights`.
    pub logits: Vec<f64>,
}

/// The full triangular series of step records for one conversation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttentionTrace {
    /// Stable identifier used in reports and output file names.
    pub id: String,
    /// Records for steps 1..N in order.
    pub steps: Vec<StepRecord>,
    /// Turn texts, needed only for rendering.
    pub turn_texts: Option<Vec<String>>,
    /// Whether the conversation was transferred to a human.
    pub escalated: bool,
    /// 1-based turn at which the transfer happened, when `escalated`.
    pub escalation_turn: Option<usize>,
}

impl AttentionTrace {
    /// Number of turns N (= number of steps).
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    /// The step record at the stopping point: the escalation turn when one
    /// is recorded, otherwise the final step.
    pub fn stop_step(&self) -> Option<&StepRecord> {
        match self.escalation_turn {
            Some(turn) if turn >= 1 && turn <= self.steps.len() => self.steps.get(turn - 1),
            _ => self.steps.last(),
        }
    }
}

/// Policy for the variation value of the final turn, whose defining sum
/// is empty.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LastTurnVariationPolicy {
    /// Final turn gets mean variation 0 and flag false.
    #[default]
    Zero,
}

/// Thresholds and edge-case policies for one analysis run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisConfig {
    /// Uniformity threshold on alpha.
    pub tau_a: f64,
    /// Context-change threshold on single-step logit deltas.
    pub tau_c: f64,
    /// Variation threshold on mean absolute logit change.
    pub tau_v: f64,
    /// Value assigned to the final turn's variation.
    pub last_turn_variation_policy: LastTurnVariationPolicy,
}

impl Default for AnalysisConfig {
    /// The calibrated defaults: tau_a 0.18, tau_c 0.095, tau_v 0.124.
    fn default() -> Self {
        Self {
            tau_a: 0.18,
            tau_c: 0.095,
            tau_v: 0.124,
            last_turn_variation_policy: LastTurnVariationPolicy::Zero,
        }
    }
}

// ---------------------------------------------------------------------------
// Validation
// ---------------------------------------------------------------------------

/// One invariant violation found in a trace. Violations are data, not
/// failures: `validate_trace` reports all of them instead of stopping at
/// the first.
#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    /// 1-based step the violation was found at; `None` for trace-level rules.
    pub step: Option<usize>,
    /// Field the rule applies to.
    pub field: &'static str,
    /// Human-readable description.
    pub detail: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.step {
            Some(step) => write!(f, "{} at step {}: {}", self.field, step, self.detail),
            None => write!(f, "{}: {}", self.field, self.detail),
        }
    }
}

/// Check every type invariant, returning all violations (empty = valid).
pub fn validate_trace(trace: &AttentionTrace) -> Vec<Violation> {
    let mut violations = Vec::new();

    if trace.steps.is_empty() {
        violations.push(Violation {
            step: None,
            field: "steps",
            detail: "trace has no steps; N >= 1 required".to_string(),
        });
    }

    for (k, step) in trace.steps.iter().enumerate() {
        let expected = k + 1;
        if step.step_index != expected {
            violations.push(Violation {
                step: Some(expected),
                field: "step_index",
                detail: format!(
                    "steps must be contiguous; position {} has step_index {}",
                    expected, step.step_index
                ),
            });
        }
        if step.normalized_weights.len() != expected {
            violations.push(Violation {
                step: Some(expected),
                field: "normalized_weights",
                detail: format!(
                    "length mismatch at step {}: expected {} weights, got {}",
                    expected,
                    expected,
                    step.normalized_weights.len()
                ),
            });
        }
        if step.logits.len() != step.normalized_weights.len() {
            violations.push(Violation {
                step: Some(expected),
                field: "logits",
                detail: format!(
                    "length mismatch at step {}: {} logits vs {} weights",
                    expected,
                    step.logits.len(),
                    step.normalized_weights.len()
                ),
            });
        }
        for (j, &w) in step.normalized_weights.iter().enumerate() {
            if !w.is_finite() || !(-1e-9..=1.0 + 1e-9).contains(&w) {
                violations.push(Violation {
                    step: Some(expected),
                    field: "normalized_weights",
                    detail: format!("weight {} for turn {} is outside [0, 1]", w, j + 1),
                });
            }
        }
        if !step.normalized_weights.is_empty() {
            let sum: f64 = step.normalized_weights.iter().sum();
            if (sum - 1.0).abs() > WEIGHT_SUM_TOLERANCE {
                violations.push(Violation {
                    step: Some(expected),
                    field: "normalized_weights",
                    detail: format!("weights sum {} != 1 at step {}", sum, expected),
                });
            }
        }
        if step.logits.iter().any(|l| !l.is_finite()) {
            violations.push(Violation {
                step: Some(expected),
                field: "logits",
                detail: format!("non-finite logit at step {}", expected),
            });
        }
    }

    if let Some(texts) = &trace.turn_texts {
        if texts.len() != trace.steps.len() {
            violations.push(Violation {
                step: None,
                field: "turn_texts",
                detail: format!("{} turn texts for {} steps", texts.len(), trace.steps.len()),
            });
        }
    }

    match (trace.escalated, trace.escalation_turn) {
        (false, Some(turn)) => violations.push(Violation {
            step: None,
            field: "escalation_turn",
            detail: format!("escalation_turn {} set on a non-escalated trace", turn),
        }),
        (true, Some(turn)) if turn < 1 || turn > trace.steps.len() => violations.push(Violation {
            step: None,
            field: "escalation_turn",
            detail: format!(
                "escalation_turn {} outside [1, {}]",
                turn,
                trace.steps.len()
            ),
        }),
        _ => {}
    }

    violations
}

// ---------------------------------------------------------------------------
// Corpus file I/O
// ---------------------------------------------------------------------------

/// Errors from loading or saving corpus files.
#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("parse error on line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("invalid trace on line {line}: {violations}")]
    Invalid { line: usize, violations: String },
}

/// On-disk record shape. Weights and logits are stored as triangular
/// arrays of arrays; the step index is implied by position.
#[derive(Debug, Serialize, Deserialize)]
struct CorpusRecord {
    id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    turns: Option<Vec<String>>,
    weights: Vec<Vec<f64>>,
    logits: Vec<Vec<f64>>,
    escalated: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    escalation_turn: Option<usize>,
}

impl From<&AttentionTrace> for CorpusRecord {
    fn from(trace: &AttentionTrace) -> Self {
        CorpusRecord {
            id: trace.id.clone(),
            turns: trace.turn_texts.clone(),
            weights: trace
                .steps
                .iter()
                .map(|s| s.normalized_weights.clone())
                .collect(),
            logits: trace.steps.iter().map(|s| s.logits.clone()).collect(),
            escalated: trace.escalated,
            escalation_turn: trace.escalation_turn,
        }
    }
}

impl From<CorpusRecord> for AttentionTrace {
    fn from(record: CorpusRecord) -> Self {
        let steps = record
            .weights
            .into_iter()
            .zip(record.logits)
            .enumerate()
            .map(|(k, (normalized_weights, logits))| StepRecord {
                step_index: k + 1,
                normalized_weights,
                logits,
            })
            .collect();
        AttentionTrace {
            id: record.id,
            steps,
            turn_texts: record.turns,
            escalated: record.escalated,
            escalation_turn: record.escalation_turn,
        }
    }
}

/// Load a line-delimited corpus file. Traces come back in file order and
/// every one of them passes [`validate_trace`]; blank lines are skipped.
pub fn load_corpus(path: &Path) -> Result<Vec<AttentionTrace>, CorpusError> {
    let reader = BufReader::new(File::open(path)?);
    let mut traces = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let record: CorpusRecord = serde_json::from_str(&line).map_err(|e| CorpusError::Parse {
            line: line_no,
            message: e.to_string(),
        })?;
        if record.weights.len() != record.logits.len() {
            return Err(CorpusError::Parse {
                line: line_no,
                message: format!(
                    "weights has {} steps but logits has {}",
                    record.weights.len(),
                    record.logits.len()
                ),
            });
        }
        let trace = AttentionTrace::from(record);
        let violations = validate_trace(&trace);
        if !violations.is_empty() {
            let joined = violations
                .iter()
                .map(|v| v.to_string())
                .collect::<Vec<_>>()
                .join("; ");
            return Err(CorpusError::Invalid {
                line: line_no,
                violations: joined,
            });
        }
        traces.push(trace);
    }
    Ok(traces)
}

/// Save traces one record per line. Weights survive a save/load round trip
/// exactly: the JSON encoder emits the shortest representation that parses
/// back to the same f64.
pub fn save_corpus(traces: &[AttentionTrace], path: &Path) -> Result<(), CorpusError> {
    let mut writer = BufWriter::new(File::create(path)?);
    for trace in traces {
        let record = CorpusRecord::from(trace);
        let json = serde_json::to_string(&record).map_err(|e| CorpusError::Parse {
            line: 0,
            message: e.to_string(),
        })?;
        writeln!(writer, "{}", json)?;
    }
    writer.flush()?;
    Ok(())
}
