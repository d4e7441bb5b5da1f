//! Turn-importance analysis for sequential attention traces.
//!
//! A classifier that re-scores a growing conversation prefix emits one
//! attention weight vector per step, forming a triangular trace: step `i`
//! holds `i` weights. When the weights at the stopping point are close to
//! uniform, they explain nothing about why the stop happened. This crate
//! measures that uniformity through perplexity, detects three kinds of
//! change in turn importance as the sequence grows (distribution switches,
//! single-step logit spikes, sustained logit drift), and synthesizes an
//! alternative per-turn intensity visual from those changes whenever the
//! stop-point weights are uniform.
//!
//! Modules:
//! - [`trace`]: domain types, validation, and line-delimited corpus I/O
//! - [`uniformity`]: entropy, perplexity, and the uniformity measure alpha
//! - [`switches`]: the three change detectors over a trace
//! - [`visual`]: per-turn intensities and terminal/HTML rendering
//! - [`calibration`]: percentile threshold calibration and corpus statistics
//! - [`synth`]: deterministic synthetic traces for tests and demos

#![forbid(unsafe_code)]

pub mod calibration;
pub mod switches;
pub mod synth;
pub mod trace;
pub mod uniformity;
pub mod visual;

pub use trace::{AnalysisConfig, AttentionTrace, StepRecord};
pub use uniformity::{alpha, alpha_at_stop, entropy, is_tau_uniform, perplexity};
