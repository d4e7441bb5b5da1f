//! Per-turn intensity visuals and rendering.
//!
//! Every turn gets a triple `[mu, beta, gamma]` of switch indicators —
//! attention switch triggered by this turn's addition, logit moved by a
//! later addition, sustained variation — and the mean of the three is the
//! turn's color intensity, one of `{0, 1/3, 2/3, 1}`.
//!
//! The switch-based visual is a fallback: it applies only when the
//! stop-point attention weights are tau_a-uniform and therefore say nothing
//! about turn importance. Otherwise the stop-point weights themselves are
//! the intensities.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::switches::{analyze, SwitchReport};
use crate::trace::{AnalysisConfig, AttentionTrace};
use crate::uniformity::alpha_unchecked;

/// Switch indicator triple and intensity for one turn.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TurnVisual {
    /// 1-based turn.
    pub turn: usize,
    /// 1 when this turn's addition flipped the uniformity verdict.
    pub mu: u8,
    /// 1 when some later addition moved this turn's logit by >= tau_c.
    pub beta: u8,
    /// 1 when this turn's variation flag is set.
    pub gamma: u8,
    /// `(mu + beta + gamma) / 3`, exactly one of 0, 1/3, 2/3, 1.
    pub intensity: f64,
}

/// Which weighting the visual carries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VisualSource {
    /// Stop-point attention weights, passed through unchanged.
    ModelAttention,
    /// Switch-derived intensities.
    SwitchMethod,
}

impl std::fmt::Display for VisualSource {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            VisualSource::ModelAttention => write!(f, "model_attention"),
            VisualSource::SwitchMethod => write!(f, "switch_method"),
        }
    }
}

/// Chosen visualization for one conversation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VisualizationResult {
    pub source: VisualSource,
    /// One intensity per turn. For `ModelAttention` these are the
    /// stop-point weights (zero-padded when the trace extends past the
    /// stop); for `SwitchMethod` the [`TurnVisual`] intensities.
    pub per_turn: Vec<f64>,
    /// Alpha of the stop-point weights.
    pub stop_alpha: f64,
}

/// Rendering failures.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum VisualError {
    #[error("report covers {report} turns but trace has {trace}")]
    DimensionMismatch { report: usize, trace: usize },
    #[error("trace {id} has no turn texts to render")]
    MissingTurnTexts { id: String },
}

/// Derive the per-turn indicator triples from a switch report.
///
/// Turn 1 always has `mu = 0`: no addition event can target the first
/// step. The report must come from the same trace.
pub fn turn_visuals(
    report: &SwitchReport,
    trace: &AttentionTrace,
) -> Result<Vec<TurnVisual>, VisualError> {
    let n = trace.len();
    if report.len() != n || report.mean_variations.len() != n {
        return Err(VisualError::DimensionMismatch {
            report: report.len(),
            trace: n,
        });
    }
    let visuals = (1..=n)
        .map(|turn| {
            let mu = u8::from(report.attention_events.iter().any(|e| e.at_step == turn));
            let beta = u8::from(
                report
                    .context_events
                    .iter()
                    .any(|e| e.affected_turn == turn),
            );
            let gamma = u8::from(report.variation_flags[turn - 1]);
            TurnVisual {
                turn,
                mu,
                beta,
                gamma,
                intensity: f64::from(mu + beta + gamma) / 3.0,
            }
        })
        .collect();
    Ok(visuals)
}

/// Pick the visualization for a trace: stop-point weights when they are
/// informative (alpha above tau_a), switch intensities when they are
/// tau_a-uniform.
pub fn select_visualization(
    trace: &AttentionTrace,
    config: &AnalysisConfig,
) -> VisualizationResult {
    let stop = trace
        .stop_step()
        .expect("valid trace has at least one step");
    let stop_alpha = alpha_unchecked(&stop.normalized_weights);
    if stop_alpha <= config.tau_a {
        let report = analyze(trace, config);
        let visuals = turn_visuals(&report, trace).expect("report derived from the same trace");
        VisualizationResult {
            source: VisualSource::SwitchMethod,
            per_turn: visuals.into_iter().map(|v| v.intensity).collect(),
            stop_alpha,
        }
    } else {
        let mut per_turn = stop.normalized_weights.clone();
        per_turn.resize(trace.len(), 0.0);
        VisualizationResult {
            source: VisualSource::ModelAttention,
            per_turn,
            stop_alpha,
        }
    }
}

// ---------------------------------------------------------------------------
// Rendering
// ---------------------------------------------------------------------------

/// Output format for [`render`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RenderMode {
    /// One line per turn with ANSI background colors; `color: false`
    /// degrades to plain text with no escape sequences.
    Terminal { color: bool },
    /// Standalone HTML document with a table, legend, and the stop alpha.
    Html,
}

/// Blue ramp, light to dark. The 256-color indices and hex values are the
/// same colors: xterm 189/147/105/63/21.
const RAMP_256: [u8; 5] = [189, 147, 105, 63, 21];
const RAMP_HEX: [&str; 5] = ["#d7d7ff", "#afafff", "#8787ff", "#5f5fff", "#0000ff"];

/// Switch intensities use four fixed levels: none, light, mid, dark.
const SWITCH_RAMP_POSITIONS: [usize; 3] = [0, 2, 4];

/// Ramp slot for an intensity, or `None` for no background. Switch
/// intensities map onto the three fixed levels; model weights quantize
/// the continuous range onto all five shades.
fn shade(source: VisualSource, value: f64) -> Option<usize> {
    if value <= 0.0 {
        return None;
    }
    match source {
        VisualSource::SwitchMethod => {
            let level = (value * 3.0).round() as usize;
            Some(SWITCH_RAMP_POSITIONS[level.clamp(1, 3) - 1])
        }
        VisualSource::ModelAttention => Some(((value * 5.0).ceil() as usize).clamp(1, 5) - 1),
    }
}

fn ansi_paint(text: &str, slot: Option<usize>) -> String {
    match slot {
        None => text.to_string(),
        Some(idx) => {
            // Dark backgrounds get white text.
            let fg = if idx >= 3 { 97 } else { 30 };
            format!("\x1b[48;5;{}m\x1b[{}m{}\x1b[0m", RAMP_256[idx], fg, text)
        }
    }
}

fn html_escape(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    for c in text.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            _ => out.push(c),
        }
    }
    out
}

/// Render one conversation. Pure: the same inputs always produce the same
/// bytes; intensities are taken from `result` untouched.
pub fn render(
    result: &VisualizationResult,
    trace: &AttentionTrace,
    mode: RenderMode,
) -> Result<String, VisualError> {
    let texts = trace
        .turn_texts
        .as_ref()
        .ok_or_else(|| VisualError::MissingTurnTexts {
            id: trace.id.clone(),
        })?;
    if result.per_turn.len() != texts.len() {
        return Err(VisualError::DimensionMismatch {
            report: result.per_turn.len(),
            trace: texts.len(),
        });
    }
    match mode {
        RenderMode::Terminal { color } => Ok(render_terminal(result, trace, texts, color)),
        RenderMode::Html => Ok(render_html(result, trace, texts)),
    }
}

fn render_terminal(
    result: &VisualizationResult,
    trace: &AttentionTrace,
    texts: &[String],
    color: bool,
) -> String {
    let mut out = String::new();
    out.push_str(&format!(
        "conversation {} | source {} | stop alpha {:.6}\n",
        trace.id, result.source, result.stop_alpha
    ));
    for (i, text) in texts.iter().enumerate() {
        let value = result.per_turn[i];
        let cell = format!("{:.3}  {}", value, text);
        let painted = if color {
            ansi_paint(&cell, shade(result.source, value))
        } else {
            cell
        };
        out.push_str(&format!("  turn {:>3}  {}\n", i + 1, painted));
    }
    out
}

fn render_html(result: &VisualizationResult, trace: &AttentionTrace, texts: &[String]) -> String {
    let mut rows = String::new();
    for (i, text) in texts.iter().enumerate() {
        let value = result.per_turn[i];
        let style = match shade(result.source, value) {
            None => String::new(),
            Some(idx) => {
                let fg = if idx >= 3 { "#ffffff" } else { "#000000" };
                format!(" style=\"background-color:{};color:{}\"", RAMP_HEX[idx], fg)
            }
        };
        rows.push_str(&format!(
            "<tr><td>{}</td><td>{:.3}</td><td{}>{}</td></tr>\n",
            i + 1,
            value,
            style,
            html_escape(text)
        ));
    }
    let legend = RAMP_HEX
        .iter()
        .enumerate()
        .map(|(i, hex)| {
            format!(
                "<span style=\"background-color:{0}\">{1} {0}</span>",
                hex,
                i + 1
            )
        })
        .collect::<Vec<_>>()
        .join(" ");
    format!(
        "<!DOCTYPE html>\n<html lang=\"en\">\n<head>\n<meta charset=\"utf-8\">\n\
         <title>conversation {id}</title>\n<style>\n\
         body {{ font-family: sans-serif; margin: 2em; }}\n\
         table {{ border-collapse: collapse; }}\n\
         td, th {{ border: 1px solid #999; padding: 4px 10px; text-align: left; }}\n\
         .legend span {{ padding: 2px 8px; margin-right: 4px; border: 1px solid #999; }}\n\
         </style>\n</head>\n<body>\n\
         <h1>conversation {id}</h1>\n\
         <p>source: {source} | stop alpha: {alpha:.6}</p>\n\
         <table>\n<tr><th>turn</th><th>intensity</th><th>text</th></tr>\n{rows}</table>\n\
         <p class=\"legend\">shade ramp (light to dark): {legend}</p>\n\
         </body>\n</html>\n",
        id = html_escape(&trace.id),
        source = result.source,
        alpha = result.stop_alpha,
        rows = rows,
        legend = legend,
    )
}
