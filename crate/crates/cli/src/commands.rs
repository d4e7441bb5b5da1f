//! Command implementations behind the thin clap layer in `main`.

use std::fs;
use std::io::{self, Write};
use std::path::Path;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use serde::Serialize;

use tracelight::calibration::{
    calibrate_thresholds, corpus_statistics, percentile, uniformity_curve,
};
use tracelight::switches::{analyze, AttentionDependencyEvent, ContextDependencyEvent};
use tracelight::synth::{generate_corpus, GenSpec, Scenario, TurnCountModel};
use tracelight::trace::{load_corpus, save_corpus, AnalysisConfig, AttentionTrace};
use tracelight::visual::{render, select_visualization, RenderMode, VisualSource};

use crate::Mode;

/// Write to stdout, treating a closed pipe (`analyze ... | head`) as a
/// normal early exit instead of a panic.
fn emit(text: &str) -> Result<()> {
    let mut out = io::stdout().lock();
    match out.write_all(text.as_bytes()).and_then(|()| out.flush()) {
        Ok(()) => Ok(()),
        Err(e) if e.kind() == io::ErrorKind::BrokenPipe => std::process::exit(0),
        Err(e) => Err(e.into()),
    }
}

/// Run `f` over the corpus with the given worker count, preserving input
/// order in the output. One worker takes the plain sequential path;
/// results never depend on the worker count.
fn map_ordered<F>(corpus: &[AttentionTrace], workers: usize, f: F) -> Result<Vec<String>>
where
    F: Fn(&AttentionTrace) -> Result<String> + Sync,
{
    let workers = workers.max(1);
    if workers == 1 || corpus.len() < 2 {
        return corpus.iter().map(&f).collect();
    }
    let chunk_size = corpus.len().div_ceil(workers);
    let mut results: Vec<Result<String>> = Vec::with_capacity(corpus.len());
    std::thread::scope(|scope| {
        let handles: Vec<_> = corpus
            .chunks(chunk_size)
            .map(|chunk| scope.spawn(|| chunk.iter().map(&f).collect::<Vec<_>>()))
            .collect();
        for handle in handles {
            results.extend(handle.join().expect("worker panicked"));
        }
    });
    results.into_iter().collect()
}

#[derive(Serialize)]
struct RunHeader<'a> {
    tau_a: f64,
    tau_c: f64,
    tau_v: f64,
    n_conversations: usize,
    input: &'a str,
}

#[derive(Serialize)]
struct ConversationReport<'a> {
    id: &'a str,
    n_turns: usize,
    escalated: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    escalation_turn: Option<usize>,
    stop_alpha: f64,
    tau_a_uniform: bool,
    source: VisualSource,
    intensities: Vec<f64>,
    attention_events: &'a [AttentionDependencyEvent],
    context_events: &'a [ContextDependencyEvent],
    variation_flags: &'a [bool],
    mean_variations: &'a [f64],
}

pub fn cmd_analyze(input: &Path, config: &AnalysisConfig, workers: usize) -> Result<()> {
    let corpus = load_corpus(input).with_context(|| format!("loading {}", input.display()))?;
    let header = RunHeader {
        tau_a: config.tau_a,
        tau_c: config.tau_c,
        tau_v: config.tau_v,
        n_conversations: corpus.len(),
        input: &input.to_string_lossy(),
    };
    let mut out = String::new();
    out.push_str(&serde_json::to_string(&header)?);
    out.push('\n');
    let lines = map_ordered(&corpus, workers, |trace| {
        let report = analyze(trace, config);
        let viz = select_visualization(trace, config);
        let line = ConversationReport {
            id: &trace.id,
            n_turns: trace.len(),
            escalated: trace.escalated,
            escalation_turn: trace.escalation_turn,
            stop_alpha: viz.stop_alpha,
            tau_a_uniform: viz.stop_alpha <= config.tau_a,
            source: viz.source,
            intensities: viz.per_turn,
            attention_events: &report.attention_events,
            context_events: &report.context_events,
            variation_flags: &report.variation_flags,
            mean_variations: &report.mean_variations,
        };
        Ok(serde_json::to_string(&line)?)
    })?;
    for line in lines {
        out.push_str(&line);
        out.push('\n');
    }
    emit(&out)?;
    Ok(())
}

/// File names derive from conversation ids; anything outside
/// [A-Za-z0-9._-] becomes an underscore.
fn safe_file_stem(id: &str) -> String {
    id.chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || matches!(c, '.' | '_' | '-') {
                c
            } else {
                '_'
            }
        })
        .collect()
}

pub fn cmd_render(
    input: &Path,
    config: &AnalysisConfig,
    mode: Mode,
    color: bool,
    out: Option<&Path>,
    workers: usize,
) -> Result<()> {
    let corpus = load_corpus(input).with_context(|| format!("loading {}", input.display()))?;
    match mode {
        Mode::Terminal => {
            let render_mode = RenderMode::Terminal { color };
            let blocks = map_ordered(&corpus, workers, |trace| {
                let viz = select_visualization(trace, config);
                Ok(render(&viz, trace, render_mode)?)
            })?;
            let stream = blocks.join("\n");
            match out {
                Some(path) => {
                    fs::write(path, stream)
                        .with_context(|| format!("writing {}", path.display()))?;
                }
                None => emit(&stream)?,
            }
        }
        Mode::Html => {
            let dir = out.ok_or_else(|| {
                anyhow::anyhow!("--out DIR is required in html mode (one file per conversation)")
            })?;
            fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
            let pages = map_ordered(&corpus, workers, |trace| {
                let viz = select_visualization(trace, config);
                Ok(render(&viz, trace, RenderMode::Html)?)
            })?;
            for (trace, page) in corpus.iter().zip(pages) {
                let path = dir.join(format!("{}.html", safe_file_stem(&trace.id)));
                fs::write(&path, page).with_context(|| format!("writing {}", path.display()))?;
            }
            eprintln!("wrote {} files to {}", corpus.len(), dir.display());
        }
    }
    Ok(())
}

pub fn cmd_calibrate(input: &Path, pct: f64) -> Result<()> {
    let corpus = load_corpus(input).with_context(|| format!("loading {}", input.display()))?;
    let calibrated = calibrate_thresholds(&corpus, pct)?;
    if calibrated.is_degenerate() {
        eprintln!(
            "warning: degenerate calibration (tau_c = {}, tau_v = {}); \
             the corpus logits carry no change signal",
            calibrated.tau_c, calibrated.tau_v
        );
    }
    #[derive(Serialize)]
    struct CalibrationOutput {
        percentile: f64,
        tau_c: f64,
        tau_v: f64,
        degenerate: bool,
    }
    let output = CalibrationOutput {
        percentile: pct,
        tau_c: calibrated.tau_c,
        tau_v: calibrated.tau_v,
        degenerate: calibrated.is_degenerate(),
    };
    emit(&format!("{}\n", serde_json::to_string(&output)?))?;
    Ok(())
}

pub fn cmd_report(
    input: &Path,
    config: &AnalysisConfig,
    curve_thresholds: &[f64],
    out: &Path,
) -> Result<()> {
    let corpus = load_corpus(input).with_context(|| format!("loading {}", input.display()))?;
    let stats = corpus_statistics(&corpus, config);
    let curve = uniformity_curve(&corpus, config, curve_thresholds);
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let stats_path = out.join("stats.json");
    let curve_path = out.join("curve.csv");
    fs::write(&stats_path, stats.to_json())
        .with_context(|| format!("writing {}", stats_path.display()))?;
    fs::write(&curve_path, curve.to_csv())
        .with_context(|| format!("writing {}", curve_path.display()))?;
    emit(&format!("{}\n", stats.to_json()))?;
    eprintln!(
        "wrote {} and {}",
        stats_path.display(),
        curve_path.display()
    );
    Ok(())
}

#[derive(Serialize)]
struct BenchResult {
    n_conversations: usize,
    mean_latency_us: f64,
    p95_latency_us: f64,
    max_turns: usize,
}

pub fn cmd_bench(input: &Path, config: &AnalysisConfig, reps: usize) -> Result<()> {
    let corpus = load_corpus(input).with_context(|| format!("loading {}", input.display()))?;
    if corpus.is_empty() {
        bail!("benchmark needs at least one conversation");
    }
    // Traces without texts get numbered placeholders so rendering is
    // always part of the measured work.
    let corpus: Vec<AttentionTrace> = corpus
        .into_iter()
        .map(|mut trace| {
            if trace.turn_texts.is_none() {
                trace.turn_texts = Some((1..=trace.len()).map(|i| format!("(turn {i})")).collect());
            }
            trace
        })
        .collect();
    let reps = reps.max(1);
    let mut latencies_us = Vec::with_capacity(corpus.len() * reps);
    let mut sink = 0usize;
    for _ in 0..reps {
        for trace in &corpus {
            let start = Instant::now();
            let report = analyze(trace, config);
            let viz = select_visualization(trace, config);
            let text = render(&viz, trace, RenderMode::Terminal { color: true })?;
            let elapsed = start.elapsed();
            // Keep the computed values alive so the work is not elided.
            sink = sink
                .wrapping_add(text.len())
                .wrapping_add(report.attention_events.len());
            latencies_us.push(elapsed.as_secs_f64() * 1e6);
        }
    }
    let mean = latencies_us.iter().sum::<f64>() / latencies_us.len() as f64;
    let p95 = percentile(&latencies_us, 95.0).unwrap_or(mean);
    let result = BenchResult {
        n_conversations: latencies_us.len(),
        mean_latency_us: mean,
        p95_latency_us: p95,
        max_turns: corpus.iter().map(|t| t.len()).max().unwrap_or(0),
    };
    emit(&format!("{}\n", serde_json::to_string(&result)?))?;
    eprintln!("(checksum {sink})");
    Ok(())
}

pub fn cmd_generate(
    scenario: &str,
    count: usize,
    seed: u64,
    escalation_rate: f64,
    max_turns: usize,
    out: &Path,
) -> Result<()> {
    let scenario: Scenario = scenario.parse().map_err(|e: String| anyhow::anyhow!(e))?;
    let spec = GenSpec {
        seed,
        n_conversations: count,
        turn_counts: TurnCountModel {
            min_turns: 1,
            max_turns,
        },
        scenario,
        escalation_rate,
    };
    let corpus = generate_corpus(&spec)?;
    save_corpus(&corpus, out).with_context(|| format!("writing {}", out.display()))?;
    eprintln!("wrote {} conversations to {}", corpus.len(), out.display());
    Ok(())
}
