//! Command-line surface for attention-trace analysis.
//!
//! Subcommands cover the whole pipeline: `generate` synthesizes a corpus,
//! `analyze` reports per-conversation uniformity and switch events,
//! `render` produces colored terminal or HTML visuals, `calibrate` fits
//! thresholds from data, `report` exports corpus statistics and the
//! uniformity curve, and `bench` measures per-conversation latency.
//!
//! Exit codes: 0 success, 1 input or I/O error, 2 usage error.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

mod commands;

#[derive(Parser)]
#[command(
    name = "tracelight",
    version,
    about = "Turn-importance analysis for attention traces"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Mode {
    Terminal,
    Html,
}

#[derive(clap::Args)]
struct ThresholdArgs {
    /// Uniformity threshold on alpha.
    #[arg(long, default_value_t = 0.18)]
    tau_a: f64,
    /// Context-change threshold on logit deltas.
    #[arg(long, default_value_t = 0.095)]
    tau_c: f64,
    /// Variation threshold on mean absolute logit change.
    #[arg(long, default_value_t = 0.124)]
    tau_v: f64,
}

#[derive(Subcommand)]
enum Command {
    /// Analyze a corpus: stop-point alpha, uniformity verdict, chosen
    /// visualization source, per-turn intensities, and event lists, one
    /// JSON line per conversation.
    Analyze {
        /// Corpus file, one JSON record per line.
        input: PathBuf,
        #[command(flatten)]
        thresholds: ThresholdArgs,
        /// Worker threads; output is identical for any value.
        #[arg(long, default_value_t = 1)]
        workers: usize,
    },
    /// Render conversations as colored visuals.
    Render {
        input: PathBuf,
        #[command(flatten)]
        thresholds: ThresholdArgs,
        /// Output format.
        #[arg(long, value_enum, default_value_t = Mode::Terminal)]
        mode: Mode,
        /// Strip ANSI escape sequences (NO_COLOR in the environment does
        /// the same).
        #[arg(long)]
        no_color: bool,
        /// Terminal mode: write the stream here instead of stdout.
        /// HTML mode: directory receiving one file per conversation
        /// (required).
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value_t = 1)]
        workers: usize,
    },
    /// Calibrate tau_c and tau_v from the pooled logit deltas and
    /// per-turn mean variations.
    Calibrate {
        input: PathBuf,
        /// Percentile of the pooled values, in (0, 100).
        #[arg(long, default_value_t = 75.0)]
        percentile: f64,
    },
    /// Export corpus statistics and the uniformity curve.
    Report {
        input: PathBuf,
        #[command(flatten)]
        thresholds: ThresholdArgs,
        /// Comma-separated alpha thresholds for the curve.
        #[arg(
            long = "thresholds",
            value_delimiter = ',',
            default_value = "0,0.1,0.2,0.3,0.4,0.5,0.75,1"
        )]
        curve_thresholds: Vec<f64>,
        /// Directory receiving stats.json and curve.csv.
        #[arg(long)]
        out: PathBuf,
    },
    /// Time analysis plus rendering per conversation, excluding file I/O.
    Bench {
        input: PathBuf,
        #[command(flatten)]
        thresholds: ThresholdArgs,
        /// Number of passes over the corpus.
        #[arg(long, default_value_t = 1)]
        reps: usize,
    },
    /// Generate a synthetic corpus with a guaranteed analysis outcome.
    Generate {
        /// One of: uniform_stop, spiky_stop, switch_rich, constant.
        #[arg(long, default_value = "uniform_stop")]
        scenario: String,
        #[arg(long, default_value_t = 100)]
        count: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 0.2)]
        escalation_rate: f64,
        #[arg(long, default_value_t = 43)]
        max_turns: usize,
        /// Corpus file to write.
        #[arg(long)]
        out: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Analyze {
            input,
            thresholds,
            workers,
        } => commands::cmd_analyze(&input, &thresholds.into(), workers),
        Command::Render {
            input,
            thresholds,
            mode,
            no_color,
            out,
            workers,
        } => {
            let color = !(no_color || std::env::var_os("NO_COLOR").is_some());
            commands::cmd_render(
                &input,
                &thresholds.into(),
                mode,
                color,
                out.as_deref(),
                workers,
            )
        }
        Command::Calibrate { input, percentile } => commands::cmd_calibrate(&input, percentile),
        Command::Report {
            input,
            thresholds,
            curve_thresholds,
            out,
        } => commands::cmd_report(&input, &thresholds.into(), &curve_thresholds, &out),
        Command::Bench {
            input,
            thresholds,
            reps,
        } => commands::cmd_bench(&input, &thresholds.into(), reps),
        Command::Generate {
            scenario,
            count,
            seed,
            escalation_rate,
            max_turns,
            out,
        } => commands::cmd_generate(&scenario, count, seed, escalation_rate, max_turns, &out),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(1)
        }
    }
}

impl From<ThresholdArgs> for tracelight::AnalysisConfig {
    fn from(args: ThresholdArgs) -> Self {
        tracelight::AnalysisConfig {
            tau_a: args.tau_a,
            tau_c: args.tau_c,
            tau_v: args.tau_v,
            ..tracelight::AnalysisConfig::default()
        }
    }
}
