use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use flame_cli::{
    cmd_eval, cmd_offset, cmd_synth, default_jobs, CliError, EvalArgs, LatencyOverride,
};
use flame_core::EvalMode;

/// Latency-aware evaluation of video semantic segmentation.
#[derive(Debug, Parser)]
#[command(name = "flame", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Mode {
    Static,
    Flame,
}

impl From<Mode> for EvalMode {
    fn from(m: Mode) -> Self {
        match m {
            Mode::Static => EvalMode::Static,
            Mode::Flame => EvalMode::Flame,
        }
    }
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Score predictions against a dataset and print the report.
    Eval {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        predictions: PathBuf,
        #[arg(long, value_enum)]
        mode: Mode,
        /// Write the JSON report here.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Worker threads for loading label maps [default: available cores].
        #[arg(long)]
        jobs: Option<usize>,
        /// Use this latency (ms) for every prediction.
        #[arg(long, conflicts_with = "latency_trace")]
        latency: Option<f64>,
        /// Per-frame latencies from a `frame_index,latency_ms` CSV.
        #[arg(long)]
        latency_trace: Option<PathBuf>,
    },
    /// Render a synthetic scene to PGM files plus dataset and prediction manifests.
    Synth {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Print the frame offset ceil(latency / interval).
    #[command(allow_negative_numbers = true)]
    Offset { latency_ms: f64, interval_ms: f64 },
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Eval {
            dataset,
            predictions,
            mode,
            out,
            jobs,
            latency,
            latency_trace,
        } => {
            let args = EvalArgs {
                dataset,
                predictions,
                mode: mode.into(),
                out,
                jobs: jobs.unwrap_or_else(default_jobs),
                latency: latency
                    .map(LatencyOverride::Constant)
                    .or(latency_trace.map(LatencyOverride::Trace)),
            };
            let report = cmd_eval(&args)?;
            print!("{}", report.render_table());
        }
        Command::Synth { spec, out_dir } => {
            let out = cmd_synth(&spec, &out_dir)?;
            println!("{}", out.dataset_manifest.display());
            for p in out.prediction_manifests {
                println!("{}", p.display());
            }
        }
        Command::Offset {
            latency_ms,
            interval_ms,
        } => print!("{}", cmd_offset(latency_ms, interval_ms)?),
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
