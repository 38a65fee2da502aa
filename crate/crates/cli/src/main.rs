mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use config::RunConfig;
use scalestream_core::{Backend, OverlapMode, PredictorVariant};

#[derive(Parser, Debug)]
#[command(name = "scalestream", version, about = "Resolution-scalable point stream experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Scan a scene and write the point stream.
    Scan(Common),
    /// Split a stream into temporal scales and summarize them.
    Partition(Common),
    /// Run the scalable pipeline and the baseline, and write metrics.
    Run(Common),
    /// Repeat `run` over tick durations (and optionally seeds) and aggregate.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// Comma-separated tick durations in seconds.
        #[arg(long, value_delimiter = ',')]
        tick_durations: Option<Vec<f64>>,
        /// Seeds as `a..b` or a comma-separated list.
        #[arg(long, value_parser = config::parse_seeds)]
        seeds: Option<config::SeedList>,
    },
    /// Regenerate tables and plots from a previous run directory.
    Report {
        /// Directory written by `run`.
        #[arg(long)]
        from: PathBuf,
        #[arg(long, default_value = "out")]
        out_dir: PathBuf,
    },
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum ModeArg {
    Sim,
    Real,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum OverlapArg {
    Measured,
    FullOverlap,
    NoOverlap,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum PredictorArg {
    NoisyOracle,
    SeededKnn,
}

#[derive(Args, Debug, Clone)]
struct Common {
    /// TOML run configuration; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value = "out")]
    out_dir: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    /// Scene TOML file (default: built-in office room).
    #[arg(long)]
    scene: Option<PathBuf>,
    /// Existing stream file instead of scanning.
    #[arg(long)]
    stream: Option<PathBuf>,
    /// Comma-separated cut timestamps.
    #[arg(long, value_delimiter = ',')]
    cuts: Option<Vec<u32>>,
    #[arg(long)]
    ticks: Option<u32>,
    #[arg(long, value_enum)]
    predictor: Option<PredictorArg>,
    /// Comma-separated per-scale error rates of the noisy oracle.
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    error_rates: Option<Vec<f64>>,
    /// Neighbors per refinement vote.
    #[arg(long)]
    um_k: Option<usize>,
    /// Seconds per scan tick.
    #[arg(long, allow_negative_numbers = true)]
    tick_duration: Option<f64>,
    #[arg(long, value_enum)]
    mode: Option<ModeArg>,
    #[arg(long, value_enum)]
    overlap: Option<OverlapArg>,
    #[arg(long)]
    workers: Option<usize>,
    /// Let scales start without waiting for the previous scale's context.
    #[arg(long)]
    no_fusion: bool,
    /// Also write the stream as CSV.
    #[arg(long)]
    csv: bool,
}

impl Common {
    fn resolve(&self) -> Result<RunConfig, Vec<String>> {
        self.resolve_with(|_| {})
    }

    /// Applies file, flags and then `extra`, and validates the result.
    fn resolve_with(&self, extra: impl FnOnce(&mut RunConfig)) -> Result<RunConfig, Vec<String>> {
        let mut c = match &self.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        if let Some(v) = self.seed {
            c.seed = v;
        }
        if let Some(v) = &self.scene {
            c.scene = Some(v.clone());
        }
        if let Some(v) = &self.stream {
            c.stream = Some(v.clone());
        }
        if let Some(v) = &self.cuts {
            c.cuts = v.clone();
        }
        if let Some(v) = self.ticks {
            c.scan.ticks = v;
        }
        if let Some(v) = self.predictor {
            c.predictor.variant = match v {
                PredictorArg::NoisyOracle => PredictorVariant::NoisyOracle,
                PredictorArg::SeededKnn => PredictorVariant::SeededKnn,
            };
        }
        if let Some(v) = &self.error_rates {
            c.predictor.error_rates = v.clone();
        }
        if let Some(v) = self.um_k {
            c.update.k = v;
        }
        if let Some(v) = self.tick_duration {
            c.timing.tick_duration = v;
        }
        if let Some(v) = self.mode {
            c.timing.backend = match v {
                ModeArg::Sim => Backend::Sim,
                ModeArg::Real => Backend::Real,
            };
        }
        if let Some(v) = self.overlap {
            c.timing.overlap = match v {
                OverlapArg::Measured => OverlapMode::Measured,
                OverlapArg::FullOverlap => OverlapMode::FullOverlap,
                OverlapArg::NoOverlap => OverlapMode::NoOverlap,
            };
        }
        if let Some(v) = self.workers {
            c.timing.workers = v;
        }
        if self.no_fusion {
            c.timing.fusion_dependency = false;
        }
        extra(&mut c);
        let c = c.seeded(c.seed);
        let problems = c.problems();
        if problems.is_empty() {
            Ok(c)
        } else {
            Err(problems)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match commands::dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(commands::Failure::Config(problems)) => {
            eprintln!("configuration error:");
            for p in problems {
                eprintln!("  - {p}");
            }
            ExitCode::from(2)
        }
        Err(commands::Failure::Runtime(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
