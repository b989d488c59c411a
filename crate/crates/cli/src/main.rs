//! `attrhar` command-line entry point.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser, Debug)]
#[command(name = "attrhar", version, about = "Attribute representations for human activity recognition")]
pub struct Cli {
    /// Experiment config (TOML).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Overrides the config's base seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    pub out: PathBuf,
    /// Worker threads; results do not depend on this.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[arg(long, global = true, default_value = "info")]
    pub log_level: log::LevelFilter,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Generate the configured synthetic recordings as CSV.
    Synth(SynthArgs),
    /// Search attribute matrices.
    Evolve(EvolveArgs),
    /// Train on train+validation with a fixed matrix and report test metrics.
    TrainFinal(TrainFinalArgs),
    /// Evaluate a checkpoint on one split.
    Eval(EvalArgs),
    /// Report on an attribute matrix CSV.
    Inspect(InspectArgs),
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum SplitName {
    Train,
    Validation,
    Test,
}

impl SplitName {
    pub fn index(self) -> usize {
        self as usize
    }

    pub fn as_str(self) -> &'static str {
        match self {
            SplitName::Train => "train",
            SplitName::Validation => "validation",
            SplitName::Test => "test",
        }
    }
}

#[derive(Args, Debug)]
pub struct SynthArgs {
    /// Split to write; all three when omitted.
    #[arg(long, value_enum)]
    pub split: Option<SplitName>,
}

#[derive(Args, Debug)]
pub struct EvolveArgs {
    /// Continue from the state file in the output directory.
    #[arg(long)]
    pub resume: bool,
    /// Stop after this many new generations.
    #[arg(long)]
    pub stop_after: Option<usize>,
}

#[derive(Args, Debug)]
pub struct TrainFinalArgs {
    /// Attribute matrix CSV, or `random`.
    #[arg(long)]
    pub attributes: String,
    /// Independent runs; random matrices are redrawn per trial.
    #[arg(long, default_value_t = 1)]
    pub trials: usize,
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub attributes: PathBuf,
    #[arg(long, value_enum, default_value = "test")]
    pub split: SplitName,
}

#[derive(Args, Debug)]
pub struct InspectArgs {
    pub file: PathBuf,
}

const EXIT_VALIDATION: u8 = 1;
const EXIT_RUNTIME: u8 = 2;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(EXIT_VALIDATION)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    env_logger::Builder::new()
        .filter_level(cli.log_level)
        .format_timestamp(None)
        .init();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_RUNTIME);
        }
    }
    match commands::run(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            let validation = e
                .downcast_ref::<attrhar::Error>()
                .is_some_and(attrhar::Error::is_validation);
            ExitCode::from(if validation { EXIT_VALIDATION } else { EXIT_RUNTIME })
        }
    }
}
