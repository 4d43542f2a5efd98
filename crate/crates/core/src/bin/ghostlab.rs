use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use ghostlab::experiment::{Command, ExperimentConfig};

#[derive(Parser)]
#[command(name = "ghostlab", version, about = "Dynamic ghost-imaging experiments")]
struct Cli {
    /// JSON experiment config; omitted sections take their defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed, overriding `seeds.master`.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory, overriding `output_dir`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Sub,
}

#[derive(Subcommand, Clone, Copy)]
enum Sub {
    /// Generate scenes, patterns and buckets.
    Simulate,
    /// Run the configured solvers on the eval split.
    Reconstruct,
    /// Train the model and write a checkpoint.
    Train,
    /// Compare analytic and finite-difference gradients.
    Gradcheck,
    /// Score each detector preset with each solver.
    DetectorCompare,
    /// Score every count normalization on SNSPD data.
    NormalizeSweep,
    /// Score solvers across analog noise levels.
    SnrSweep,
    /// Train and score each model variant.
    Ablate,
}

impl From<Sub> for Command {
    fn from(s: Sub) -> Self {
        match s {
            Sub::Simulate => Command::Simulate,
            Sub::Reconstruct => Command::Reconstruct,
            Sub::Train => Command::Train,
            Sub::Gradcheck => Command::Gradcheck,
            Sub::DetectorCompare => Command::DetectorCompare,
            Sub::NormalizeSweep => Command::NormalizeSweep,
            Sub::SnrSweep => Command::SnrSweep,
            Sub::Ablate => Command::Ablate,
        }
    }
}

fn load(cli: &Cli) -> ghostlab::Result<ExperimentConfig> {
    let mut cfg = match &cli.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seeds.master = seed;
    }
    if let Some(out) = &cli.out {
        cfg.output_dir = out.clone();
    }
    cfg.validate()?;
    Ok(cfg)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let command = Command::from(cli.command);
    let result = load(&cli).and_then(|cfg| command.run(&cfg));
    match result {
        Ok(outcome) => {
            for path in &outcome.outputs {
                println!("{}", path.display());
            }
            if let Some((ok, msg)) = &outcome.gate {
                if *ok {
                    eprintln!("{command}: {msg}");
                } else {
                    eprintln!("{command}: FAILED: {msg}");
                }
            }
            if outcome.passed() {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(2)
            }
        }
        Err(e) => {
            eprintln!("{command}: error: {e}");
            ExitCode::FAILURE
        }
    }
}
