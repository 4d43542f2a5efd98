//! Experiment harness behind the `ghostlab` binary: config, dataset files,
//! evaluation and the report-producing commands.

mod commands;
mod config;
mod dataset;
mod eval;
mod report;

pub use commands::{
    cmd_ablate, cmd_detector_compare, cmd_gradcheck, cmd_normalize_sweep, cmd_reconstruct, cmd_simulate,
    cmd_snr_sweep, cmd_train, reconstruct_table, run_gradcheck, transformed_variance, Outcome, NORMALIZER_FILE,
};
pub use config::{
    DetectorKind, DetectorSection, ExperimentConfig, Learner, MethodKind, ModelSection, NormalizationSection,
    PatternSection, ReconSection, SceneSection, SeedSection,
};
pub use dataset::{intensities, make_patterns, make_scenes, measure, simulate, Dataset, DatasetManifest, SequenceRecord, Split};
pub use eval::{fit_learner, fit_normalizer, samples, score, Fitted, LinearProbe, MethodScores, Reconstructor, Summary};
pub use report::{fmt_g6, CsvTable, SNR_DEFINITION};

use std::fmt;
use std::str::FromStr;

use crate::error::{GhostError, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Command {
    Simulate,
    Reconstruct,
    Train,
    Gradcheck,
    DetectorCompare,
    NormalizeSweep,
    SnrSweep,
    Ablate,
}

impl Command {
    pub const ALL: [Command; 8] = [
        Command::Simulate,
        Command::Reconstruct,
        Command::Train,
        Command::Gradcheck,
        Command::DetectorCompare,
        Command::NormalizeSweep,
        Command::SnrSweep,
        Command::Ablate,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Command::Simulate => "simulate",
            Command::Reconstruct => "reconstruct",
            Command::Train => "train",
            Command::Gradcheck => "gradcheck",
            Command::DetectorCompare => "detector-compare",
            Command::NormalizeSweep => "normalize-sweep",
            Command::SnrSweep => "snr-sweep",
            Command::Ablate => "ablate",
        }
    }

    pub fn run(&self, cfg: &ExperimentConfig) -> Result<Outcome> {
        match self {
            Command::Simulate => cmd_simulate(cfg),
            Command::Reconstruct => cmd_reconstruct(cfg),
            Command::Train => cmd_train(cfg),
            Command::Gradcheck => cmd_gradcheck(cfg),
            Command::DetectorCompare => cmd_detector_compare(cfg),
            Command::NormalizeSweep => cmd_normalize_sweep(cfg),
            Command::SnrSweep => cmd_snr_sweep(cfg),
            Command::Ablate => cmd_ablate(cfg),
        }
    }
}

impl fmt::Display for Command {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Command {
    type Err = GhostError;

    fn from_str(s: &str) -> Result<Self> {
        Command::ALL
            .into_iter()
            .find(|c| c.as_str() == s)
            .ok_or_else(|| GhostError::Config(format!("unknown command {s:?}")))
    }
}
