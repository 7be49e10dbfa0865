//! Stage-tagged failures. Every error names the pipeline stage or tool
//! command it came from; `run` additionally reports the last checkpoint
//! written so an interrupted experiment can be picked up by hand.

use std::fmt;
use std::path::PathBuf;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Config,
    SynthGen,
    Daae,
    Interpolate,
    Pretrain,
    Adversarial,
    Evaluate,
    Report,
    Translate,
    Metrics,
    Analyze,
    Translit,
    Perturb,
}

impl Stage {
    pub fn name(self) -> &'static str {
        match self {
            Stage::Config => "config",
            Stage::SynthGen => "synth-gen",
            Stage::Daae => "daae",
            Stage::Interpolate => "interpolate",
            Stage::Pretrain => "pretrain",
            Stage::Adversarial => "adversarial",
            Stage::Evaluate => "evaluate",
            Stage::Report => "report",
            Stage::Translate => "translate",
            Stage::Metrics => "metrics",
            Stage::Analyze => "analyze",
            Stage::Translit => "translit",
            Stage::Perturb => "perturb",
        }
    }

    pub fn from_name(name: &str) -> Option<Stage> {
        [
            Stage::Config,
            Stage::SynthGen,
            Stage::Daae,
            Stage::Interpolate,
            Stage::Pretrain,
            Stage::Adversarial,
            Stage::Evaluate,
            Stage::Report,
            Stage::Translate,
            Stage::Metrics,
            Stage::Analyze,
            Stage::Translit,
            Stage::Perturb,
        ]
        .into_iter()
        .find(|s| s.name() == name)
    }

    pub fn exit_code(self) -> i32 {
        match self {
            Stage::Config => 2,
            Stage::SynthGen => 3,
            Stage::Daae => 4,
            Stage::Interpolate => 5,
            Stage::Pretrain => 6,
            Stage::Adversarial => 7,
            Stage::Evaluate => 8,
            Stage::Report => 9,
            Stage::Translate => 10,
            Stage::Metrics => 11,
            Stage::Analyze => 12,
            Stage::Translit => 13,
            Stage::Perturb => 14,
        }
    }
}

#[derive(Debug)]
pub struct CliError {
    pub stage: Stage,
    pub message: String,
    /// Most recent checkpoint written before the failure, if any.
    pub last_checkpoint: Option<PathBuf>,
}

impl CliError {
    pub fn new(stage: Stage, message: impl Into<String>) -> Self {
        CliError { stage, message: message.into(), last_checkpoint: None }
    }

    pub fn with_checkpoint(mut self, path: Option<PathBuf>) -> Self {
        self.last_checkpoint = path;
        self
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "error[{}]: {}", self.stage.name(), self.message)?;
        if let Some(p) = &self.last_checkpoint {
            write!(f, " (last checkpoint: {})", p.display())?;
        }
        Ok(())
    }
}

impl std::error::Error for CliError {}

/// `map_err` adapter attaching a stage tag to any displayable error.
pub fn at<E: fmt::Display>(stage: Stage) -> impl Fn(E) -> CliError {
    move |e| CliError::new(stage, e.to_string())
}
