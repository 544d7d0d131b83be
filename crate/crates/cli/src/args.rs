//! Command-line flags and the resolved training configuration.

use std::path::{Path, PathBuf};

use clap::{ArgGroup, Args, Parser, Subcommand, ValueEnum};
use ndtt::logic::TimeMode;
use ndtt::NdttError;
use serde::{Deserialize, Serialize};

#[derive(Parser, Debug)]
#[command(
    name = "ndtt",
    version,
    about = "Temporal Datalog programs as neural event models: validate, train, score, sample and predict"
)]
pub struct Cli {
    /// Worker threads for parallel scoring, sampling and prediction (default: one per core).
    #[arg(long, global = true, value_name = "N")]
    pub jobs: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Validate a program and list its parameter signatures.
    Check(CheckArgs),
    /// Fit parameters by maximum likelihood with early stopping.
    Train(TrainArgs),
    /// Report held-out log-likelihood.
    Eval(EvalArgs),
    /// Draw event sequences from a model.
    Sample(SampleArgs),
    /// Predict the time and type of every observed event from its history.
    Predict(PredictArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModeArg {
    Continuous,
    Discrete,
}

impl From<ModeArg> for TimeMode {
    fn from(m: ModeArg) -> TimeMode {
        match m {
            ModeArg::Continuous => TimeMode::Continuous,
            ModeArg::Discrete => TimeMode::Discrete,
        }
    }
}

impl From<TimeMode> for ModeArg {
    fn from(m: TimeMode) -> ModeArg {
        match m {
            TimeMode::Continuous => ModeArg::Continuous,
            TimeMode::Discrete => ModeArg::Discrete,
        }
    }
}

#[derive(Args, Debug)]
pub struct CheckArgs {
    /// Program file.
    pub program: PathBuf,
    /// Time mode used to size the parameters.
    #[arg(long, value_enum, default_value = "continuous")]
    pub mode: ModeArg,
    /// Also print the facts of the initial database (after `init`, if used).
    #[arg(long)]
    pub trace: bool,
}

#[derive(Args, Debug, Default)]
pub struct TrainArgs {
    /// JSON run configuration, or a run manifest written by an earlier `train`. Flags override it.
    #[arg(long, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Program file.
    #[arg(long)]
    pub program: Option<PathBuf>,
    /// Training data: a directory of event files or a single file.
    #[arg(long, value_name = "PATH")]
    pub train: Option<PathBuf>,
    /// Development data for early stopping.
    #[arg(long, value_name = "PATH")]
    pub dev: Option<PathBuf>,
    /// Test data, scored with the best parameters.
    #[arg(long, value_name = "PATH")]
    pub test: Option<PathBuf>,
    /// Output directory.
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub mode: Option<ModeArg>,
    /// Adam learning rate [default: 0.001].
    #[arg(long)]
    pub lr: Option<f64>,
    /// Seeds parameter initialization and every random draw [default: 0].
    #[arg(long)]
    pub seed: Option<u64>,
    /// Monte Carlo integral points per observed event [default: 1].
    #[arg(long)]
    pub mc_multiplier: Option<f64>,
    /// Events sampled per intensity sum during training; 0 sums them all [default: 10].
    #[arg(long)]
    pub downsample: Option<usize>,
    /// Epochs without dev improvement before stopping [default: 3].
    #[arg(long)]
    pub patience: Option<usize>,
    /// Maximum number of epochs; 0 keeps the initialization [default: 20].
    #[arg(long)]
    pub max_epochs: Option<usize>,
    /// Train once per size on that many leading training sequences and write a learning curve.
    #[arg(long, value_delimiter = ',', value_name = "N,N,...")]
    pub subset_sizes: Option<Vec<usize>>,
    /// Record elapsed seconds in the metrics (otherwise 0, keeping output reproducible).
    #[arg(long)]
    pub record_wallclock: bool,
}

/// Every setting of a training run. Written into the run manifest.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub program: PathBuf,
    pub train: PathBuf,
    pub dev: Option<PathBuf>,
    pub test: Option<PathBuf>,
    pub out: PathBuf,
    pub mode: ModeArg,
    pub learning_rate: f64,
    pub seed: u64,
    pub mc_multiplier: f64,
    pub downsample: usize,
    pub patience: usize,
    pub max_epochs: usize,
    pub subset_sizes: Vec<usize>,
    pub record_wallclock: bool,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct PartialConfig {
    program: Option<PathBuf>,
    train: Option<PathBuf>,
    dev: Option<PathBuf>,
    test: Option<PathBuf>,
    out: Option<PathBuf>,
    mode: Option<ModeArg>,
    learning_rate: Option<f64>,
    seed: Option<u64>,
    mc_multiplier: Option<f64>,
    downsample: Option<usize>,
    patience: Option<usize>,
    max_epochs: Option<usize>,
    subset_sizes: Option<Vec<usize>>,
    record_wallclock: Option<bool>,
}

fn config_error(msg: impl Into<String>) -> NdttError {
    NdttError::Config(msg.into())
}

fn read_partial(path: &Path) -> Result<PartialConfig, NdttError> {
    let text = std::fs::read_to_string(path).map_err(|e| config_error(format!("{}: {e}", path.display())))?;
    let mut value: serde_json::Value =
        serde_json::from_str(&text).map_err(|e| config_error(format!("{}: {e}", path.display())))?;
    // A manifest nests the configuration under `config`.
    if let Some(inner) = value.get_mut("config") {
        value = inner.take();
    }
    serde_json::from_value(value).map_err(|e| config_error(format!("{}: {e}", path.display())))
}

impl TrainArgs {
    /// Merges flags over the optional config file over the defaults, then
    /// checks the ranges.
    pub fn resolve(&self) -> Result<RunConfig, NdttError> {
        let file = match &self.config {
            Some(p) => read_partial(p)?,
            None => PartialConfig::default(),
        };
        let required = |flag: Option<&PathBuf>, fallback: Option<PathBuf>, name: &str| {
            flag.cloned().or(fallback).ok_or_else(|| config_error(format!("missing --{name}")))
        };
        let config = RunConfig {
            program: required(self.program.as_ref(), file.program, "program")?,
            train: required(self.train.as_ref(), file.train, "train")?,
            dev: self.dev.clone().or(file.dev),
            test: self.test.clone().or(file.test),
            out: required(self.out.as_ref(), file.out, "out")?,
            mode: self.mode.or(file.mode).unwrap_or(ModeArg::Continuous),
            learning_rate: self.lr.or(file.learning_rate).unwrap_or(1e-3),
            seed: self.seed.or(file.seed).unwrap_or(0),
            mc_multiplier: self.mc_multiplier.or(file.mc_multiplier).unwrap_or(1.0),
            downsample: self.downsample.or(file.downsample).unwrap_or(10),
            patience: self.patience.or(file.patience).unwrap_or(3),
            max_epochs: self.max_epochs.or(file.max_epochs).unwrap_or(20),
            subset_sizes: self.subset_sizes.clone().or(file.subset_sizes).unwrap_or_default(),
            record_wallclock: self.record_wallclock || file.record_wallclock.unwrap_or(false),
        };
        config.validate()?;
        Ok(config)
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<(), NdttError> {
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(config_error(format!("learning rate must be positive, got {}", self.learning_rate)));
        }
        if !(self.mc_multiplier.is_finite() && self.mc_multiplier > 0.0) {
            return Err(config_error(format!("mc multiplier must be positive, got {}", self.mc_multiplier)));
        }
        if self.patience == 0 {
            return Err(config_error("patience must be at least 1"));
        }
        if self.subset_sizes.contains(&0) {
            return Err(config_error("subset sizes must be positive"));
        }
        Ok(())
    }
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    /// Program file.
    #[arg(long)]
    pub program: PathBuf,
    /// Checkpoint written by `train`.
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Event data: a directory of event files or a single file.
    #[arg(long, value_name = "PATH")]
    pub data: PathBuf,
    /// Events sampled per intensity sum; 0 sums them all.
    #[arg(long, default_value_t = 0)]
    pub downsample: usize,
    /// Monte Carlo integral points per observed event.
    #[arg(long, default_value_t = 1.0)]
    pub mc_multiplier: f64,
    /// Integrate with this many midpoints per inter-event interval instead of Monte Carlo.
    #[arg(long, value_name = "N", conflicts_with = "mc_multiplier")]
    pub midpoint: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Write the JSON report here instead of standard output.
    #[arg(long, value_name = "FILE")]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
#[command(group(ArgGroup::new("stop").required(true).args(["length", "horizon"])))]
pub struct SampleArgs {
    /// Program file.
    #[arg(long)]
    pub program: PathBuf,
    /// Parameters; without one, parameters are initialized from --seed.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// Time mode [default: the checkpoint's, else continuous].
    #[arg(long, value_enum)]
    pub mode: Option<ModeArg>,
    /// Number of sequences.
    #[arg(long, default_value_t = 1)]
    pub num_seqs: usize,
    /// Modeled events per sequence.
    #[arg(long)]
    pub length: Option<usize>,
    /// Observation window [0, T] per sequence (steps in discrete time).
    #[arg(long)]
    pub horizon: Option<f64>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Event file whose exogenous events are replayed into every sequence.
    #[arg(long, value_name = "FILE")]
    pub exogenous: Option<PathBuf>,
    /// Output directory for `seq_00000.jsonl`, ...
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum TaskArg {
    Time,
    Type,
    Both,
}

#[derive(Args, Debug)]
pub struct PredictArgs {
    /// Program file.
    #[arg(long)]
    pub program: PathBuf,
    /// Checkpoint written by `train`.
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Event data: a directory of event files or a single file.
    #[arg(long, value_name = "PATH")]
    pub data: PathBuf,
    #[arg(long, value_enum, default_value = "both")]
    pub task: TaskArg,
    /// Sampled next-event times averaged per time prediction.
    #[arg(long, default_value_t = 100)]
    pub n: usize,
    /// Restrict predicted types to a functor (`help`) or pattern (`help(eve,_)`).
    #[arg(long, value_name = "PATTERN")]
    pub restrict: Option<String>,
    /// Restrict predicted types to the functor of the true event.
    #[arg(long, conflicts_with = "restrict")]
    pub restrict_true_functor: bool,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Write the JSON report here instead of standard output.
    #[arg(long, value_name = "FILE")]
    pub out: Option<PathBuf>,
}
