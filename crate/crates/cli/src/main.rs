//! `headpose`: prepare data, train teachers, distil students, evaluate and plot.

mod commands;
mod config;

use std::fmt;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

/// An input or configuration problem (exit code 1).
#[derive(Debug)]
pub struct Usage(pub String);

impl fmt::Display for Usage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Usage {}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Table,
    Json,
}

#[derive(Debug, Parser)]
#[command(name = "headpose", version, about = "Landmark-free head pose estimation with teacher-ensemble distillation")]
pub struct Cli {
    #[command(flatten)]
    pub global: Global,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Global {
    /// TOML file with [model], [data], [train] and [augment] sections.
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Override a config key, e.g. `--set train.lr=0.001` (repeatable).
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
    /// Seed for initialisation, shuffling and augmentation.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, value_name = "DIR")]
    pub out: Option<PathBuf>,
    #[arg(long, global = true, value_enum, default_value_t = Format::Table)]
    pub format: Format,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Validate annotations and write squared, resized face crops (or generate synthetic data).
    Prepare(PrepareArgs),
    /// Train a model on ground-truth labels.
    TrainTeacher(TrainArgs),
    /// Distil a student from teacher checkpoints or a pseudo-label store.
    Distill(TrainArgs),
    /// Write the teacher-ensemble pseudo-label store for the training set.
    PseudoLabel,
    /// Per-angle mean absolute error of a checkpoint or a predictions file.
    Eval(EvalArgs),
    /// Predict the pose of one face.
    Predict(PredictArgs),
    /// Error scatter plots and axis overlays.
    #[command(subcommand)]
    Plot(PlotCommand),
    /// Run the built-in invariant checks.
    Selftest,
}

#[derive(Debug, Args)]
pub struct PrepareArgs {
    /// Annotation file to validate and crop.
    #[arg(long, conflicts_with = "synthetic", required_unless_present = "synthetic")]
    pub annotations: Option<PathBuf>,
    /// Generate this many synthetic samples instead.
    #[arg(long)]
    pub synthetic: Option<usize>,
    /// Synthetic samples reserved for the test split.
    #[arg(long, requires = "synthetic")]
    pub test_count: Option<usize>,
    /// Drop rejected rows and unreadable images instead of failing.
    #[arg(long)]
    pub skip_invalid: bool,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Continue the run stored in the output directory.
    #[arg(long)]
    pub resume: bool,
}

#[derive(Debug, Args)]
pub struct Source {
    /// CSV with id, yaw, pitch, roll, pred_yaw, pred_pitch, pred_roll.
    #[arg(long, conflicts_with_all = ["checkpoint", "annotations"])]
    pub predictions: Option<PathBuf>,
    /// Model to run over the annotations.
    #[arg(long, required_unless_present = "predictions")]
    pub checkpoint: Option<PathBuf>,
    /// Annotations to evaluate (defaults to data.test).
    #[arg(long)]
    pub annotations: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[command(flatten)]
    pub source: Source,
    /// Also print the bundled published results.
    #[arg(long)]
    pub reference: bool,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub image: PathBuf,
    /// Face box `x1,y1,x2,y2` (defaults to the whole image).
    #[arg(long = "box", value_name = "X1,Y1,X2,Y2")]
    pub bbox: Option<String>,
}

#[derive(Debug, Subcommand)]
pub enum PlotCommand {
    /// Truth-versus-error scatter (CSV and SVG) for every angle.
    Scatter(Source),
    /// Draw the head axes on an image.
    Overlay(OverlayArgs),
}

#[derive(Debug, Args)]
pub struct OverlayArgs {
    #[arg(long)]
    pub image: PathBuf,
    /// Face box `x1,y1,x2,y2` (defaults to the whole image).
    #[arg(long = "box", value_name = "X1,Y1,X2,Y2")]
    pub bbox: Option<String>,
    /// Pose `yaw,pitch,roll` in degrees.
    #[arg(long, required_unless_present = "checkpoint", allow_hyphen_values = true)]
    pub pose: Option<String>,
    /// Predict the pose with this model instead.
    #[arg(long, conflicts_with = "pose")]
    pub checkpoint: Option<PathBuf>,
}

fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if cause.downcast_ref::<Usage>().is_some() {
            return 1;
        }
        if let Some(e) = cause.downcast_ref::<headpose::Error>() {
            return if e.is_validation() || missing_input(e) { 1 } else { 2 };
        }
    }
    2
}

/// A referenced input path that does not exist is a usage problem, not a crash.
fn missing_input(e: &headpose::Error) -> bool {
    use std::io::ErrorKind::NotFound;
    match e {
        headpose::Error::Io { source, .. } => source.kind() == NotFound,
        headpose::Error::Image {
            source: image::ImageError::IoError(io),
            ..
        } => io.kind() == NotFound,
        _ => false,
    }
}

/// The error chain without causes already spelled out by their parent.
fn describe(err: &anyhow::Error) -> String {
    let mut msg = err.to_string();
    for cause in err.chain().skip(1) {
        let s = cause.to_string();
        if !msg.contains(&s) {
            msg = format!("{msg}: {s}");
        }
    }
    msg
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match commands::run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {}", describe(&e));
            ExitCode::from(exit_code(&e))
        }
    }
}
