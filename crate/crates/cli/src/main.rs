//! `anticipate`: generate moving-digit data, train the trajectory head,
//! evaluate it and run the property suite.

mod commands;
mod resolve;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "anticipate", version, about = "Keyframe trajectory anticipation experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Synthesize a moving-digit dataset as PGM frames plus a JSON manifest.
    GenData(GenDataArgs),
    /// Train a trajectory head on the train split.
    Train(TrainArgs),
    /// Evaluate a trained head on a dataset split.
    Eval(EvalArgs),
    /// Train and evaluate over several keyframe intervals.
    Sweep(SweepArgs),
    /// Run the numerical property suite.
    Verify(VerifyArgs),
}

#[derive(Args)]
pub struct Common {
    /// key = value config file; command-line flags take precedence.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Args)]
pub struct GenDataArgs {
    #[command(flatten)]
    pub common: Common,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub n_train: Option<usize>,
    #[arg(long)]
    pub n_test: Option<usize>,
    /// pass, bounce or wrap.
    #[arg(long)]
    pub boundary: Option<String>,
    #[arg(long)]
    pub sprite_scale: Option<u32>,
    #[arg(long)]
    pub n_frames: Option<usize>,
    /// MNIST IDX image file; requires --mnist-labels.
    #[arg(long)]
    pub mnist_images: Option<PathBuf>,
    #[arg(long)]
    pub mnist_labels: Option<PathBuf>,
}

#[derive(Args, Clone)]
pub struct TrainingFlags {
    /// bag, sum, bag-delta, traj, traj-sa-linear or traj-sa-parabola.
    #[arg(long)]
    pub loss: Option<String>,
    /// annotated, smooth, random or none.
    #[arg(long)]
    pub supervision: Option<String>,
    #[arg(long)]
    pub iterations: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    /// Oracle keyframe jitter (pixels).
    #[arg(long)]
    pub jitter: Option<f64>,
    #[arg(long)]
    pub hidden_dim: Option<usize>,
    #[arg(long)]
    pub embed_dim: Option<usize>,
    /// off, refiner or head.
    #[arg(long)]
    pub keyframe_correction: Option<String>,
    #[arg(long)]
    pub use_box_input: Option<bool>,
    #[arg(long)]
    pub use_feature_input: Option<bool>,
}

#[derive(Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub common: Common,
    /// Dataset directory written by gen-data.
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Trajectory length and keyframe interval.
    #[arg(long = "T")]
    pub horizon: Option<usize>,
    #[command(flatten)]
    pub training: TrainingFlags,
}

#[derive(Args)]
pub struct EvalArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Model JSON written by train.
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// keyframes or all-frames.
    #[arg(long)]
    pub mode: Option<String>,
    /// map or traj-iou.
    #[arg(long)]
    pub metric: Option<String>,
    #[arg(long = "T")]
    pub horizon: Option<usize>,
    #[arg(long)]
    pub jitter: Option<f64>,
    /// train or test.
    #[arg(long)]
    pub split: Option<String>,
}

#[derive(Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Comma-separated keyframe intervals.
    #[arg(long = "T-list")]
    pub horizons: Option<String>,
    #[arg(long)]
    pub timing_repeats: Option<usize>,
    #[command(flatten)]
    pub training: TrainingFlags,
}

#[derive(Args)]
pub struct VerifyArgs {
    #[command(flatten)]
    pub common: Common,
    /// Instances for the equivalence and IoU checks.
    #[arg(long)]
    pub trials: Option<usize>,
    /// Instances for each gradient and parabola check.
    #[arg(long)]
    pub gradient_trials: Option<usize>,
    /// Directory for verify.json and the resolved config.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Deliberately break a check (negative control): sign-flip.
    #[arg(long, hide = true)]
    pub inject_fault: Option<String>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::GenData(a) => commands::gen_data(&a),
        Command::Train(a) => commands::train(&a),
        Command::Eval(a) => commands::eval(&a),
        Command::Sweep(a) => commands::sweep(&a),
        Command::Verify(a) => commands::verify(&a),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            commands::exit_code(&e)
        }
    }
}
