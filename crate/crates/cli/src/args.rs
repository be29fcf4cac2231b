use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

#[derive(Parser, Debug)]
#[command(name = "ramvid", version, about = "Random-mask video diffusion at toy scale")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Write a synthetic dataset (AR(1) Gaussian or moving shapes) to an RVID container.
    GenData(GenDataArgs),
    /// Train a noise-prediction model on an RVID dataset.
    Train(TrainArgs),
    /// Draw conditional samples from a trained model.
    Sample(SampleArgs),
    /// Score RVID containers.
    Eval(EvalArgs),
    /// Run a canned prediction or infilling task end to end.
    Preset(PresetArgs),
    /// Train one model per unconditional rate and tabulate conditional fidelity.
    SweepPu(SweepArgs),
}

/// Flags shared by every subcommand. Each one overrides the config key of
/// the same name.
#[derive(Args, Debug, Default)]
pub struct Common {
    #[arg(long)]
    pub seed: Option<u64>,
    /// key = value file; flags override its entries.
    #[arg(long, value_name = "FILE")]
    pub config: Option<PathBuf>,
    #[arg(long, value_name = "PATH")]
    pub out: Option<PathBuf>,
    #[arg(long, value_name = "PATH")]
    pub data: Option<PathBuf>,
    /// Conditioning frames, e.g. "0,5,10,15".
    #[arg(long)]
    pub mask: Option<String>,
    /// Probability of a fully unconditional training item.
    #[arg(long)]
    pub pu: Option<f64>,
    /// Maximum number of conditioning frames per training item.
    #[arg(long = "K")]
    pub k: Option<usize>,
    /// Diffusion step count.
    #[arg(long = "T")]
    pub t: Option<usize>,
    /// Optimizer steps for training commands, sampling steps otherwise.
    #[arg(long)]
    pub steps: Option<usize>,
    /// Override any config key.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
    /// Print the fully resolved configuration and exit.
    #[arg(long)]
    pub print_config: bool,
}

#[derive(Args, Debug)]
pub struct GenDataArgs {
    #[command(flatten)]
    pub common: Common,
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    #[command(flatten)]
    pub common: Common,
    /// Write a resumable trainer checkpoint here.
    #[arg(long, value_name = "FILE")]
    pub checkpoint: Option<PathBuf>,
    /// Continue from a trainer checkpoint.
    #[arg(long, value_name = "FILE")]
    pub resume: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct SampleArgs {
    #[command(flatten)]
    pub common: Common,
    /// RMWT model file.
    #[arg(long, value_name = "FILE")]
    pub model: Option<PathBuf>,
    /// Autoregressive windows to append.
    #[arg(long)]
    pub windows: Option<usize>,
    /// Frames carried over between autoregressive windows.
    #[arg(long)]
    pub overlap: Option<usize>,
    /// Use the resampling baseline with this many jumps per step.
    #[arg(long)]
    pub resample_jumps: Option<usize>,
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    #[command(flatten)]
    pub common: Common,
    /// frechet, is, oracle or harmonization.
    #[arg(long)]
    pub metric: Option<String>,
    /// pixels, proj or tdiff.
    #[arg(long)]
    pub features: Option<String>,
    /// Input containers. Fréchet takes a reference and a candidate.
    #[arg(value_name = "CONTAINER")]
    pub inputs: Vec<PathBuf>,
}

#[derive(Args, Debug)]
pub struct PresetArgs {
    #[command(flatten)]
    pub common: Common,
    /// prediction, infill-ends or infill-even.
    pub name: String,
}

#[derive(Args, Debug)]
pub struct SweepArgs {
    #[command(flatten)]
    pub common: Common,
    /// Comma-separated unconditional rates.
    #[arg(long)]
    pub values: Option<String>,
}
