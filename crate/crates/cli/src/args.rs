use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

use doorsim_core::dynamics::ArmType;
use doorsim_core::worldgen::{KnobType, OpenDirection};

/// Door-opening benchmark: world generation, PPO/SAC training, evaluation,
/// ablation and trajectory replay.
///
/// Every command writes `resolved_config.json` next to its outputs; passing
/// that file back through `--config` reproduces the run.
#[derive(Debug, Parser)]
#[command(name = "doorsim", version, propagate_version = true)]
pub struct Cli {
    /// Worker threads for rollouts and evaluation [default: all cores].
    /// Results do not depend on this value.
    #[arg(long, global = true, env = "DOORSIM_THREADS", value_name = "N")]
    pub threads: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Sample a set of randomized worlds and write them with a manifest.
    Gen(GenArgs),
    /// Train a PPO or SAC policy on a world set.
    Train(TrainArgs),
    /// Evaluate the scripted oracle or a checkpoint; also runs the sweep and
    /// the randomization ablation.
    Eval(EvalArgs),
    /// Re-run one policy on one world and write a JSONL trajectory trace.
    Replay(ReplayArgs),
    /// Print default configurations or validate a run configuration file.
    Config(ConfigArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum KnobArg {
    Pull,
    Lever,
    Round,
}

impl From<KnobArg> for KnobType {
    fn from(k: KnobArg) -> Self {
        match k {
            KnobArg::Pull => KnobType::Pull,
            KnobArg::Lever => KnobType::Lever,
            KnobArg::Round => KnobType::Round,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum DirectionArg {
    Pull,
    Push,
}

impl From<DirectionArg> for OpenDirection {
    fn from(d: DirectionArg) -> Self {
        match d {
            DirectionArg::Pull => OpenDirection::Pull,
            DirectionArg::Push => OpenDirection::Push,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum ArmArg {
    Hook,
    Gripper,
}

impl From<ArmArg> for ArmType {
    fn from(a: ArmArg) -> Self {
        match a {
            ArmArg::Hook => ArmType::FloatingHook,
            ArmArg::Gripper => ArmType::FloatingGripper,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    /// Exact knob position.
    Gt,
    /// Knob position plus a Gaussian offset drawn once per episode.
    #[value(name = "gt-noise")]
    GtNoise,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AlgoArg {
    Ppo,
    Sac,
}

/// Environment flags shared by training, evaluation and replay.
#[derive(Clone, Debug, Default, Args)]
pub struct EnvArgs {
    /// End effector [default: hook; eval/replay with a checkpoint: the
    /// checkpoint's arm].
    #[arg(long, value_enum)]
    pub arm: Option<ArmArg>,
    /// Knob-position source in the observation [default: gt].
    #[arg(long, value_enum)]
    pub mode: Option<ModeArg>,
    /// Std of the knob-position offset in gt-noise mode, metres [default: 0.02].
    #[arg(long, value_name = "M")]
    pub sigma: Option<f64>,
    /// Success time limit, seconds [default: 10.2]. Episodes are lengthened
    /// to cover it.
    #[arg(long, value_name = "S")]
    pub time_limit: Option<f64>,
}

#[derive(Debug, Args)]
pub struct GenArgs {
    /// Number of worlds [default: 100].
    #[arg(long)]
    pub n: Option<usize>,
    /// Knob type [default: pull].
    #[arg(long, value_enum)]
    pub knob: Option<KnobArg>,
    /// Opening direction [default: pull].
    #[arg(long, value_enum)]
    pub direction: Option<DirectionArg>,
    /// Master seed [default: 0].
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory for world files and manifest.json (required unless
    /// given by --config).
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Run configuration (JSON) to start from; flags override it.
    #[arg(long, value_name = "FILE")]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Learning algorithm [default: ppo].
    #[arg(long, value_enum)]
    pub algo: Option<AlgoArg>,
    /// Training world set: directory, manifest or single world file.
    #[arg(long, value_name = "PATH")]
    pub worlds: Option<PathBuf>,
    /// Probe world set evaluated after each update/epoch [default: none].
    #[arg(long, value_name = "PATH")]
    pub probe_worlds: Option<PathBuf>,
    #[command(flatten)]
    pub env: EnvArgs,
    /// PPO: train on ground truth for K updates, then switch to gt-noise
    /// with --sigma [default: off].
    #[arg(long, value_name = "K")]
    pub curriculum: Option<usize>,
    /// PPO updates, 32768 transitions each at default settings [default: 150].
    #[arg(long)]
    pub updates: Option<usize>,
    /// SAC epochs, 10 episodes each at default settings [default: 100].
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Training seed [default: 0].
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory for checkpoints and train_log.csv.
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Run configuration (JSON) to start from; flags override it.
    #[arg(long, value_name = "FILE")]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Evaluate the scripted oracle controller.
    #[arg(long, conflicts_with = "checkpoint")]
    pub oracle: bool,
    /// Checkpoint file to evaluate; with --sweep, a directory of
    /// `{arm}-{direction}-{knob}.json` checkpoints.
    #[arg(long, value_name = "PATH")]
    pub checkpoint: Option<PathBuf>,
    /// Test world set: directory, manifest or single world file.
    #[arg(long, value_name = "PATH")]
    pub worlds: Option<PathBuf>,
    #[command(flatten)]
    pub env: EnvArgs,
    /// Attempts per world [default: 1].
    #[arg(long)]
    pub repeats: Option<usize>,
    /// Evaluation seed [default: 0].
    #[arg(long)]
    pub seed: Option<u64>,
    /// Run the knob x arm x direction sweep instead of a single evaluation.
    #[arg(long, conflicts_with = "ablation")]
    pub sweep: bool,
    /// Worlds sampled per sweep cell [default: 100].
    #[arg(long, value_name = "N")]
    pub worlds_per_cell: Option<usize>,
    /// Run the single-world versus randomized training ablation.
    #[arg(long)]
    pub ablation: bool,
    /// PPO updates per ablation policy [default: 75].
    #[arg(long)]
    pub updates: Option<usize>,
    /// Output directory for reports.
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Run configuration (JSON) to start from; flags override it.
    #[arg(long, value_name = "FILE")]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ReplayArgs {
    /// Replay the scripted oracle controller.
    #[arg(long, conflicts_with = "checkpoint")]
    pub oracle: bool,
    /// Checkpoint file to replay.
    #[arg(long, value_name = "FILE")]
    pub checkpoint: Option<PathBuf>,
    /// World file, or a world set together with --index.
    #[arg(long, value_name = "PATH")]
    pub world: Option<PathBuf>,
    /// Index into the world set [default: 0].
    #[arg(long)]
    pub index: Option<usize>,
    #[command(flatten)]
    pub env: EnvArgs,
    /// Episode seed [default: 0].
    #[arg(long)]
    pub episode_seed: Option<u64>,
    /// Output directory for trace.jsonl.
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Run configuration (JSON) to start from; flags override it.
    #[arg(long, value_name = "FILE")]
    pub config: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum ShowArg {
    Ppo,
    Sac,
    Env,
    Dynamics,
    Ablation,
}

#[derive(Debug, Args)]
pub struct ConfigArgs {
    /// Print the default configuration block of this kind.
    #[arg(long, value_enum, conflicts_with = "file")]
    pub show: Option<ShowArg>,
    /// Parse a run configuration file and print it fully resolved.
    #[arg(long, value_name = "FILE")]
    pub file: Option<PathBuf>,
}
