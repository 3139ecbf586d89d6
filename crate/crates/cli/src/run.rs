use std::fs;
use std::io::{BufWriter, Write as _};
use std::ops::ControlFlow;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};

use doorsim_core::dynamics::{ArmType, DynamicsConstants};
use doorsim_core::env::{DoorEnv, EnvConfig, KnobEstimateMode, EPISODE_STEPS};
use doorsim_core::eval::{
    evaluate, run_ablation, sweep, AblationConfig, CheckpointDir, ControllerSource, DeterministicPolicy, NoPolicies,
    ScriptedOracle, SweepPolicies,
};
use doorsim_core::neural::Checkpoint;
use doorsim_core::ppo::{train_ppo, Curriculum, PpoTrainConfig, PPO_LOG_HEADER};
use doorsim_core::sac::{train_sac, SacTrainConfig, SAC_LOG_HEADER};
use doorsim_core::worldgen::{generate_world_set, load_worlds, KnobType, OpenDirection, WorldSpec};

use crate::args::{AlgoArg, ConfigArgs, EnvArgs, EvalArgs, GenArgs, ModeArg, ReplayArgs, ShowArg, TrainArgs};

pub const RESOLVED_CONFIG: &str = "resolved_config.json";

/// Invalid or inconsistent command-line input.
#[derive(Debug)]
pub struct UsageError(pub String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

/// Fully resolved inputs of one command; written as `resolved_config.json`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "command", rename_all = "snake_case")]
pub enum RunConfig {
    Gen(GenRun),
    Train(TrainRun),
    Eval(EvalRun),
    Replay(ReplayRun),
}

impl RunConfig {
    fn name(&self) -> &'static str {
        match self {
            RunConfig::Gen(_) => "gen",
            RunConfig::Train(_) => "train",
            RunConfig::Eval(_) => "eval",
            RunConfig::Replay(_) => "replay",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GenRun {
    pub n: usize,
    pub knob: KnobType,
    pub direction: OpenDirection,
    pub seed: u64,
    pub out: PathBuf,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainRun {
    pub algo: AlgoArg,
    pub worlds: PathBuf,
    pub probe_worlds: Option<PathBuf>,
    pub out: PathBuf,
    pub ppo: Option<PpoTrainConfig>,
    pub sac: Option<SacTrainConfig>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ControllerSpec {
    Oracle,
    Checkpoint { path: PathBuf },
    None,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EvalTask {
    Single,
    Sweep { worlds_per_cell: usize },
    Ablation { config: AblationConfig },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalRun {
    pub controller: ControllerSpec,
    pub task: EvalTask,
    pub worlds: Option<PathBuf>,
    pub env: EnvConfig,
    pub seed: u64,
    pub repeats: usize,
    pub out: PathBuf,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReplayRun {
    pub controller: ControllerSpec,
    pub world: PathBuf,
    pub index: usize,
    pub env: EnvConfig,
    pub episode_seed: u64,
    pub out: PathBuf,
}

fn load_config(path: &Path, command: &str) -> Result<RunConfig> {
    let text = fs::read_to_string(path).map_err(|e| doorsim_core::Error::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    let cfg: RunConfig =
        serde_json::from_str(&text).with_context(|| format!("parsing run configuration {}", path.display()))?;
    if cfg.name() != command {
        return Err(usage(format!(
            "{} holds a `{}` configuration, not `{command}`",
            path.display(),
            cfg.name()
        )));
    }
    Ok(cfg)
}

fn write_resolved(out: &Path, cfg: &RunConfig) -> Result<()> {
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let path = out.join(RESOLVED_CONFIG);
    let mut text = serde_json::to_string_pretty(cfg)?;
    text.push('\n');
    fs::write(&path, text).with_context(|| format!("writing {}", path.display()))
}

fn required<T>(value: Option<T>, flag: &str) -> Result<T> {
    value.ok_or_else(|| usage(format!("missing required flag {flag}")))
}

/// Applies the shared environment flags on top of `env`.
fn apply_env(env: &mut EnvConfig, args: &EnvArgs) -> Result<()> {
    if let Some(arm) = args.arm {
        env.arm = arm.into();
    }
    if let Some(s) = args.sigma {
        if !(s >= 0.0) {
            return Err(usage(format!("--sigma must be >= 0, got {s}")));
        }
    }
    let current_sigma = match env.mode {
        KnobEstimateMode::GroundTruthPlusNoise { sigma_m, .. } => Some(sigma_m),
        _ => None,
    };
    let sigma = args.sigma.or(current_sigma).unwrap_or(KnobEstimateMode::DEFAULT_SIGMA_M);
    match args.mode {
        Some(ModeArg::Gt) => env.mode = KnobEstimateMode::GroundTruth,
        Some(ModeArg::GtNoise) => env.mode = KnobEstimateMode::noisy(sigma),
        None if current_sigma.is_some() => env.mode = KnobEstimateMode::noisy(sigma),
        None => {}
    }
    if let Some(limit) = args.time_limit {
        if !(limit > 0.0) {
            return Err(usage(format!("--time-limit must be > 0, got {limit}")));
        }
        env.success.time_limit_s = limit;
        let ticks = (limit / env.constants.control_dt).ceil() as usize;
        env.max_steps = ticks.max(EPISODE_STEPS);
    }
    Ok(())
}

fn load_set(path: &Path) -> Result<Vec<WorldSpec>> {
    let worlds = load_worlds(path)?;
    if worlds.is_empty() {
        return Err(usage(format!("{} contains no worlds", path.display())));
    }
    Ok(worlds)
}

pub fn cmd_gen(args: GenArgs) -> Result<()> {
    let base = match &args.config {
        Some(p) => match load_config(p, "gen")? {
            RunConfig::Gen(g) => Some(g),
            _ => unreachable!(),
        },
        None => None,
    };
    let run = GenRun {
        n: args.n.or(base.as_ref().map(|b| b.n)).unwrap_or(100),
        knob: args.knob.map(Into::into).or(base.as_ref().map(|b| b.knob)).unwrap_or(KnobType::Pull),
        direction: args
            .direction
            .map(Into::into)
            .or(base.as_ref().map(|b| b.direction))
            .unwrap_or(OpenDirection::Pull),
        seed: args.seed.or(base.as_ref().map(|b| b.seed)).unwrap_or(0),
        out: required(args.out.or(base.map(|b| b.out)), "--out")?,
    };
    if run.n == 0 {
        return Err(usage("--n must be at least 1"));
    }
    let set = generate_world_set(run.seed, run.n, run.knob, run.direction, &run.out)?;
    write_resolved(&run.out, &RunConfig::Gen(run.clone()))?;
    println!("wrote {} worlds and {}", set.files.len(), set.manifest_path.display());
    Ok(())
}

pub fn cmd_train(args: TrainArgs) -> Result<()> {
    let base = match &args.config {
        Some(p) => match load_config(p, "train")? {
            RunConfig::Train(t) => Some(t),
            _ => unreachable!(),
        },
        None => None,
    };
    let algo = args.algo.or(base.as_ref().map(|b| b.algo)).unwrap_or(AlgoArg::Ppo);
    let worlds_path = required(args.worlds.clone().or(base.as_ref().map(|b| b.worlds.clone())), "--worlds")?;
    let probe_path = args.probe_worlds.clone().or(base.as_ref().and_then(|b| b.probe_worlds.clone()));
    let out = required(args.out.clone().or(base.as_ref().map(|b| b.out.clone())), "--out")?;
    let train = load_set(&worlds_path)?;
    let probe = match &probe_path {
        Some(p) => load_set(p)?,
        None => Vec::new(),
    };
    let mut run = TrainRun {
        algo,
        worlds: worlds_path,
        probe_worlds: probe_path,
        out: out.clone(),
        ppo: None,
        sac: None,
    };
    match algo {
        AlgoArg::Ppo => {
            if args.epochs.is_some() {
                return Err(usage("--epochs applies to --algo sac; use --updates for ppo"));
            }
            let mut cfg = base.and_then(|b| b.ppo).unwrap_or_default();
            apply_env(&mut cfg.env, &args.env)?;
            if args.env.time_limit.is_some() {
                cfg.ppo.episode_steps = cfg.env.max_steps;
            }
            if let Some(k) = args.curriculum {
                let sigma = args.sigma_or_default(&cfg.env);
                cfg.curriculum = Some(Curriculum {
                    switch_after: k,
                    noisy: KnobEstimateMode::noisy(sigma),
                });
                cfg.env.mode = KnobEstimateMode::GroundTruth;
            }
            if let Some(u) = args.updates {
                cfg.updates = u;
            }
            if let Some(s) = args.seed {
                cfg.seed = s;
            }
            if cfg.updates == 0 {
                return Err(usage("--updates must be at least 1"));
            }
            run.ppo = Some(cfg.clone());
            write_resolved(&out, &RunConfig::Train(run))?;
            println!("{PPO_LOG_HEADER}");
            let result = train_ppo(&cfg, &train, &probe, Some(&out), |row| {
                println!("{}", row.csv_line());
                ControlFlow::Continue(())
            })?;
            eprintln!("wrote {} checkpoints to {}", result.checkpoints.len(), out.display());
        }
        AlgoArg::Sac => {
            if args.updates.is_some() || args.curriculum.is_some() {
                return Err(usage("--updates and --curriculum apply to --algo ppo; use --epochs for sac"));
            }
            let mut cfg = base.and_then(|b| b.sac).unwrap_or_default();
            apply_env(&mut cfg.env, &args.env)?;
            if args.env.time_limit.is_some() {
                cfg.sac.episode_steps = cfg.env.max_steps;
            }
            if let Some(e) = args.epochs {
                cfg.epochs = e;
            }
            if let Some(s) = args.seed {
                cfg.seed = s;
            }
            if cfg.epochs == 0 {
                return Err(usage("--epochs must be at least 1"));
            }
            run.sac = Some(cfg.clone());
            write_resolved(&out, &RunConfig::Train(run))?;
            println!("{SAC_LOG_HEADER}");
            let result = train_sac(&cfg, &train, &probe, Some(&out), |row| {
                println!("{}", row.csv_line());
                ControlFlow::Continue(())
            })?;
            eprintln!("wrote {} checkpoints to {}", result.checkpoints.len(), out.display());
        }
    }
    Ok(())
}

impl TrainArgs {
    fn sigma_or_default(&self, env: &EnvConfig) -> f64 {
        match (self.env.sigma, &env.mode) {
            (Some(s), _) => s,
            (None, KnobEstimateMode::GroundTruthPlusNoise { sigma_m, .. }) => *sigma_m,
            _ => KnobEstimateMode::DEFAULT_SIGMA_M,
        }
    }
}

fn checkpoint_arm(path: &Path) -> Result<Option<ArmType>> {
    let ck = Checkpoint::read(path)?;
    match ck.meta_str("arm") {
        Some(a) => Ok(Some(a.parse().map_err(|e: String| doorsim_core::Error::Checkpoint(e))?)),
        None => Ok(None),
    }
}

/// Builds the controller a run configuration names.
fn controller(spec: &ControllerSpec, env: &EnvConfig) -> Result<Box<dyn ControllerSource>> {
    match spec {
        ControllerSpec::Oracle => Ok(Box::new(ScriptedOracle::default())),
        ControllerSpec::Checkpoint { path } => {
            let ck = Checkpoint::read(path)?;
            Ok(Box::new(DeterministicPolicy::from_checkpoint(&ck, env)?))
        }
        ControllerSpec::None => Err(usage("pass --oracle or --checkpoint")),
    }
}

fn controller_spec(oracle: bool, checkpoint: Option<PathBuf>, base: Option<ControllerSpec>) -> ControllerSpec {
    match (oracle, checkpoint) {
        (true, _) => ControllerSpec::Oracle,
        (false, Some(path)) => ControllerSpec::Checkpoint { path },
        (false, None) => base.unwrap_or(ControllerSpec::None),
    }
}

pub fn cmd_eval(args: EvalArgs) -> Result<()> {
    let base = match &args.config {
        Some(p) => match load_config(p, "eval")? {
            RunConfig::Eval(e) => Some(e),
            _ => unreachable!(),
        },
        None => None,
    };
    let spec = controller_spec(args.oracle, args.checkpoint.clone(), base.as_ref().map(|b| b.controller.clone()));
    let mut env = base.as_ref().map(|b| b.env.clone()).unwrap_or_default();
    if base.is_none() && args.env.arm.is_none() && !args.sweep {
        if let ControllerSpec::Checkpoint { path } = &spec {
            if let Some(arm) = checkpoint_arm(path)? {
                env.arm = arm;
            }
        }
    }
    apply_env(&mut env, &args.env)?;
    let seed = args.seed.or(base.as_ref().map(|b| b.seed)).unwrap_or(0);
    let repeats = args.repeats.or(base.as_ref().map(|b| b.repeats)).unwrap_or(1);
    if repeats == 0 {
        return Err(usage("--repeats must be at least 1"));
    }
    let base_task = base.as_ref().map(|b| b.task.clone());
    let task = if args.sweep {
        EvalTask::Sweep {
            worlds_per_cell: args.worlds_per_cell.unwrap_or(100),
        }
    } else if args.ablation {
        let mut config = match base_task {
            Some(EvalTask::Ablation { config }) => config,
            _ => AblationConfig::default(),
        };
        config.train.env = env.clone();
        if args.env.time_limit.is_some() {
            config.train.ppo.episode_steps = env.max_steps;
        }
        config.seed = seed;
        if let Some(u) = args.updates {
            config.train.updates = u;
        }
        EvalTask::Ablation { config }
    } else {
        match base_task {
            Some(EvalTask::Sweep { worlds_per_cell }) => EvalTask::Sweep {
                worlds_per_cell: args.worlds_per_cell.unwrap_or(worlds_per_cell),
            },
            Some(t @ EvalTask::Ablation { .. }) => t,
            _ => EvalTask::Single,
        }
    };
    let run = EvalRun {
        controller: spec,
        task,
        worlds: args.worlds.clone().or(base.as_ref().and_then(|b| b.worlds.clone())),
        env,
        seed,
        repeats,
        out: required(args.out.clone().or(base.map(|b| b.out)), "--out")?,
    };
    execute_eval(&run)
}

fn execute_eval(run: &EvalRun) -> Result<()> {
    match &run.task {
        EvalTask::Single => {
            let path = required(run.worlds.as_ref(), "--worlds")?;
            let worlds = load_set(path)?;
            let source = controller(&run.controller, &run.env)?;
            write_resolved(&run.out, &RunConfig::Eval(run.clone()))?;
            let report = evaluate(source.as_ref(), &worlds, &run.env, run.seed, run.repeats)?;
            report.write(&run.out, "eval_report")?;
            println!(
                "r_ASR={:.4} r_AT={} attempts={}",
                report.r_asr,
                doorsim_core::eval::format_at(report.r_at),
                report.results.len()
            );
        }
        EvalTask::Sweep { worlds_per_cell } => {
            let oracle = ScriptedOracle::default();
            let dir;
            let policies: &dyn SweepPolicies = match &run.controller {
                ControllerSpec::Oracle => &oracle,
                ControllerSpec::Checkpoint { path } => {
                    dir = CheckpointDir(path.clone());
                    &dir
                }
                ControllerSpec::None => &NoPolicies,
            };
            write_resolved(&run.out, &RunConfig::Eval(run.clone()))?;
            let table = sweep(policies, &run.env, *worlds_per_cell, run.seed)?;
            table.write_csv(run.out.join("sweep.csv"))?;
            print!("{}", table.to_csv());
        }
        EvalTask::Ablation { config } => {
            write_resolved(&run.out, &RunConfig::Eval(run.clone()))?;
            let report = run_ablation(config, |policy, row| {
                eprintln!("{policy} {}", row.csv_line());
            })?;
            let csv = report.to_csv();
            let path = run.out.join("ablation.csv");
            fs::write(&path, &csv).with_context(|| format!("writing {}", path.display()))?;
            let path = run.out.join("ablation.json");
            fs::write(&path, serde_json::to_string_pretty(&report)? + "\n")
                .with_context(|| format!("writing {}", path.display()))?;
            print!("{csv}");
        }
    }
    Ok(())
}

pub fn cmd_replay(args: ReplayArgs) -> Result<()> {
    let base = match &args.config {
        Some(p) => match load_config(p, "replay")? {
            RunConfig::Replay(r) => Some(r),
            _ => unreachable!(),
        },
        None => None,
    };
    let spec = controller_spec(args.oracle, args.checkpoint.clone(), base.as_ref().map(|b| b.controller.clone()));
    let mut env = base.as_ref().map(|b| b.env.clone()).unwrap_or_default();
    if base.is_none() && args.env.arm.is_none() {
        if let ControllerSpec::Checkpoint { path } = &spec {
            if let Some(arm) = checkpoint_arm(path)? {
                env.arm = arm;
            }
        }
    }
    apply_env(&mut env, &args.env)?;
    let run = ReplayRun {
        controller: spec,
        world: required(args.world.clone().or(base.as_ref().map(|b| b.world.clone())), "--world")?,
        index: args.index.or(base.as_ref().map(|b| b.index)).unwrap_or(0),
        env,
        episode_seed: args.episode_seed.or(base.as_ref().map(|b| b.episode_seed)).unwrap_or(0),
        out: required(args.out.clone().or(base.map(|b| b.out)), "--out")?,
    };
    let worlds = load_set(&run.world)?;
    let world = worlds
        .get(run.index)
        .ok_or_else(|| usage(format!("--index {} out of range for {} worlds", run.index, worlds.len())))?;
    let source = controller(&run.controller, &run.env)?;
    write_resolved(&run.out, &RunConfig::Replay(run.clone()))?;
    let mut env = DoorEnv::new(world, run.env.clone())?;
    let mut ctl = source.make();
    let path = run.out.join("trace.jsonl");
    let file = fs::File::create(&path).with_context(|| format!("creating {}", path.display()))?;
    let mut w = BufWriter::new(file);
    let mut obs = env.reset(run.episode_seed);
    while !env.is_done() {
        let action = ctl.act(&env, &obs);
        let step = env.step(&action)?;
        serde_json::to_writer(&mut w, &env.trace_record(&action, step.reward))?;
        w.write_all(b"\n")?;
        obs = step.observation;
    }
    w.flush()?;
    println!(
        "world={} steps={} phi_max={:.4} t_open={}",
        world.world_id,
        env.steps(),
        env.state().phi_max_reached,
        doorsim_core::eval::format_at(env.t_open())
    );
    Ok(())
}

pub fn cmd_config(args: ConfigArgs) -> Result<()> {
    let text = match (args.show, &args.file) {
        (Some(ShowArg::Ppo), _) => serde_json::to_string_pretty(&PpoTrainConfig::default())?,
        (Some(ShowArg::Sac), _) => serde_json::to_string_pretty(&SacTrainConfig::default())?,
        (Some(ShowArg::Env), _) => serde_json::to_string_pretty(&EnvConfig::default())?,
        (Some(ShowArg::Dynamics), _) => serde_json::to_string_pretty(&DynamicsConstants::default())?,
        (Some(ShowArg::Ablation), _) => serde_json::to_string_pretty(&AblationConfig::default())?,
        (None, Some(path)) => {
            let text = fs::read_to_string(path).map_err(|e| doorsim_core::Error::Io {
                path: path.clone(),
                source: e,
            })?;
            let cfg: RunConfig =
                serde_json::from_str(&text).with_context(|| format!("parsing run configuration {}", path.display()))?;
            serde_json::to_string_pretty(&cfg)?
        }
        (None, None) => return Err(usage("pass --show KIND or --file FILE")),
    };
    println!("{text}");
    Ok(())
}
