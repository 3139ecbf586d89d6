//! Benchmark harness: success rate and time-to-open over test worlds, the
//! scripted oracle, the randomization ablation and the knob/arm/direction
//! sweep.

mod ablation;
mod oracle;
mod policy;
mod sweep;

use std::fmt::Write as _;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::DynamicsConstants;
use crate::env::{success_indicator, DoorEnv, EnvConfig};
use crate::error::{Error, Result};
use crate::seeding::derive_seed;
use crate::worldgen::WorldSpec;

pub use oracle::{OracleGains, ScriptedOracle};
pub use policy::{DeterministicPolicy, OBS_CLIP};
pub use ablation::{run_ablation, AblationCell, AblationConfig, AblationReport, POLICY_RANDOMIZED, POLICY_SINGLE, TEST_ENV1, TEST_RANDOMIZED};
pub use sweep::{sweep, CheckpointDir, NoPolicies, SweepCell, SweepPolicies, SweepReport, ARMS, DIRECTIONS};

/// Closed-loop controller driven one control tick at a time.
pub trait Controller: Send {
    fn act(&mut self, env: &DoorEnv, obs: &[f64]) -> Vec<f64>;
}

/// Hands out a fresh controller per episode.
pub trait ControllerSource: Sync {
    fn make(&self) -> Box<dyn Controller + '_>;
    fn describe(&self) -> String;
}

impl ControllerSource for ScriptedOracle {
    fn make(&self) -> Box<dyn Controller + '_> {
        Box::new(self.clone())
    }

    fn describe(&self) -> String {
        "scripted-oracle".into()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WorldResult {
    pub world_id: String,
    pub success: u8,
    pub t_open: Option<f64>,
    pub phi_max: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalMetadata {
    pub controller: String,
    pub arm: String,
    pub knob_mode: String,
    pub time_limit_s: f64,
    pub phi_threshold: f64,
    pub seed: u64,
    pub repeats: usize,
    pub dynamics: DynamicsConstants,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub results: Vec<WorldResult>,
    pub r_asr: f64,
    /// Absent when no attempt succeeded.
    pub r_at: Option<f64>,
    pub metadata: EvalMetadata,
}

/// Success rate over all attempts and mean opening time over the successful ones.
pub fn aggregate(results: &[WorldResult]) -> (f64, Option<f64>) {
    if results.is_empty() {
        return (0.0, None);
    }
    let mut successes = 0usize;
    let mut time = 0.0;
    for r in results {
        if r.success == 1 {
            successes += 1;
            time += r.t_open.unwrap_or(0.0);
        }
    }
    let asr = successes as f64 / results.len() as f64;
    let at = (successes > 0).then(|| time / successes as f64);
    (asr, at)
}

/// Runs one episode to completion and reports its outcome.
pub fn run_episode(controller: &mut dyn Controller, env: &mut DoorEnv, episode_seed: u64) -> Result<WorldResult> {
    let mut obs = env.reset(episode_seed);
    while !env.is_done() {
        let action = controller.act(env, &obs);
        let out = env.step(&action).map_err(|e| Error::Episode {
            world_id: env.world().world_id.clone(),
            source: Box::new(e),
        })?;
        obs = out.observation;
    }
    let s = env.state();
    let success = success_indicator(s.phi_max_reached, env.t_open(), &env.config().success);
    Ok(WorldResult {
        world_id: env.world().world_id.clone(),
        success,
        t_open: if success == 1 { env.t_open() } else { None },
        phi_max: s.phi_max_reached,
    })
}

/// Episode seed of attempt `repeat` on world `index`.
pub fn episode_seed(seed: u64, index: usize, repeat: usize) -> u64 {
    derive_seed(seed, &[index as u64, repeat as u64])
}

/// One deterministic attempt per world (or `repeats` attempts), run in
/// parallel on the current rayon pool; the report does not depend on the
/// pool size.
pub fn evaluate(
    source: &dyn ControllerSource,
    worlds: &[WorldSpec],
    env_cfg: &EnvConfig,
    seed: u64,
    repeats: usize,
) -> Result<EvalReport> {
    if worlds.is_empty() {
        return Err(Error::Contract("evaluation needs at least one world".into()));
    }
    let mut cfg = env_cfg.clone();
    cfg.terminate_on_success = true;
    let repeats = repeats.max(1);
    let jobs: Vec<(usize, usize)> = (0..worlds.len()).flat_map(|i| (0..repeats).map(move |r| (i, r))).collect();
    let results = jobs
        .par_iter()
        .map(|&(i, r)| {
            let mut env = DoorEnv::new(&worlds[i], cfg.clone())?;
            let mut controller = source.make();
            run_episode(controller.as_mut(), &mut env, episode_seed(seed, i, r))
        })
        .collect::<Result<Vec<_>>>()?;
    let (r_asr, r_at) = aggregate(&results);
    Ok(EvalReport {
        results,
        r_asr,
        r_at,
        metadata: EvalMetadata {
            controller: source.describe(),
            arm: cfg.arm.name().into(),
            knob_mode: cfg.mode.label(),
            time_limit_s: cfg.success.time_limit_s,
            phi_threshold: cfg.success.phi_threshold,
            seed,
            repeats,
            dynamics: cfg.constants.clone(),
        },
    })
}

impl EvalReport {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("world_id,success,t_open,phi_max\n");
        for r in &self.results {
            let t = r.t_open.map(|t| format!("{t:.2}")).unwrap_or_default();
            let _ = writeln!(out, "{},{},{},{:.6}", r.world_id, r.success, t, r.phi_max);
        }
        out
    }

    pub fn write(&self, dir: impl AsRef<Path>, stem: &str) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let json = dir.join(format!("{stem}.json"));
        std::fs::write(&json, self.to_json()).map_err(|e| Error::io(&json, e))?;
        let csv = dir.join(format!("{stem}.csv"));
        std::fs::write(&csv, self.to_csv()).map_err(|e| Error::io(&csv, e))
    }
}

/// Formats an optional opening time the way result tables print it.
pub fn format_at(at: Option<f64>) -> String {
    at.map(|t| format!("{t:.2}")).unwrap_or_else(|| "N/A".into())
}
