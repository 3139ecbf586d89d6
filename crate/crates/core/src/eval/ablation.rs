//! Single-world versus randomized training, cross-evaluated on the single
//! world and on a randomized test set.

use std::fmt::Write as _;
use std::ops::ControlFlow;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::ppo::{train_ppo, PpoLogRow, PpoTrainConfig};
use crate::seeding::derive_seed;
use crate::worldgen::{sample_world, sample_worlds, KnobType, OpenDirection};

use super::{evaluate, format_at};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AblationConfig {
    /// Trainer settings shared by both policies.
    pub train: PpoTrainConfig,
    pub knob: KnobType,
    pub direction: OpenDirection,
    pub train_worlds: usize,
    pub test_worlds: usize,
    /// Attempts on the single training world.
    pub env1_attempts: usize,
    pub seed: u64,
}

impl Default for AblationConfig {
    fn default() -> Self {
        Self {
            train: PpoTrainConfig {
                updates: 75,
                probe_every: 0,
                ..Default::default()
            },
            knob: KnobType::Pull,
            direction: OpenDirection::Pull,
            train_worlds: 100,
            test_worlds: 100,
            env1_attempts: 100,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationCell {
    pub policy: String,
    pub test_condition: String,
    pub r_asr: f64,
    pub r_at: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationReport {
    pub env1_world_id: String,
    pub cells: Vec<AblationCell>,
}

pub const POLICY_SINGLE: &str = "single_env";
pub const POLICY_RANDOMIZED: &str = "randomized";
pub const TEST_ENV1: &str = "env1";
pub const TEST_RANDOMIZED: &str = "randomized";

impl AblationReport {
    pub fn cell(&self, policy: &str, test: &str) -> Option<&AblationCell> {
        self.cells.iter().find(|c| c.policy == policy && c.test_condition == test)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("policy,test_condition,r_asr,r_at\n");
        for c in &self.cells {
            let _ = writeln!(out, "{},{},{:.4},{}", c.policy, c.test_condition, c.r_asr, format_at(c.r_at));
        }
        out
    }
}

/// Trains one policy on a single world and one on a randomized set with the
/// same trainer settings, then evaluates both on both conditions.
pub fn run_ablation(cfg: &AblationConfig, mut on_update: impl FnMut(&str, &PpoLogRow)) -> Result<AblationReport> {
    let env1 = sample_world(derive_seed(cfg.seed, &[1]), 0, cfg.knob, cfg.direction);
    let train_set = sample_worlds(derive_seed(cfg.seed, &[2]), cfg.train_worlds, cfg.knob, cfg.direction);
    let test_set = sample_worlds(derive_seed(cfg.seed, &[3]), cfg.test_worlds, cfg.knob, cfg.direction);
    let single = std::slice::from_ref(&env1);
    let eval_seed = derive_seed(cfg.seed, &[4]);
    let mut cells = Vec::with_capacity(4);
    for (name, worlds) in [(POLICY_SINGLE, single), (POLICY_RANDOMIZED, &train_set[..])] {
        let mut tcfg = cfg.train.clone();
        tcfg.seed = derive_seed(cfg.seed, &[5]);
        let run = train_ppo(&tcfg, worlds, &[], None, |row| {
            on_update(name, row);
            ControlFlow::Continue(())
        })?;
        let policy = run.model.deterministic_policy(name);
        let on_env1 = evaluate(&policy, single, &cfg.train.env, eval_seed, cfg.env1_attempts)?;
        let on_test = evaluate(&policy, &test_set, &cfg.train.env, eval_seed, 1)?;
        for (test, report) in [(TEST_ENV1, on_env1), (TEST_RANDOMIZED, on_test)] {
            cells.push(AblationCell {
                policy: name.into(),
                test_condition: test.into(),
                r_asr: report.r_asr,
                r_at: report.r_at,
            });
        }
    }
    Ok(AblationReport {
        env1_world_id: env1.world_id,
        cells,
    })
}
