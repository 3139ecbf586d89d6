//! Knob x arm x direction result grid.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::dynamics::ArmType;
use crate::env::EnvConfig;
use crate::error::Result;
use crate::neural::Checkpoint;
use crate::seeding::derive_seed;
use crate::worldgen::{sample_worlds, KnobType, OpenDirection};

use super::{evaluate, format_at, ControllerSource, DeterministicPolicy, ScriptedOracle};

pub const ARMS: [ArmType; 2] = [ArmType::FloatingHook, ArmType::FloatingGripper];
pub const DIRECTIONS: [OpenDirection; 2] = [OpenDirection::Push, OpenDirection::Pull];

/// Supplies a controller per cell; `None` marks the cell untrained.
pub trait SweepPolicies: Sync {
    fn controller(&self, knob: KnobType, arm: ArmType, dir: OpenDirection, env: &EnvConfig) -> Result<Option<Box<dyn ControllerSource + '_>>>;
}

impl SweepPolicies for ScriptedOracle {
    fn controller(&self, _: KnobType, _: ArmType, _: OpenDirection, _: &EnvConfig) -> Result<Option<Box<dyn ControllerSource + '_>>> {
        Ok(Some(Box::new(self.clone())))
    }
}

/// No policies at all.
pub struct NoPolicies;

impl SweepPolicies for NoPolicies {
    fn controller(&self, _: KnobType, _: ArmType, _: OpenDirection, _: &EnvConfig) -> Result<Option<Box<dyn ControllerSource + '_>>> {
        Ok(None)
    }
}

/// Checkpoints named `{arm}-{direction}-{knob}.json` in one directory.
pub struct CheckpointDir(pub PathBuf);

impl CheckpointDir {
    pub fn cell_path(&self, knob: KnobType, arm: ArmType, dir: OpenDirection) -> PathBuf {
        self.0.join(format!("{}-{}-{}.json", arm.name(), dir.name(), knob.name()))
    }
}

impl SweepPolicies for CheckpointDir {
    fn controller(&self, knob: KnobType, arm: ArmType, dir: OpenDirection, env: &EnvConfig) -> Result<Option<Box<dyn ControllerSource + '_>>> {
        let path = self.cell_path(knob, arm, dir);
        if !path.exists() {
            return Ok(None);
        }
        let ck = Checkpoint::read(&path)?;
        Ok(Some(Box::new(DeterministicPolicy::from_checkpoint(&ck, env)?)))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepCell {
    pub arm: ArmType,
    pub direction: OpenDirection,
    pub knob: KnobType,
    /// `None` when the cell had no policy.
    pub r_asr: Option<f64>,
    pub r_at: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub cells: Vec<SweepCell>,
}

impl SweepReport {
    pub fn cell(&self, arm: ArmType, dir: OpenDirection, knob: KnobType) -> Option<&SweepCell> {
        self.cells.iter().find(|c| c.arm == arm && c.direction == dir && c.knob == knob)
    }

    /// One row per arm and direction, an ASR and AT column pair per knob.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("arm,direction");
        for k in KnobType::ALL {
            let _ = write!(out, ",{0}_asr,{0}_at", k.name());
        }
        out.push('\n');
        for arm in ARMS {
            for dir in DIRECTIONS {
                let _ = write!(out, "{},{}", arm.name(), dir.name());
                for k in KnobType::ALL {
                    match self.cell(arm, dir, k).and_then(|c| c.r_asr.map(|a| (a, c.r_at))) {
                        Some((asr, at)) => {
                            let _ = write!(out, ",{asr:.2},{}", format_at(at));
                        }
                        None => out.push_str(",untrained,untrained"),
                    }
                }
                out.push('\n');
            }
        }
        out
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_csv()).map_err(|e| crate::error::Error::io(path, e))
    }
}

/// Evaluates every cell on `worlds_per_cell` worlds. The worlds of a cell
/// depend on the knob and direction only, so both arms face the same doors.
pub fn sweep(policies: &dyn SweepPolicies, base: &EnvConfig, worlds_per_cell: usize, seed: u64) -> Result<SweepReport> {
    let mut cells = Vec::new();
    for arm in ARMS {
        for dir in DIRECTIONS {
            for knob in KnobType::ALL {
                let env = EnvConfig { arm, ..base.clone() };
                let (r_asr, r_at) = match policies.controller(knob, arm, dir, &env)? {
                    Some(src) => {
                        let world_seed = derive_seed(seed, &[knob as u64, dir as u64]);
                        let worlds = sample_worlds(world_seed, worlds_per_cell, knob, dir);
                        let report = evaluate(src.as_ref(), &worlds, &env, seed, 1)?;
                        (Some(report.r_asr), report.r_at)
                    }
                    None => (None, None),
                };
                cells.push(SweepCell {
                    arm,
                    direction: dir,
                    knob,
                    r_asr,
                    r_at,
                });
            }
        }
    }
    Ok(SweepReport { cells })
}
