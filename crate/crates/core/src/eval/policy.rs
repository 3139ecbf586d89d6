//! Deterministic (mean-action) controller backed by a trained network.

use crate::env::{DoorEnv, EnvConfig};
use crate::error::{Error, Result};
use crate::neural::{Checkpoint, Mlp, RunningMeanStd};

use super::{Controller, ControllerSource};

/// Clip applied to standardized observations.
pub const OBS_CLIP: f64 = 10.0;

#[derive(Clone, Debug, PartialEq)]
pub struct DeterministicPolicy {
    pub net: Mlp,
    pub obs_rms: Option<RunningMeanStd>,
    /// Squashed-Gaussian head: the net emits mean and log-std and the action
    /// is `tanh(mean)`.
    pub squashed: bool,
    pub action_dim: usize,
    pub label: String,
}

impl DeterministicPolicy {
    pub fn action(&self, obs: &[f64]) -> Vec<f64> {
        let mut x = obs.to_vec();
        if let Some(rms) = &self.obs_rms {
            rms.normalize(&mut x, OBS_CLIP);
        }
        let out = self.net.forward(&x).expect("observation width checked at load");
        let mean = &out[..self.action_dim];
        if self.squashed {
            mean.iter().map(|m| m.tanh()).collect()
        } else {
            mean.to_vec()
        }
    }

    /// Rebuilds the policy stored in a checkpoint and checks that it fits the
    /// environment it is about to drive.
    pub fn from_checkpoint(ck: &Checkpoint, env: &EnvConfig) -> Result<Self> {
        if let Some(arm) = ck.meta_str("arm") {
            if arm != env.arm.name() {
                return Err(Error::Checkpoint(format!(
                    "checkpoint was trained for the {arm} arm, evaluation uses {}",
                    env.arm.name()
                )));
            }
        }
        let net = ck.mlp("policy")?;
        let squashed = match ck.algorithm.as_str() {
            "ppo" => false,
            "sac" => true,
            other => return Err(Error::Checkpoint(format!("unknown algorithm `{other}`"))),
        };
        let action_dim = env.action_dim();
        let want_out = if squashed { 2 * action_dim } else { action_dim };
        if net.input_dim() != env.obs_dim() || net.output_dim() != want_out {
            return Err(Error::Checkpoint(format!(
                "policy maps {} -> {}, environment needs {} -> {}",
                net.input_dim(),
                net.output_dim(),
                env.obs_dim(),
                want_out
            )));
        }
        let obs_rms = if ck.has("obs_rms.mean") {
            let mean = ck.vec("obs_rms.mean")?;
            let var = ck.vec("obs_rms.var")?;
            let count = ck.vec("obs_rms.count")?;
            if mean.len() != env.obs_dim() || var.len() != env.obs_dim() || count.len() != 1 {
                return Err(Error::Checkpoint("observation statistics do not match the observation width".into()));
            }
            Some(RunningMeanStd { mean, var, count: count[0] })
        } else {
            None
        };
        Ok(Self {
            net,
            obs_rms,
            squashed,
            action_dim,
            label: format!("{}@{}", ck.algorithm, ck.step),
        })
    }
}

struct PolicyRef<'a>(&'a DeterministicPolicy);

impl Controller for PolicyRef<'_> {
    fn act(&mut self, _env: &DoorEnv, obs: &[f64]) -> Vec<f64> {
        self.0.action(obs)
    }
}

impl ControllerSource for DeterministicPolicy {
    fn make(&self) -> Box<dyn Controller + '_> {
        Box::new(PolicyRef(self))
    }

    fn describe(&self) -> String {
        self.label.clone()
    }
}
