//! Step/reset environment over [`crate::dynamics`].
//!
//! Observation layout, for an arm with `n` degrees of freedom:
//!
//! | slice            | content                                       |
//! |------------------|-----------------------------------------------|
//! | `[0, n)`         | generalized coordinates `q`                   |
//! | `[n, 2n)`        | generalized velocities                        |
//! | `[2n, 2n + 3)`   | knob estimate minus tip position (meters)     |

use std::path::PathBuf;

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::dynamics::{norm, ArmType, DoorModel, DynamicsConstants, SimState, Vec3};
use crate::error::{Error, Result};
use crate::seeding::{derive_seed, stream, StreamRng};
use crate::worldgen::{KnobType, WorldSpec};

/// Episode length in control ticks (10.24 s at 50 Hz).
pub const EPISODE_STEPS: usize = 512;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RewardConfig {
    /// Distance, log-distance, orientation, control, door-angle and knob-angle weights.
    pub weights: [f64; 6],
    /// Offset inside the log-distance term.
    pub alpha: f64,
}

impl Default for RewardConfig {
    fn default() -> Self {
        Self {
            weights: [1.0, 1.0, 1.0, 1.0, 30.0, 50.0],
            alpha: 0.005,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SuccessCriterion {
    pub phi_threshold: f64,
    pub time_limit_s: f64,
}

impl Default for SuccessCriterion {
    fn default() -> Self {
        Self {
            phi_threshold: 0.2,
            time_limit_s: 10.2,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum NoiseSchedule {
    /// One offset per episode, like a miscalibrated detector.
    PerEpisode,
    /// Fresh i.i.d. offset every step.
    PerStep,
}

/// Where the knob position in the observation comes from.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub enum KnobEstimateMode {
    #[default]
    GroundTruth,
    GroundTruthPlusNoise { sigma_m: f64, schedule: NoiseSchedule },
    /// Fixed world-frame estimate supplied by an outside estimator.
    External { estimate: Vec3 },
}

impl KnobEstimateMode {
    pub const DEFAULT_SIGMA_M: f64 = 0.02;

    pub fn noisy(sigma_m: f64) -> Self {
        KnobEstimateMode::GroundTruthPlusNoise {
            sigma_m,
            schedule: NoiseSchedule::PerEpisode,
        }
    }

    pub fn label(&self) -> String {
        match self {
            KnobEstimateMode::GroundTruth => "gt".into(),
            KnobEstimateMode::GroundTruthPlusNoise { sigma_m, schedule } => match schedule {
                NoiseSchedule::PerEpisode => format!("gt-noise(sigma={sigma_m})"),
                NoiseSchedule::PerStep => format!("gt-noise-step(sigma={sigma_m})"),
            },
            KnobEstimateMode::External { .. } => "external".into(),
        }
    }

    fn validate(&self) -> Result<()> {
        match self {
            KnobEstimateMode::GroundTruthPlusNoise { sigma_m, .. } if !(*sigma_m >= 0.0) => {
                Err(Error::Contract(format!("noise sigma must be >= 0, got {sigma_m}")))
            }
            _ => Ok(()),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EnvConfig {
    pub arm: ArmType,
    pub mode: KnobEstimateMode,
    pub reward: RewardConfig,
    pub success: SuccessCriterion,
    pub terminate_on_success: bool,
    pub max_steps: usize,
    pub constants: DynamicsConstants,
}

impl Default for EnvConfig {
    fn default() -> Self {
        Self {
            arm: ArmType::FloatingHook,
            mode: KnobEstimateMode::GroundTruth,
            reward: RewardConfig::default(),
            success: SuccessCriterion::default(),
            terminate_on_success: false,
            max_steps: EPISODE_STEPS,
            constants: DynamicsConstants::default(),
        }
    }
}

impl EnvConfig {
    pub fn obs_dim(&self) -> usize {
        2 * self.arm.dof() + 3
    }

    pub fn action_dim(&self) -> usize {
        self.arm.dof()
    }
}

/// On-disk environment description.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EnvFile {
    pub world_file: PathBuf,
    #[serde(default)]
    pub trace_path: Option<PathBuf>,
    #[serde(flatten)]
    pub env: EnvConfig,
}

/// Shaped reward. `control` is the clamped, normalized action; the knob-angle
/// term is dropped for pull knobs.
pub fn compute_reward(
    d_t: f64,
    o_t: f64,
    control: &[f64],
    phi: f64,
    psi: f64,
    cfg: &RewardConfig,
    knob_type: KnobType,
) -> f64 {
    let [a0, a1, a2, a3, a4, a5] = cfg.weights;
    let u_norm = control.iter().map(|u| u * u).sum::<f64>().sqrt();
    let knob = if knob_type == KnobType::Pull { 0.0 } else { a5 * psi };
    -a0 * d_t - a1 * (d_t + cfg.alpha).ln() - a2 * o_t - a3 * u_norm + a4 * phi + knob
}

/// 1 when the door passed the threshold strictly before the time limit.
pub fn success_indicator(phi_max_reached: f64, t_open: Option<f64>, criterion: &SuccessCriterion) -> u8 {
    match t_open {
        Some(t) if phi_max_reached > criterion.phi_threshold && t < criterion.time_limit_s => 1,
        _ => 0,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StepInfo {
    pub phi: f64,
    pub psi: f64,
    pub d_t: f64,
    pub o_t: f64,
    pub success: bool,
    /// Some action entry was outside `[-1, 1]`.
    pub clamped: bool,
    pub t_open: Option<f64>,
}

#[derive(Clone, Debug)]
pub struct StepOutcome {
    pub observation: Vec<f64>,
    pub reward: f64,
    pub done: bool,
    pub info: StepInfo,
}

/// One line of a trajectory trace.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub t: f64,
    pub q: Vec<f64>,
    pub qdot: Vec<f64>,
    pub u: Vec<f64>,
    pub phi: f64,
    pub psi: f64,
    pub latched: bool,
    pub attached: bool,
    pub reward: f64,
}

pub struct DoorEnv {
    model: DoorModel,
    cfg: EnvConfig,
    state: SimState,
    noise_rng: StreamRng,
    noise_offset: Vec3,
    steps: usize,
    done: bool,
    t_open: Option<f64>,
}

impl DoorEnv {
    pub fn new(world: &WorldSpec, cfg: EnvConfig) -> Result<Self> {
        cfg.mode.validate()?;
        let model = DoorModel::new(world, &cfg.constants);
        let state = model.init_state(cfg.arm, 0);
        Ok(Self {
            model,
            state,
            noise_rng: stream(0),
            noise_offset: [0.0; 3],
            steps: 0,
            done: true,
            t_open: None,
            cfg,
        })
    }

    pub fn config(&self) -> &EnvConfig {
        &self.cfg
    }

    pub fn model(&self) -> &DoorModel {
        &self.model
    }

    pub fn world(&self) -> &WorldSpec {
        &self.model.world
    }

    pub fn state(&self) -> &SimState {
        &self.state
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn is_done(&self) -> bool {
        self.done
    }

    pub fn t_open(&self) -> Option<f64> {
        self.t_open
    }

    pub fn succeeded(&self) -> bool {
        self.t_open.is_some()
    }

    /// Switches the knob-estimate source; takes effect at the next reset.
    pub fn set_mode(&mut self, mode: KnobEstimateMode) -> Result<()> {
        mode.validate()?;
        self.cfg.mode = mode;
        Ok(())
    }

    pub fn reset(&mut self, episode_seed: u64) -> Vec<f64> {
        self.state = self.model.init_state(self.cfg.arm, episode_seed);
        self.noise_rng = stream(derive_seed(self.model.world.rng_seed, &[episode_seed, 1]));
        self.noise_offset = [0.0; 3];
        if let KnobEstimateMode::GroundTruthPlusNoise { sigma_m, .. } = self.cfg.mode {
            self.noise_offset = self.draw_noise(sigma_m);
        }
        self.steps = 0;
        self.done = false;
        self.t_open = None;
        self.observe()
    }

    fn draw_noise(&mut self, sigma: f64) -> Vec3 {
        let mut draw = || {
            let z: f64 = StandardNormal.sample(&mut self.noise_rng);
            sigma * z
        };
        [draw(), draw(), draw()]
    }

    /// Knob position the agent is told about.
    pub fn knob_estimate(&self) -> Vec3 {
        match &self.cfg.mode {
            KnobEstimateMode::External { estimate } => *estimate,
            _ => {
                let p = self.model.knob_grasp_point(&self.state);
                [
                    p[0] + self.noise_offset[0],
                    p[1] + self.noise_offset[1],
                    p[2] + self.noise_offset[2],
                ]
            }
        }
    }

    pub fn observe(&self) -> Vec<f64> {
        let est = self.knob_estimate();
        let tip = self.state.tip();
        let mut obs = Vec::with_capacity(self.cfg.obs_dim());
        obs.extend_from_slice(&self.state.q);
        obs.extend_from_slice(&self.state.qdot);
        obs.extend((0..3).map(|k| est[k] - tip[k]));
        obs
    }

    pub fn step(&mut self, action: &[f64]) -> Result<StepOutcome> {
        if self.done {
            return Err(Error::Contract("step called on a finished episode; call reset".into()));
        }
        if action.len() != self.cfg.action_dim() {
            return Err(Error::Contract(format!(
                "action has {} entries, expected {}",
                action.len(),
                self.cfg.action_dim()
            )));
        }
        let clamped_action: Vec<f64> = action.iter().map(|a| a.clamp(-1.0, 1.0)).collect();
        let clamped = clamped_action.iter().zip(action).any(|(c, a)| c != a);
        self.state = self.model.step_physics(&self.state, &clamped_action)?;
        self.steps += 1;

        if let KnobEstimateMode::GroundTruthPlusNoise {
            sigma_m,
            schedule: NoiseSchedule::PerStep,
        } = self.cfg.mode
        {
            self.noise_offset = self.draw_noise(sigma_m);
        }

        let d_t = self.model.distance_to_knob(&self.state);
        let o_t = self.model.orientation_error(&self.state);
        let s = &self.state;
        let reward = compute_reward(d_t, o_t, &clamped_action, s.phi, s.psi, &self.cfg.reward, self.model.world.knob_type);

        let crit = self.cfg.success;
        if self.t_open.is_none() && s.phi_max_reached > crit.phi_threshold && s.t < crit.time_limit_s {
            self.t_open = Some(s.t);
        }
        let success = self.t_open.is_some();
        self.done = self.steps >= self.cfg.max_steps || (success && self.cfg.terminate_on_success);
        let info = StepInfo {
            phi: s.phi,
            psi: s.psi,
            d_t,
            o_t,
            success,
            clamped,
            t_open: self.t_open,
        };
        Ok(StepOutcome {
            observation: self.observe(),
            reward,
            done: self.done,
            info,
        })
    }

    pub fn trace_record(&self, control: &[f64], reward: f64) -> TraceRecord {
        let s = &self.state;
        TraceRecord {
            t: s.t,
            q: s.q.clone(),
            qdot: s.qdot.clone(),
            u: control.iter().map(|a| a.clamp(-1.0, 1.0)).collect(),
            phi: s.phi,
            psi: s.psi,
            latched: s.latched,
            attached: s.attached,
            reward,
        }
    }

    /// Distance from tip to the true grasp point.
    pub fn true_distance(&self) -> f64 {
        let p = self.model.knob_grasp_point(&self.state);
        let tip = self.state.tip();
        norm([p[0] - tip[0], p[1] - tip[1], p[2] - tip[2]])
    }
}
