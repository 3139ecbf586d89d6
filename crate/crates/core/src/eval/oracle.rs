//! Scripted staged controller used to certify that worlds are solvable.
//!
//! It reads the true simulator state for staging (attachment, latch, angles)
//! but servos toward the knob estimate the observation carries, so knob
//! position noise degrades it the same way it degrades a learned policy.

use crate::dynamics::{ArmType, Vec3};
use crate::env::DoorEnv;

use super::Controller;

/// Gains of the scripted controller. Forces are expressed in newtons and
/// converted to normalized commands with the actuator limits.
#[derive(Clone, Debug)]
pub struct OracleGains {
    /// Position gain toward the knob estimate, N/m.
    pub position: f64,
    /// Velocity damping while approaching, N·s/m.
    pub velocity: f64,
    /// Orientation gain, N·m/rad.
    pub orientation: f64,
    /// Angular-rate damping, N·m·s/rad.
    pub angular_rate: f64,
    /// Force applied along the knob-turning direction, N.
    pub turn_force: f64,
    /// Force applied along the door-opening direction, N.
    pub open_force: f64,
    /// Estimated distance at which the gripper starts closing, m.
    pub close_distance: f64,
}

impl Default for OracleGains {
    fn default() -> Self {
        Self {
            position: 400.0,
            velocity: 20.0,
            orientation: 40.0,
            angular_rate: 2.0,
            turn_force: 45.0,
            open_force: 60.0,
            close_distance: 0.05,
        }
    }
}

#[derive(Clone, Debug, Default)]
pub struct ScriptedOracle {
    pub gains: OracleGains,
}

impl ScriptedOracle {
    pub fn new(gains: OracleGains) -> Self {
        Self { gains }
    }
}

fn unit(v: Vec3) -> Vec3 {
    let n = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
    if n > 0.0 {
        [v[0] / n, v[1] / n, v[2] / n]
    } else {
        [0.0; 3]
    }
}

impl Controller for ScriptedOracle {
    fn act(&mut self, env: &DoorEnv, _obs: &[f64]) -> Vec<f64> {
        let g = &self.gains;
        let model = env.model();
        let s = env.state();
        let limits = &model.constants;
        let mut force = [0.0; 3];

        if s.attached {
            let kin = model.grasp_kinematics(s.phi, s.psi);
            if model.world.knob_type.has_latch() && s.latched {
                let turn = unit(kin.d_psi);
                for k in 0..3 {
                    force[k] += g.turn_force * turn[k];
                }
            }
            if model.latch_open(s) {
                let open = unit(kin.d_phi);
                for k in 0..3 {
                    force[k] += g.open_force * open[k];
                }
            }
            // Keep the tip on the grasp point against drift.
            let tip = s.tip();
            for k in 0..3 {
                force[k] += 0.25 * g.position * (kin.point[k] - tip[k]);
            }
        } else {
            let est = env.knob_estimate();
            let tip = s.tip();
            for k in 0..3 {
                force[k] = g.position * (est[k] - tip[k]) - g.velocity * s.qdot[k];
            }
        }

        let yaw_target = {
            let n = model.door_normal(s.phi);
            n[1].atan2(n[0])
        };
        let angle_targets = [0.0, 0.0, yaw_target];
        let mut action = Vec::with_capacity(s.arm.dof());
        action.extend(force.iter().map(|f| f / limits.force_limit));
        for k in 0..3 {
            let err = angle_targets[k] - s.q[3 + k];
            let torque = g.orientation * err - g.angular_rate * s.qdot[3 + k];
            action.push(torque / limits.torque_limit);
        }
        if s.arm == ArmType::FloatingGripper {
            let near = env.knob_estimate();
            let tip = s.tip();
            let d = ((near[0] - tip[0]).powi(2) + (near[1] - tip[1]).powi(2) + (near[2] - tip[2]).powi(2)).sqrt();
            action.push(if s.attached || d < g.close_distance { -1.0 } else { 1.0 });
        }
        action.iter().map(|a| a.clamp(-1.0, 1.0)).collect()
    }
}
