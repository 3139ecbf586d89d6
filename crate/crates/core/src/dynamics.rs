//! Analytic door / knob / floating end-effector dynamics.
//!
//! Frame: the closed door's front face is the plane `x = 0`, the robot works
//! on the `x > 0` side and `z` points up. The hinge is a vertical axis through
//! `(0, hinge_y, 0)`. Opening by `phi` rotates every door-fixed point about
//! that axis by `theta = -s * d * phi`, where `s = +1` when the knob lies on
//! the `+y` side of the hinge and `d = +1` for doors that swing toward the
//! robot (pull) and `-1` for doors that swing away (push).
//!
//! Each control tick runs `substeps` fixed substeps. Door and knob use a
//! backward-Euler update for their spring, damper and the stiffness of an
//! attached end-effector, with Coulomb friction applied as a bounded impulse.
//! That update never increases the door+knob energy when no external work is
//! done. The end-effector is integrated with semi-implicit Euler against the
//! interaction force of the previous substep.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seeding::{derive_seed, stream, uniform};
use crate::worldgen::{HingeSide, KnobType, OpenDirection, WorldSpec};

pub type Vec3 = [f64; 3];

fn add(a: Vec3, b: Vec3) -> Vec3 {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
}

fn sub(a: Vec3, b: Vec3) -> Vec3 {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

fn scale(a: Vec3, k: f64) -> Vec3 {
    [a[0] * k, a[1] * k, a[2] * k]
}

pub fn dot(a: Vec3, b: Vec3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

fn cross(a: Vec3, b: Vec3) -> Vec3 {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

pub fn norm(a: Vec3) -> f64 {
    dot(a, a).sqrt()
}

/// Angle between two vectors in `[0, pi]`.
pub fn angle_between(a: Vec3, b: Vec3) -> f64 {
    norm(cross(a, b)).atan2(dot(a, b))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ArmType {
    /// 6 DoF: x, y, z, roll, pitch, yaw.
    FloatingHook,
    /// 7 DoF: the hook coordinates plus gripper aperture.
    FloatingGripper,
}

impl ArmType {
    pub const ALL: [ArmType; 2] = [ArmType::FloatingHook, ArmType::FloatingGripper];

    pub fn dof(self) -> usize {
        match self {
            ArmType::FloatingHook => 6,
            ArmType::FloatingGripper => 7,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ArmType::FloatingHook => "hook",
            ArmType::FloatingGripper => "gripper",
        }
    }
}

impl std::str::FromStr for ArmType {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "hook" | "floating_hook" => Ok(ArmType::FloatingHook),
            "gripper" | "floating_gripper" => Ok(ArmType::FloatingGripper),
            other => Err(format!("unknown arm `{other}` (hook|gripper)")),
        }
    }
}

/// Calibration constants of the analytic model. None of these are measured
/// quantities; they are chosen so the benchmark behaves like a door.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DynamicsConstants {
    /// N·m·s/rad per unit of `frame_damper`.
    pub frame_damping: f64,
    /// N·m/rad per unit of `frame_spring`.
    pub frame_stiffness: f64,
    /// N·m per unit of `frame_frictionloss`.
    pub frame_friction: f64,
    pub knob_damping: f64,
    pub knob_stiffness: f64,
    pub knob_friction: f64,
    /// End-effector mass, kg.
    pub ee_mass: f64,
    /// End-effector rotational inertia per Euler coordinate, kg·m².
    pub ee_inertia: f64,
    /// N·s/m per unit of `robot_joint_damping`.
    pub robot_linear_damping: f64,
    /// N·m·s/rad per unit of `robot_joint_damping`.
    pub robot_angular_damping: f64,
    pub force_limit: f64,
    pub torque_limit: f64,
    /// Aperture change per second at full command.
    pub gripper_rate: f64,
    pub attach_radius: f64,
    pub attach_orientation: f64,
    /// Attachment breaks past this tip-to-grasp distance.
    pub attach_break_distance: f64,
    pub gripper_close_threshold: f64,
    pub gripper_release_threshold: f64,
    pub contact_stiffness: f64,
    pub contact_damping: f64,
    /// Penetration depth beyond which the panel no longer pushes back.
    pub contact_depth: f64,
    pub unlatch_fraction: f64,
    pub ajar_angle: f64,
    pub lever_length: f64,
    pub round_knob_radius: f64,
    pub hook_round_transfer: f64,
    pub lever_transfer: f64,
    pub control_dt: f64,
    pub substeps: usize,
    pub workspace_min: Vec3,
    pub workspace_max: Vec3,
}

impl Default for DynamicsConstants {
    fn default() -> Self {
        Self {
            frame_damping: 100.0,
            frame_stiffness: 10.0,
            frame_friction: 5.0,
            knob_damping: 1.0,
            knob_stiffness: 2.0,
            knob_friction: 0.5,
            ee_mass: 2.0,
            ee_inertia: 0.05,
            robot_linear_damping: 100.0,
            robot_angular_damping: 10.0,
            force_limit: 80.0,
            torque_limit: 20.0,
            gripper_rate: 2.0,
            attach_radius: 0.04,
            attach_orientation: 0.5,
            attach_break_distance: 0.10,
            gripper_close_threshold: 0.3,
            gripper_release_threshold: 0.7,
            contact_stiffness: 5000.0,
            contact_damping: 200.0,
            contact_depth: 0.10,
            unlatch_fraction: 0.9,
            ajar_angle: 0.05,
            lever_length: 0.12,
            round_knob_radius: 0.035,
            hook_round_transfer: 0.1,
            lever_transfer: 1.0,
            control_dt: 0.02,
            substeps: 10,
            workspace_min: [-1.0, -2.0, 0.0],
            workspace_max: [2.0, 2.0, 2.5],
        }
    }
}

/// Dynamic state of one episode.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimState {
    pub arm: ArmType,
    /// x, y, z, roll, pitch, yaw (and aperture for the gripper).
    pub q: Vec<f64>,
    pub qdot: Vec<f64>,
    pub phi: f64,
    pub phi_dot: f64,
    pub psi: f64,
    pub psi_dot: f64,
    pub latched: bool,
    pub attached: bool,
    pub t: f64,
    pub ticks: u64,
    pub phi_max_reached: f64,
}

impl SimState {
    pub fn tip(&self) -> Vec3 {
        [self.q[0], self.q[1], self.q[2]]
    }

    pub fn tip_velocity(&self) -> Vec3 {
        [self.qdot[0], self.qdot[1], self.qdot[2]]
    }

    pub fn aperture(&self) -> Option<f64> {
        (self.arm == ArmType::FloatingGripper).then(|| self.q[6])
    }
}

/// Door, knob and end-effector coefficients resolved for one world.
#[derive(Clone, Debug)]
pub struct DoorModel {
    pub world: WorldSpec,
    pub constants: DynamicsConstants,
    side: f64,
    swing: f64,
    hinge: Vec3,
    knob_radius_from_hinge: f64,
    door_inertia: f64,
    door_damping: f64,
    door_stiffness: f64,
    door_friction: f64,
    knob_inertia: f64,
    knob_damping: f64,
    knob_stiffness: f64,
    knob_friction: f64,
    linear_damping: f64,
    angular_damping: f64,
}

/// Grasp point and its Jacobians with respect to the door and knob angles.
#[derive(Clone, Copy, Debug)]
pub struct GraspKinematics {
    pub point: Vec3,
    pub d_phi: Vec3,
    /// Direction (scaled by moment arm) along which force turns the knob.
    pub d_psi: Vec3,
}

impl DoorModel {
    pub fn new(world: &WorldSpec, constants: &DynamicsConstants) -> Self {
        let side = match world.hinge_side {
            HingeSide::Left => 1.0,
            HingeSide::Right => -1.0,
        };
        let swing = match world.open_direction {
            OpenDirection::Pull => 1.0,
            OpenDirection::Push => -1.0,
        };
        let hinge_y = world.wall_offset_y_m - side * world.door_width_m / 2.0;
        let knob_inertia = match world.knob_type {
            KnobType::Pull => 0.0,
            KnobType::Lever => world.knob_mass_kg * constants.lever_length.powi(2) / 3.0,
            KnobType::Round => 0.5 * world.knob_mass_kg * constants.round_knob_radius.powi(2),
        };
        Self {
            side,
            swing,
            hinge: [0.0, hinge_y, 0.0],
            knob_radius_from_hinge: world.knob_hinge_distance(),
            door_inertia: world.door_mass_kg * world.door_width_m.powi(2) / 3.0,
            door_damping: world.frame_damper * constants.frame_damping,
            door_stiffness: world.frame_spring * constants.frame_stiffness,
            door_friction: world.frame_frictionloss * constants.frame_friction,
            knob_inertia,
            knob_damping: world.knob_damper * constants.knob_damping,
            knob_stiffness: world.knob_spring * constants.knob_stiffness,
            knob_friction: world.knob_frictionloss * constants.knob_friction,
            linear_damping: world.robot_joint_damping * constants.robot_linear_damping,
            angular_damping: world.robot_joint_damping * constants.robot_angular_damping,
            world: world.clone(),
            constants: constants.clone(),
        }
    }

    pub fn hinge(&self) -> Vec3 {
        self.hinge
    }

    pub fn door_inertia(&self) -> f64 {
        self.door_inertia
    }

    pub fn door_damping(&self) -> f64 {
        self.door_damping
    }

    pub fn door_stiffness(&self) -> f64 {
        self.door_stiffness
    }

    fn has_knob_joint(&self) -> bool {
        self.world.knob_type != KnobType::Pull
    }

    fn door_rotation(&self, phi: f64) -> (f64, f64) {
        let theta = -self.side * self.swing * phi;
        (theta.cos(), theta.sin())
    }

    /// Rotates a hinge-relative door-fixed vector about the vertical axis.
    fn rotate(&self, phi: f64, v: Vec3) -> Vec3 {
        let (c, s) = self.door_rotation(phi);
        [c * v[0] - s * v[1], s * v[0] + c * v[1], v[2]]
    }

    /// Outward (robot-side) normal of the door's front face.
    pub fn door_normal(&self, phi: f64) -> Vec3 {
        self.rotate(phi, [1.0, 0.0, 0.0])
    }

    /// Unit vector along the panel from the hinge toward the free edge.
    fn door_along(&self, phi: f64) -> Vec3 {
        self.rotate(phi, [0.0, self.side, 0.0])
    }

    /// Velocity of a door-fixed point per unit opening rate.
    fn door_point_jacobian(&self, p: Vec3) -> Vec3 {
        scale(cross([0.0, 0.0, 1.0], sub(p, self.hinge)), -self.side * self.swing)
    }

    pub fn knob_center(&self, phi: f64) -> Vec3 {
        let local = [0.0, self.side * self.knob_radius_from_hinge, self.world.knob_height_m];
        add(self.hinge, self.rotate(phi, local))
    }

    pub fn grasp_kinematics(&self, phi: f64, psi: f64) -> GraspKinematics {
        let center = self.knob_center(phi);
        let (point, d_psi) = match self.world.knob_type {
            KnobType::Pull => (center, [0.0; 3]),
            KnobType::Lever => {
                let len = self.constants.lever_length;
                let arm = [0.0, -self.side * len * psi.cos(), -len * psi.sin()];
                let d_arm = [0.0, self.side * len * psi.sin(), -len * psi.cos()];
                (add(center, self.rotate(phi, arm)), self.rotate(phi, d_arm))
            }
            KnobType::Round => {
                let r = self.constants.round_knob_radius;
                (center, self.rotate(phi, [0.0, -self.side * r, 0.0]))
            }
        };
        GraspKinematics {
            point,
            d_phi: self.door_point_jacobian(point),
            d_psi,
        }
    }

    /// Point the end-effector tip should reach.
    pub fn knob_grasp_point(&self, state: &SimState) -> Vec3 {
        self.grasp_kinematics(state.phi, state.psi).point
    }

    /// Approach direction that hooks or grips the knob: into the door face.
    pub fn ideal_approach_axis(&self, phi: f64) -> Vec3 {
        scale(self.door_normal(phi), -1.0)
    }

    pub fn orientation_error(&self, state: &SimState) -> f64 {
        let (_, axis) = end_effector_pose(state);
        angle_between(axis, self.ideal_approach_axis(state.phi))
    }

    pub fn distance_to_knob(&self, state: &SimState) -> f64 {
        norm(sub(self.knob_grasp_point(state), state.tip()))
    }

    fn knob_transfer(&self, arm: ArmType) -> f64 {
        match (self.world.knob_type, arm) {
            (KnobType::Pull, _) => 0.0,
            (KnobType::Lever, _) => self.constants.lever_transfer,
            (KnobType::Round, ArmType::FloatingHook) => self.constants.hook_round_transfer,
            (KnobType::Round, ArmType::FloatingGripper) => self.world.knob_surface_friction,
        }
    }

    /// Door angle past which the latch no longer blocks the door.
    pub fn unlatch_angle(&self) -> f64 {
        self.constants.unlatch_fraction * self.world.knob_rot_range_rad
    }

    pub fn latch_open(&self, state: &SimState) -> bool {
        !state.latched || state.psi >= self.unlatch_angle()
    }

    /// Door and knob kinetic plus spring energy.
    pub fn energy(&self, state: &SimState) -> f64 {
        let door = 0.5 * self.door_inertia * state.phi_dot.powi(2) + 0.5 * self.door_stiffness * state.phi.powi(2);
        let knob = if self.has_knob_joint() {
            0.5 * self.knob_inertia * state.psi_dot.powi(2) + 0.5 * self.knob_stiffness * state.psi.powi(2)
        } else {
            0.0
        };
        door + knob
    }

    /// Fresh episode state: robot placed in front of the knob, door closed.
    pub fn init_state(&self, arm: ArmType, episode_seed: u64) -> SimState {
        let mut rng = stream(derive_seed(self.world.rng_seed, &[episode_seed]));
        let knob = self.knob_center(0.0);
        let mut q = vec![
            uniform(&mut rng, 0.6, 1.2),
            knob[1] + uniform(&mut rng, -0.4, 0.4),
            uniform(&mut rng, 0.8, 1.2),
            uniform(&mut rng, -0.3, 0.3),
            uniform(&mut rng, -0.3, 0.3),
            uniform(&mut rng, -0.3, 0.3),
        ];
        if arm == ArmType::FloatingGripper {
            q.push(1.0);
        }
        SimState {
            arm,
            qdot: vec![0.0; q.len()],
            q,
            phi: 0.0,
            phi_dot: 0.0,
            psi: 0.0,
            psi_dot: 0.0,
            latched: self.world.knob_type.has_latch(),
            attached: false,
            t: 0.0,
            ticks: 0,
            phi_max_reached: 0.0,
        }
    }

    /// Advances one control tick. `control` holds normalized commands; each
    /// entry is clamped to `[-1, 1]` and scaled by its actuator limit.
    pub fn step_physics(&self, state: &SimState, control: &[f64]) -> Result<SimState> {
        if control.len() != state.arm.dof() || state.q.len() != state.arm.dof() {
            return Err(Error::Contract(format!(
                "control has {} entries, arm {} expects {}",
                control.len(),
                state.arm.name(),
                state.arm.dof()
            )));
        }
        if let Some((i, &u)) = control.iter().enumerate().find(|(_, u)| !u.is_finite()) {
            return Err(Error::NumericalBlowup {
                quantity: format!("control[{i}]"),
                value: u,
            });
        }
        let actuation = self.scale_control(control);
        let dt = self.constants.control_dt / self.constants.substeps as f64;
        let mut next = state.clone();
        for _ in 0..self.constants.substeps {
            self.substep(&mut next, &actuation, dt);
            check_finite(&next)?;
        }
        next.ticks += 1;
        next.t = next.ticks as f64 * self.constants.control_dt;
        Ok(next)
    }

    /// Clamps normalized commands and converts them to forces, torques and
    /// aperture rate.
    pub fn scale_control(&self, control: &[f64]) -> Vec<f64> {
        control
            .iter()
            .enumerate()
            .map(|(i, &u)| {
                let u = u.clamp(-1.0, 1.0);
                match i {
                    0..=2 => u * self.constants.force_limit,
                    3..=5 => u * self.constants.torque_limit,
                    _ => u * self.constants.gripper_rate,
                }
            })
            .collect()
    }

    /// One fixed substep of length `dt` under already-scaled actuation.
    pub fn substep(&self, s: &mut SimState, actuation: &[f64], dt: f64) {
        let c = &self.constants;
        let grasp = self.grasp_kinematics(s.phi, s.psi);
        let tip = s.tip();
        let tip_v = s.tip_velocity();
        let offset = sub(grasp.point, tip);
        let dist = norm(offset);

        if s.attached {
            let released = s.aperture().is_some_and(|g| g > c.gripper_release_threshold);
            if released || dist > c.attach_break_distance {
                s.attached = false;
            }
        } else {
            let closed = s.aperture().is_none_or(|g| g < c.gripper_close_threshold);
            if closed && dist < c.attach_radius && self.orientation_error(s) < c.attach_orientation {
                s.attached = true;
            }
        }

        let gate = self.latch_open(s);
        let lever = self.world.knob_type == KnobType::Lever;
        let mut tip_force = [0.0; 3];
        let (mut door_force, mut door_extra_damping) = (0.0, 0.0);
        let (mut knob_force, mut knob_extra_damping) = (0.0, 0.0);

        if s.attached {
            let door_v = scale(grasp.d_phi, s.phi_dot);
            let knob_v = if lever { scale(grasp.d_psi, s.psi_dot) } else { [0.0; 3] };
            let spring = scale(offset, c.contact_stiffness);
            let grasp_v = add(door_v, knob_v);
            let force = add(spring, scale(sub(grasp_v, tip_v), c.contact_damping));
            tip_force = force;
            let implicit = c.contact_damping + c.contact_stiffness * dt;
            if gate {
                // The door's own velocity term moves into the implicit solve.
                let explicit = sub(force, scale(door_v, c.contact_damping));
                door_force -= dot(explicit, grasp.d_phi);
                door_extra_damping += implicit * dot(grasp.d_phi, grasp.d_phi);
            }
            if self.has_knob_joint() {
                let transfer = self.knob_transfer(s.arm);
                if lever {
                    let explicit = sub(force, scale(knob_v, c.contact_damping));
                    knob_force -= transfer * dot(explicit, grasp.d_psi);
                    knob_extra_damping += transfer * implicit * dot(grasp.d_psi, grasp.d_psi);
                } else {
                    knob_force -= transfer * dot(force, grasp.d_psi);
                }
            }
        }

        if self.world.open_direction == OpenDirection::Push {
            let n = self.door_normal(s.phi);
            let rel = sub(tip, self.hinge);
            let depth = dot(rel, n);
            let along = dot(rel, self.door_along(s.phi));
            let inside = along >= 0.0
                && along <= self.world.door_width_m
                && tip[2] >= 0.0
                && tip[2] <= self.world.door_height_m;
            if depth < 0.0 && depth > -c.contact_depth && inside {
                let jac = self.door_point_jacobian(tip);
                let panel_v = scale(jac, s.phi_dot);
                let v_n = dot(sub(tip_v, panel_v), n);
                let push = (c.contact_stiffness * -depth - c.contact_damping * v_n).max(0.0);
                tip_force = add(tip_force, scale(n, push));
                if gate {
                    door_force -= push * dot(n, jac);
                }
            }
        }

        let (phi, phi_dot) = implicit_joint(
            s.phi,
            s.phi_dot,
            dt,
            self.door_inertia,
            self.door_damping + door_extra_damping,
            self.door_stiffness,
            self.door_friction,
            door_force,
        );
        (s.phi, s.phi_dot) = clamp_joint(phi, phi_dot, 0.0, std::f64::consts::FRAC_PI_2);

        if self.has_knob_joint() {
            let (psi, psi_dot) = implicit_joint(
                s.psi,
                s.psi_dot,
                dt,
                self.knob_inertia,
                self.knob_damping + knob_extra_damping,
                self.knob_stiffness,
                self.knob_friction,
                knob_force,
            );
            (s.psi, s.psi_dot) = clamp_joint(psi, psi_dot, 0.0, self.world.knob_rot_range_rad);
        }

        for i in 0..3 {
            let m = c.ee_mass;
            let v = (m * s.qdot[i] + dt * (actuation[i] + tip_force[i])) / (m + dt * self.linear_damping);
            (s.q[i], s.qdot[i]) = clamp_joint(s.q[i] + dt * v, v, c.workspace_min[i], c.workspace_max[i]);
        }
        for i in 3..6 {
            let inertia = c.ee_inertia;
            let w = (inertia * s.qdot[i] + dt * actuation[i]) / (inertia + dt * self.angular_damping);
            let pi = std::f64::consts::PI;
            (s.q[i], s.qdot[i]) = clamp_joint(s.q[i] + dt * w, w, -pi, pi);
        }
        if s.arm == ArmType::FloatingGripper {
            let rate = actuation[6];
            (s.q[6], s.qdot[6]) = clamp_joint(s.q[6] + dt * rate, rate, 0.0, 1.0);
        }

        if s.latched && s.phi > c.ajar_angle {
            s.latched = false;
        }
        s.phi_max_reached = s.phi_max_reached.max(s.phi);
    }
}

/// Backward-Euler update of `I x'' = f - c x' - k x - mu sgn(x')` with the
/// friction impulse clamped so it can only bring the velocity to rest.
#[allow(clippy::too_many_arguments)]
fn implicit_joint(x: f64, v: f64, dt: f64, inertia: f64, damping: f64, stiffness: f64, friction: f64, force: f64) -> (f64, f64) {
    let effective = inertia + dt * damping + dt * dt * stiffness;
    let free = (inertia * v + dt * (force - stiffness * x)) / effective;
    let stick = dt * friction / effective;
    let v_new = if free.abs() <= stick { 0.0 } else { free - stick.copysign(free) };
    (x + dt * v_new, v_new)
}

fn clamp_joint(x: f64, v: f64, lo: f64, hi: f64) -> (f64, f64) {
    if x <= lo {
        (lo, 0.0)
    } else if x >= hi {
        (hi, 0.0)
    } else {
        (x, v)
    }
}

fn check_finite(s: &SimState) -> Result<()> {
    let scalars = [("phi", s.phi), ("phi_dot", s.phi_dot), ("psi", s.psi), ("psi_dot", s.psi_dot)];
    for (name, v) in scalars {
        if !v.is_finite() {
            return Err(Error::NumericalBlowup { quantity: name.into(), value: v });
        }
    }
    for (i, (&q, &qd)) in s.q.iter().zip(&s.qdot).enumerate() {
        if !q.is_finite() {
            return Err(Error::NumericalBlowup { quantity: format!("q[{i}]"), value: q });
        }
        if !qd.is_finite() {
            return Err(Error::NumericalBlowup { quantity: format!("qdot[{i}]"), value: qd });
        }
    }
    Ok(())
}

/// Tip position and unit approach axis. The axis is the body `-x` direction
/// under the rotation `Rz(yaw) * Ry(pitch) * Rx(roll)`.
pub fn end_effector_pose(state: &SimState) -> (Vec3, Vec3) {
    let (pitch, yaw) = (state.q[4], state.q[5]);
    let (sp, cp) = pitch.sin_cos();
    let (sy, cy) = yaw.sin_cos();
    (state.tip(), [-cy * cp, -sy * cp, sp])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::worldgen::sample_world;
    use std::f64::consts::{FRAC_PI_2, PI};

    fn world(knob: KnobType, dir: OpenDirection) -> WorldSpec {
        sample_world(11, 3, knob, dir)
    }

    fn model(knob: KnobType, dir: OpenDirection) -> DoorModel {
        DoorModel::new(&world(knob, dir), &DynamicsConstants::default())
    }

    fn state_with_q(q: Vec<f64>) -> SimState {
        let arm = if q.len() == 7 { ArmType::FloatingGripper } else { ArmType::FloatingHook };
        SimState {
            arm,
            qdot: vec![0.0; q.len()],
            q,
            phi: 0.0,
            phi_dot: 0.0,
            psi: 0.0,
            psi_dot: 0.0,
            latched: false,
            attached: false,
            t: 0.0,
            ticks: 0,
            phi_max_reached: 0.0,
        }
    }

    #[test]
    fn init_state_rests_closed() {
        for knob in KnobType::ALL {
            let m = model(knob, OpenDirection::Pull);
            let s = m.init_state(ArmType::FloatingHook, 5);
            assert_eq!(s.phi, 0.0);
            assert_eq!(s.t, 0.0);
            assert_eq!(s.latched, knob != KnobType::Pull);
            assert!(!s.attached);
            assert_eq!(s, m.init_state(ArmType::FloatingHook, 5));
            let knob_pos = m.knob_center(0.0);
            assert!((0.6..=1.2).contains(&s.q[0]));
            assert!((s.q[1] - knob_pos[1]).abs() <= 0.4);
            assert!((0.8..=1.2).contains(&s.q[2]));
            assert!(s.q[3..6].iter().all(|a| a.abs() <= 0.3));
        }
    }

    #[test]
    fn gripper_starts_open_with_seven_dof() {
        let m = model(KnobType::Round, OpenDirection::Pull);
        let s = m.init_state(ArmType::FloatingGripper, 1);
        assert_eq!(s.q.len(), 7);
        assert_eq!(s.aperture(), Some(1.0));
    }

    #[test]
    fn rest_is_equilibrium() {
        let m = model(KnobType::Lever, OpenDirection::Pull);
        let s = m.init_state(ArmType::FloatingHook, 2);
        let next = m.step_physics(&s, &[0.0; 6]).unwrap();
        let mut expected = s.clone();
        expected.t = 0.02;
        expected.ticks = 1;
        assert_eq!(next, expected);
    }

    #[test]
    fn pose_identity_and_half_turn() {
        let s = state_with_q(vec![1.0, 0.0, 1.0, 0.0, 0.0, 0.0]);
        let (p, axis) = end_effector_pose(&s);
        assert_eq!(p, [1.0, 0.0, 1.0]);
        assert_eq!(axis, [-1.0, 0.0, 0.0]);
        let s = state_with_q(vec![1.0, 0.0, 1.0, 0.0, 0.0, PI]);
        let (_, axis) = end_effector_pose(&s);
        assert!((axis[0] - 1.0).abs() < 1e-15 && axis[1].abs() < 1e-15 && axis[2].abs() < 1e-15);
    }

    fn matmul(a: [[f64; 3]; 3], b: [[f64; 3]; 3]) -> [[f64; 3]; 3] {
        let mut out = [[0.0; 3]; 3];
        for i in 0..3 {
            for j in 0..3 {
                out[i][j] = (0..3).map(|k| a[i][k] * b[k][j]).sum();
            }
        }
        out
    }

    #[test]
    fn pose_matches_full_rotation_matrix() {
        let mut rng = stream(17);
        for _ in 0..1000 {
            let (r, p, y) = (
                uniform(&mut rng, -PI, PI),
                uniform(&mut rng, -PI, PI),
                uniform(&mut rng, -PI, PI),
            );
            let rx = [[1.0, 0.0, 0.0], [0.0, r.cos(), -r.sin()], [0.0, r.sin(), r.cos()]];
            let ry = [[p.cos(), 0.0, p.sin()], [0.0, 1.0, 0.0], [-p.sin(), 0.0, p.cos()]];
            let rz = [[y.cos(), -y.sin(), 0.0], [y.sin(), y.cos(), 0.0], [0.0, 0.0, 1.0]];
            let m = matmul(rz, matmul(ry, rx));
            let want = [-m[0][0], -m[1][0], -m[2][0]];
            let (_, axis) = end_effector_pose(&state_with_q(vec![0.0, 0.0, 0.0, r, p, y]));
            for k in 0..3 {
                assert!((axis[k] - want[k]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn closed_door_knob_position() {
        for dir in OpenDirection::ALL {
            let m = model(KnobType::Pull, dir);
            let w = &m.world;
            let c = m.knob_center(0.0);
            assert_eq!(c[0], 0.0);
            assert!(((c[1] - m.hinge()[1]).abs() - (1.0 - w.knob_edge_ratio) * w.door_width_m).abs() < 1e-12);
            assert_eq!(c[2], w.knob_height_m);
        }
    }

    #[test]
    fn open_door_rotates_rigidly() {
        let m = model(KnobType::Pull, OpenDirection::Pull);
        let closed = m.knob_center(0.0);
        let open = m.knob_center(FRAC_PI_2);
        let h = m.hinge();
        let r0 = ((closed[0] - h[0]).powi(2) + (closed[1] - h[1]).powi(2)).sqrt();
        let r1 = ((open[0] - h[0]).powi(2) + (open[1] - h[1]).powi(2)).sqrt();
        assert!((r0 - r1).abs() < 1e-12);
        // Pull doors swing toward the robot side.
        assert!((open[0] - r0).abs() < 1e-12);
        assert!((open[1] - h[1]).abs() < 1e-12);
        let push = model(KnobType::Pull, OpenDirection::Push);
        assert!(push.knob_center(FRAC_PI_2)[0] < -0.5);
    }

    #[test]
    fn lever_tip_at_full_rotation() {
        let m = model(KnobType::Lever, OpenDirection::Pull);
        let w = &m.world;
        let range = w.knob_rot_range_rad;
        let center = m.knob_center(0.0);
        let side = if w.hinge_side == HingeSide::Left { 1.0 } else { -1.0 };
        let tip = m.grasp_kinematics(0.0, range).point;
        // Handle starts pointing toward the hinge and turns downward.
        let expected = [center[0], center[1] - side * 0.12 * range.cos(), center[2] - 0.12 * range.sin()];
        for k in 0..3 {
            assert!((tip[k] - expected[k]).abs() < 1e-12);
        }
        assert!((norm(sub(tip, center)) - 0.12).abs() < 1e-12);
    }

    #[test]
    fn orientation_error_cases() {
        let m = model(KnobType::Pull, OpenDirection::Pull);
        let mut s = state_with_q(vec![1.0, 0.0, 1.0, 0.0, 0.0, 0.0]);
        assert_eq!(m.orientation_error(&s), 0.0);
        s.q[5] = PI;
        assert!((m.orientation_error(&s) - PI).abs() < 1e-12);
        s.q[5] = FRAC_PI_2;
        assert!((m.orientation_error(&s) - FRAC_PI_2).abs() < 1e-12);
        s.q[5] = 0.0;
        s.q[4] = -FRAC_PI_2;
        assert!((m.orientation_error(&s) - FRAC_PI_2).abs() < 1e-12);
    }

    #[test]
    fn hook_on_lever_engages_in_one_step() {
        let m = model(KnobType::Lever, OpenDirection::Pull);
        let mut s = m.init_state(ArmType::FloatingHook, 0);
        let p = m.knob_grasp_point(&s);
        s.q = vec![p[0], p[1], p[2], 0.0, 0.0, 0.0];
        let next = m.step_physics(&s, &[0.0; 6]).unwrap();
        assert!(next.attached);
    }

    #[test]
    fn open_gripper_does_not_engage() {
        let m = model(KnobType::Round, OpenDirection::Pull);
        let mut s = m.init_state(ArmType::FloatingGripper, 0);
        let p = m.knob_grasp_point(&s);
        s.q = vec![p[0], p[1], p[2], 0.0, 0.0, 0.0, 1.0];
        assert!(!m.step_physics(&s, &[0.0; 7]).unwrap().attached);
        s.q[6] = 0.1;
        assert!(m.step_physics(&s, &[0.0; 7]).unwrap().attached);
    }

    #[test]
    fn wrong_control_length_is_rejected() {
        let m = model(KnobType::Pull, OpenDirection::Pull);
        let s = m.init_state(ArmType::FloatingHook, 0);
        assert!(matches!(m.step_physics(&s, &[0.0; 7]), Err(Error::Contract(_))));
    }

    #[test]
    fn non_finite_control_is_blowup() {
        let m = model(KnobType::Pull, OpenDirection::Pull);
        let s = m.init_state(ArmType::FloatingHook, 0);
        let mut u = [0.0; 6];
        u[2] = f64::NAN;
        match m.step_physics(&s, &u) {
            Err(Error::NumericalBlowup { quantity, .. }) => assert_eq!(quantity, "control[2]"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn latched_door_does_not_move_when_pulled() {
        let m = model(KnobType::Lever, OpenDirection::Pull);
        let mut s = m.init_state(ArmType::FloatingHook, 0);
        let p = m.knob_grasp_point(&s);
        s.q = vec![p[0], p[1], p[2], 0.0, 0.0, 0.0];
        for _ in 0..200 {
            s = m.step_physics(&s, &[1.0, 0.0, 0.0, 0.0, 0.0, 0.0]).unwrap();
            assert_eq!(s.phi, 0.0);
        }
        assert!(s.latched);
    }

    #[test]
    fn pulling_an_unlatched_door_opens_it() {
        let m = model(KnobType::Pull, OpenDirection::Pull);
        let mut s = m.init_state(ArmType::FloatingHook, 0);
        let p = m.knob_grasp_point(&s);
        s.q = vec![p[0], p[1], p[2], 0.0, 0.0, 0.0];
        for _ in 0..100 {
            let jac = m.grasp_kinematics(s.phi, s.psi).d_phi;
            let dir = scale(jac, 1.0 / norm(jac));
            s = m.step_physics(&s, &[dir[0], dir[1], dir[2], 0.0, 0.0, 0.0]).unwrap();
        }
        assert!(s.attached);
        assert!(s.phi > 0.2, "phi = {}", s.phi);
        assert!(s.phi_max_reached >= s.phi);
    }

    #[test]
    fn pushing_a_push_door_opens_it_without_grasp() {
        let m = model(KnobType::Pull, OpenDirection::Push);
        let mut s = m.init_state(ArmType::FloatingHook, 0);
        let p = m.knob_center(0.0);
        s.q = vec![0.05, p[1], p[2], 0.0, 0.0, 0.5];
        for _ in 0..150 {
            s = m.step_physics(&s, &[-1.0, 0.0, 0.0, 0.0, 0.0, 0.0]).unwrap();
        }
        assert!(s.phi > 0.2, "phi = {}", s.phi);
    }

    #[test]
    fn implicit_joint_friction_stops_slow_motion() {
        let (x, v) = implicit_joint(0.0, 1e-4, 0.002, 1.0, 0.0, 0.0, 1.0, 0.0);
        assert_eq!(v, 0.0);
        assert_eq!(x, 0.0);
    }
}
