//! Statistical and property checks across worldgen, dynamics and env.

use proptest::prelude::*;
use rand::Rng;

use doorsim_core::dynamics::{dot, norm, ArmType, DoorModel, DynamicsConstants, SimState};
use doorsim_core::env::{DoorEnv, EnvConfig, KnobEstimateMode};
use doorsim_core::seeding::{derive_seed, stream};
use doorsim_core::worldgen::{sample_world, sample_worlds, HingeSide, KnobType, OpenDirection, FIELD_RANGES};

/// Kolmogorov-Smirnov distance of samples in [0, 1] from the uniform CDF.
fn ks_uniform(mut u: Vec<f64>) -> f64 {
    u.sort_by(f64::total_cmp);
    let n = u.len() as f64;
    u.iter()
        .enumerate()
        .map(|(i, &x)| (x - i as f64 / n).max((i + 1) as f64 / n - x))
        .fold(0.0, f64::max)
}

#[test]
fn sampled_fields_are_uniform_on_their_intervals() {
    let worlds = sample_worlds(77, 10_000, KnobType::Lever, OpenDirection::Pull);
    for f in FIELD_RANGES {
        let u: Vec<f64> = worlds.iter().map(|w| ((f.get)(w) - f.lo) / (f.hi - f.lo)).collect();
        let d = ks_uniform(u);
        assert!(d < 0.02, "{}: KS distance {d}", f.name);
    }
    let left = worlds.iter().filter(|w| w.hinge_side == HingeSide::Left).count() as f64;
    assert!((left / 10_000.0 - 0.5).abs() < 3.0 * 0.5 / 100.0);
}

#[test]
fn knob_estimate_noise_is_unbiased_with_requested_spread() {
    let sigma = 0.02;
    let world = sample_world(5, 0, KnobType::Lever, OpenDirection::Pull);
    let cfg = EnvConfig {
        mode: KnobEstimateMode::noisy(sigma),
        ..EnvConfig::default()
    };
    let mut env = DoorEnv::new(&world, cfg).unwrap();
    let n = 10_000;
    let mut sum = [0.0; 3];
    let mut sq = [0.0; 3];
    for seed in 0..n {
        env.reset(seed);
        let truth = env.model().knob_grasp_point(env.state());
        let est = env.knob_estimate();
        for k in 0..3 {
            let e = est[k] - truth[k];
            sum[k] += e;
            sq[k] += e * e;
        }
    }
    let nf = n as f64;
    for k in 0..3 {
        let mean = sum[k] / nf;
        let std = (sq[k] / nf - mean * mean).sqrt();
        assert!(mean.abs() < 3.0 * sigma / nf.sqrt(), "axis {k} mean {mean}");
        assert!((std / sigma - 1.0).abs() < 0.05, "axis {k} std {std}");
    }
}

#[test]
fn per_episode_noise_is_constant_within_an_episode() {
    let world = sample_world(5, 1, KnobType::Pull, OpenDirection::Pull);
    let cfg = EnvConfig {
        mode: KnobEstimateMode::noisy(0.05),
        ..EnvConfig::default()
    };
    let mut env = DoorEnv::new(&world, cfg).unwrap();
    env.reset(3);
    let offset = |env: &DoorEnv| {
        let t = env.model().knob_grasp_point(env.state());
        let e = env.knob_estimate();
        [e[0] - t[0], e[1] - t[1], e[2] - t[2]]
    };
    let first = offset(&env);
    for _ in 0..20 {
        env.step(&[0.3, 0.0, 0.0, 0.0, 0.0, 0.0]).unwrap();
        let now = offset(&env);
        for k in 0..3 {
            assert!((now[k] - first[k]).abs() < 1e-12);
        }
    }
}

/// Tip placed on the grasp point, facing the door, gripper closed.
fn grasping_state(model: &DoorModel, arm: ArmType) -> SimState {
    let mut s = model.init_state(arm, 2);
    let grasp = model.knob_grasp_point(&s);
    let n = model.door_normal(0.0);
    s.q[..3].copy_from_slice(&grasp);
    s.q[3] = 0.0;
    s.q[4] = 0.0;
    s.q[5] = n[1].atan2(n[0]);
    if arm == ArmType::FloatingGripper {
        s.q[6] = 0.0;
    }
    s
}

#[test]
fn hook_turns_a_round_knob_no_more_than_a_gripper() {
    let constants = DynamicsConstants::default();
    for w in sample_worlds(31, 20, KnobType::Round, OpenDirection::Pull) {
        let model = DoorModel::new(&w, &constants);
        let mut psi = Vec::new();
        for arm in [ArmType::FloatingHook, ArmType::FloatingGripper] {
            let mut s = grasping_state(&model, arm);
            let d_psi = model.grasp_kinematics(0.0, 0.0).d_psi;
            let len = norm(d_psi);
            let mut u = vec![0.0; arm.dof()];
            for k in 0..3 {
                u[k] = 0.5 * d_psi[k] / len;
            }
            if arm == ArmType::FloatingGripper {
                u[6] = -1.0;
            }
            for _ in 0..25 {
                s = model.step_physics(&s, &u).unwrap();
            }
            assert!(s.attached);
            psi.push(s.psi);
        }
        assert!(psi[0] <= psi[1], "hook {} > gripper {}", psi[0], psi[1]);
        assert!(psi[1] > 0.0);
    }
}

#[test]
fn door_swings_toward_its_open_side() {
    let constants = DynamicsConstants::default();
    for dir in [OpenDirection::Pull, OpenDirection::Push] {
        for w in sample_worlds(41, 10, KnobType::Pull, dir) {
            let model = DoorModel::new(&w, &constants);
            let closed = model.knob_center(0.0);
            let open = model.knob_center(0.3);
            let toward_robot = open[0] - closed[0];
            match dir {
                OpenDirection::Pull => assert!(toward_robot > 0.0),
                OpenDirection::Push => assert!(toward_robot < 0.0),
            }
            let g = model.grasp_kinematics(0.2, 0.0);
            assert!(dot(g.d_phi, model.door_normal(0.2)).abs() > 0.0);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn phi_max_is_monotone_and_success_needs_threshold(seed in any::<u64>(), index in 0u64..1000, knob in 0usize..3) {
        let world = sample_world(seed, index, KnobType::ALL[knob], OpenDirection::Pull);
        let mut env = DoorEnv::new(&world, EnvConfig::default()).unwrap();
        env.reset(seed ^ index);
        let mut rng = stream(derive_seed(seed, &[index]));
        let mut last = 0.0;
        for _ in 0..60 {
            let a: Vec<f64> = (0..6).map(|_| rng.random_range(-1.5..1.5)).collect();
            let out = env.step(&a).unwrap();
            let s = env.state();
            prop_assert!(s.phi_max_reached >= last);
            prop_assert!(s.phi_max_reached >= s.phi);
            prop_assert!((0.0..=std::f64::consts::FRAC_PI_2).contains(&s.phi));
            if out.info.success {
                prop_assert!(s.phi_max_reached > 0.2);
            }
            last = s.phi_max_reached;
        }
    }

    #[test]
    fn out_of_range_actions_act_like_clamped_ones(seed in any::<u64>(), raw in prop::collection::vec(-5.0f64..5.0, 6)) {
        let world = sample_world(seed, 0, KnobType::Lever, OpenDirection::Push);
        let mut a = DoorEnv::new(&world, EnvConfig::default()).unwrap();
        let mut b = DoorEnv::new(&world, EnvConfig::default()).unwrap();
        a.reset(1);
        b.reset(1);
        let clamped: Vec<f64> = raw.iter().map(|u| u.clamp(-1.0, 1.0)).collect();
        let ra = a.step(&raw).unwrap();
        let rb = b.step(&clamped).unwrap();
        prop_assert_eq!(ra.observation, rb.observation);
        prop_assert_eq!(ra.reward, rb.reward);
        prop_assert_eq!(a.state(), b.state());
    }
}
