//! Benchmark acceptance gate. Each test prints one PASS/FAIL line straight to
//! stdout (bypassing the harness capture) and then asserts.

use std::io::Write as _;
use std::ops::ControlFlow;
use std::time::Instant;

use rand::Rng;

use doorsim_core::dynamics::{ArmType, DoorModel, DynamicsConstants, SimState};
use doorsim_core::env::{compute_reward, success_indicator, EnvConfig, KnobEstimateMode, RewardConfig, SuccessCriterion};
use doorsim_core::eval::{
    aggregate, evaluate, format_at, run_ablation, sweep, AblationConfig, ScriptedOracle, WorldResult, ARMS, DIRECTIONS,
    POLICY_RANDOMIZED, POLICY_SINGLE, TEST_ENV1, TEST_RANDOMIZED,
};
use doorsim_core::neural::{standard_normal_vec, Adam, Mlp};
use doorsim_core::ppo::{clipped_surrogate, compute_gae, train_ppo, PpoConfig, PpoTrainConfig};
use doorsim_core::sac::soft_target;
use doorsim_core::seeding::{derive_seed, stream};
use doorsim_core::worldgen::{
    generate_world_set, sample_worlds, KnobType, OpenDirection, WorldSpec, FIELD_RANGES, MANIFEST_FILE,
};

const SEED: u64 = 20_240_601;

fn report(id: u32, name: &str, pass: bool, detail: &str) {
    let verdict = if pass { "PASS" } else { "FAIL" };
    let line = format!("acceptance criterion {id:>2} {verdict}: {name} ({detail})\n");
    let mut out = std::io::stdout().lock();
    let _ = out.write_all(line.as_bytes());
    let _ = out.flush();
    assert!(pass, "{}", line.trim_end());
}

fn pool(threads: usize) -> rayon::ThreadPool {
    rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap()
}

fn pull_hook_worlds() -> Vec<WorldSpec> {
    sample_worlds(derive_seed(SEED, &[1]), 100, KnobType::Pull, OpenDirection::Pull)
}

#[test]
fn criterion_01_oracle_solvability() {
    let worlds = pull_hook_worlds();
    let start = Instant::now();
    let r = evaluate(&ScriptedOracle::default(), &worlds, &EnvConfig::default(), SEED, 1).unwrap();
    let secs = start.elapsed().as_secs_f64();
    let at_ok = r.r_at.is_some_and(|t| t < 8.0);
    let pass = r.r_asr >= 0.90 && at_ok && secs < 120.0;
    let detail = format!("r_ASR={:.2} r_AT={} runtime={secs:.1}s", r.r_asr, format_at(r.r_at));
    report(1, "oracle solves pull+hook worlds", pass, &detail);
}

#[test]
fn criterion_02_noise_degradation_ordering() {
    let worlds = pull_hook_worlds();
    let asr: Vec<f64> = [0.0, 0.02, 0.10]
        .iter()
        .map(|&sigma| {
            let cfg = EnvConfig {
                mode: KnobEstimateMode::noisy(sigma),
                ..EnvConfig::default()
            };
            evaluate(&ScriptedOracle::default(), &worlds, &cfg, SEED, 1).unwrap().r_asr
        })
        .collect();
    let pass = asr[0] >= asr[1] && asr[1] > asr[2];
    let detail = format!("sigma 0/0.02/0.10 -> r_ASR {:.2}/{:.2}/{:.2}", asr[0], asr[1], asr[2]);
    report(2, "r_ASR non-increasing in sigma, strict at 0.10", pass, &detail);
}

#[test]
fn criterion_03_difficulty_ordering() {
    let table = sweep(&ScriptedOracle::default(), &EnvConfig::default(), 100, SEED).unwrap();
    let asr = |arm, dir, knob| table.cell(arm, dir, knob).and_then(|c| c.r_asr).unwrap();
    let mut pass = true;
    let mut parts = Vec::new();
    for arm in ARMS {
        for dir in DIRECTIONS {
            let (p, l, r) = (
                asr(arm, dir, KnobType::Pull),
                asr(arm, dir, KnobType::Lever),
                asr(arm, dir, KnobType::Round),
            );
            pass &= p >= l && l >= r;
            if arm == ArmType::FloatingHook {
                pass &= r <= 0.1;
            }
            parts.push(format!("{}/{}: {p:.2}>={l:.2}>={r:.2}", arm.name(), dir.name()));
        }
    }
    report(3, "pull >= lever >= round per arm, hook/round <= 0.1", pass, &parts.join("; "));
}

#[test]
fn criterion_04_desk_scale_ppo() {
    let probe = sample_worlds(derive_seed(SEED, &[4, 0]), 100, KnobType::Pull, OpenDirection::Pull);
    let mut reached = Vec::new();
    for seed in 0..3u64 {
        let train = sample_worlds(derive_seed(SEED, &[4, 1, seed]), 100, KnobType::Pull, OpenDirection::Pull);
        let cfg = PpoTrainConfig {
            updates: 150,
            seed,
            checkpoint_every: 0,
            ..Default::default()
        };
        let mut hit = None;
        let run = train_ppo(&cfg, &train, &probe, None, |row| {
            if row.probe_asr.is_some_and(|p| p >= 0.5) {
                hit = Some(row.update);
                ControlFlow::Break(())
            } else {
                ControlFlow::Continue(())
            }
        })
        .unwrap();
        let best = run.best_probe_asr().unwrap_or(0.0);
        let mut out = std::io::stdout().lock();
        let _ = writeln!(
            out,
            "  ppo seed {seed}: best probe r_ASR {best:.2} after {} updates{}",
            run.log.len(),
            hit.map(|u| format!(", reached 0.5 at update {u}")).unwrap_or_default()
        );
        reached.push(hit);
    }
    let n = reached.iter().filter(|h| h.is_some()).count();
    report(4, "PPO reaches probe r_ASR >= 0.5 within 150 updates", n >= 2, &format!("{n}/3 seeds"));
}

/// Relative error with a floor on the denominator so near-zero gradients are
/// judged on absolute error.
fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-3)
}

#[test]
fn criterion_05_gradient_correctness() {
    let mut rng = stream(derive_seed(SEED, &[5]));
    let h = 1e-5;
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let mut sizes = vec![rng.random_range(1..=8)];
        for _ in 0..rng.random_range(0..=2) {
            sizes.push(rng.random_range(1..=16));
        }
        sizes.push(rng.random_range(1..=4));
        let mut net = Mlp::init(&sizes, 1.0, &mut rng).unwrap();
        let n = 3;
        let mut x = standard_normal_vec(&mut rng, n * sizes[0]);
        let w = standard_normal_vec(&mut rng, n * net.output_dim());
        let loss = |net: &Mlp, x: &[f64]| -> f64 {
            let out = net.forward_batch(x, n).unwrap();
            out.output().iter().zip(&w).map(|(y, w)| y * w).sum()
        };
        let cache = net.forward_batch(&x, n).unwrap();
        let mut grad = vec![0.0; net.n_params()];
        let dx = net.backward(&cache, &w, &mut grad);
        for i in 0..net.n_params() {
            let orig = net.params()[i];
            net.params_mut()[i] = orig + h;
            let up = loss(&net, &x);
            net.params_mut()[i] = orig - h;
            let down = loss(&net, &x);
            net.params_mut()[i] = orig;
            worst = worst.max(rel_err(grad[i], (up - down) / (2.0 * h)));
        }
        for i in 0..x.len() {
            let orig = x[i];
            x[i] = orig + h;
            let up = loss(&net, &x);
            x[i] = orig - h;
            let down = loss(&net, &x);
            x[i] = orig;
            worst = worst.max(rel_err(dx[i], (up - down) / (2.0 * h)));
        }
    }
    report(5, "analytic vs central-difference gradients", worst < 1e-6, &format!("max rel err {worst:.2e}"));
}

fn brute_force_advantages(r: &[f64], v: &[f64], d: &[bool], gamma: f64, lambda: f64) -> Vec<f64> {
    (0..r.len())
        .map(|t| {
            let mut sum = 0.0;
            let mut w = 1.0;
            for k in t..r.len() {
                let next = if d[k] { 0.0 } else { v[k + 1] };
                sum += w * (r[k] + gamma * next - v[k]);
                if d[k] {
                    break;
                }
                w *= gamma * lambda;
            }
            sum
        })
        .collect()
}

#[test]
fn criterion_06_gae_oracle() {
    let mut rng = stream(derive_seed(SEED, &[6]));
    let mut worst: f64 = 0.0;
    let mut td_exact = true;
    for ep in 0..20 {
        let t_len = 512;
        let r = standard_normal_vec(&mut rng, t_len);
        let v = standard_normal_vec(&mut rng, t_len + 1);
        let mut d = vec![false; t_len];
        if ep % 2 == 1 {
            d[t_len - 1] = true;
        }
        let (gamma, lambda) = (rng.random_range(0.9..1.0), rng.random_range(0.5..1.0));
        let (adv, _) = compute_gae(&r, &v, &d, gamma, lambda);
        let want = brute_force_advantages(&r, &v, &d, gamma, lambda);
        for (a, b) in adv.iter().zip(&want) {
            worst = worst.max((a - b).abs());
        }
        let (adv0, _) = compute_gae(&r, &v, &d, gamma, 0.0);
        for t in 0..t_len {
            let live = if d[t] { 0.0 } else { 1.0 };
            td_exact &= adv0[t] == r[t] + gamma * v[t + 1] * live - v[t];
        }
    }
    let pass = worst < 1e-10 && td_exact;
    report(6, "GAE recursion vs brute force, lambda=0 is TD error", pass, &format!("max abs err {worst:.2e}, td exact {td_exact}"));
}

#[test]
fn criterion_07_hand_computed_losses() {
    let a = clipped_surrogate(1.5, 1.0, 0.2).0;
    let b = clipped_surrogate(0.5, -1.0, 0.2).0;
    let y = soft_target(1.0, false, 2.0, 0.2, -1.0, 0.99);
    let mut opt = Adam::new(1);
    let mut theta = [0.0];
    opt.step(&mut [&mut theta[..]], &[&[1.0][..]], 1e-3, None).unwrap();
    let checks = [
        ("ppo 1.2", a, 1.2),
        ("ppo -0.8", b, -0.8),
        ("sac 3.178", y, 1.0 + 0.99 * (2.0 + 0.2)),
        ("sac 3.178 literal", y, 3.178),
        ("adam formula", theta[0], -1e-3 / (1.0 + 1e-8)),
        ("adam literal", theta[0], -0.000999999),
    ];
    let worst = checks.iter().map(|(_, got, want)| (got - want).abs()).fold(0.0, f64::max);
    let detail = checks.iter().map(|(n, g, _)| format!("{n}={g}")).collect::<Vec<_>>().join(", ");
    report(7, "clipped objective, soft target, Adam first step", worst <= 1e-9, &detail);
}

#[test]
fn criterion_08_reward_function() {
    let cfg = RewardConfig::default();
    let r1 = compute_reward(0.0, 0.0, &[0.0; 6], 0.0, 0.0, &cfg, KnobType::Pull);
    let r2 = compute_reward(0.5, 0.0, &[0.0; 6], 0.0, 0.0, &cfg, KnobType::Pull);
    let r3 = compute_reward(0.1, 0.3, &[2.0, 0.0, 0.0], 0.2, 0.5, &cfg, KnobType::Lever);
    let hand = [
        (r1, -(0.005f64).ln(), 5.298317),
        (r2, -0.5 - (0.505f64).ln(), 0.183197),
        (r3, -0.1 - (0.105f64).ln() - 0.3 - 2.0 + 30.0 * 0.2 + 50.0 * 0.5, 30.853795),
    ];
    let mut pass = hand.iter().all(|(got, exact, printed)| (got - exact).abs() <= 1e-9 && (got - printed).abs() < 1e-6);

    let mut rng = stream(derive_seed(SEED, &[8]));
    let mut violations = 0;
    for _ in 0..10_000 {
        let knob = KnobType::ALL[rng.random_range(0..3)];
        let d = rng.random_range(1e-3..2.0);
        let o = rng.random_range(0.0..3.0);
        let u: Vec<f64> = (0..6).map(|_| rng.random_range(-1.0..1.0)).collect();
        let phi = rng.random_range(0.0..1.5);
        let psi = rng.random_range(0.0..1.4);
        let delta = rng.random_range(1e-3..0.5);
        let base = compute_reward(d, o, &u, phi, psi, &cfg, knob);
        let bigger_u: Vec<f64> = u.iter().map(|x| x * (1.0 + delta)).collect();
        let ok = compute_reward(d + delta, o, &u, phi, psi, &cfg, knob) < base
            && compute_reward(d, o + delta, &u, phi, psi, &cfg, knob) < base
            && compute_reward(d, o, &bigger_u, phi, psi, &cfg, knob) < base
            && compute_reward(d, o, &u, phi + delta, psi, &cfg, knob) > base
            && match knob {
                KnobType::Pull => compute_reward(d, o, &u, phi, psi + delta, &cfg, knob) == base,
                _ => compute_reward(d, o, &u, phi, psi + delta, &cfg, knob) > base,
            };
        if !ok {
            violations += 1;
        }
    }
    pass &= violations == 0;
    let detail = format!("examples {:.6}/{:.6}/{:.6}, {violations} monotonicity violations in 10^4 draws", r1, r2, r3);
    report(8, "reward examples and monotonicity", pass, &detail);
}

#[test]
fn criterion_09_success_and_metric_semantics() {
    let c = SuccessCriterion::default();
    let mut pass = success_indicator(0.2, Some(1.0), &c) == 0
        && success_indicator(0.2 + 1e-12, Some(1.0), &c) == 1
        && success_indicator(0.5, Some(10.2), &c) == 0
        && success_indicator(0.5, None, &c) == 0;

    let failures: Vec<WorldResult> = (0..5)
        .map(|i| WorldResult {
            world_id: format!("w{i}"),
            success: 0,
            t_open: None,
            phi_max: 0.1,
        })
        .collect();
    let (asr, at) = aggregate(&failures);
    pass &= asr == 0.0 && at.is_none() && format_at(at) == "N/A";
    pass &= aggregate(&[]).1.is_none();

    let cfg = EnvConfig {
        mode: KnobEstimateMode::noisy(0.05),
        ..EnvConfig::default()
    };
    let r = evaluate(&ScriptedOracle::default(), &pull_hook_worlds(), &cfg, SEED, 1).unwrap();
    let n = r.results.len() as f64;
    let wins: Vec<&WorldResult> = r.results.iter().filter(|w| w.success == 1).collect();
    let asr = wins.len() as f64 / n;
    let mut total = 0.0;
    for w in &wins {
        total += w.t_open.unwrap();
    }
    let at = (!wins.is_empty()).then(|| total / wins.len() as f64);
    pass &= asr == r.r_asr && at == r.r_at;
    pass &= r.results.iter().all(|w| (w.success == 1) == w.t_open.is_some());
    pass &= r.r_at.is_none_or(|t| t > 0.0 && t <= c.time_limit_s);
    let detail = format!("recomputed r_ASR={asr:.2} r_AT={}", format_at(at));
    report(9, "success boundaries, empty r_AT, metric recomputation", pass, &detail);
}

fn dir_bytes(dir: &std::path::Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<_> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .collect();
    files.sort();
    files
        .into_iter()
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read(&p).unwrap()))
        .collect()
}

#[test]
fn criterion_10_determinism() {
    let tmp = tempfile::tempdir().unwrap();

    let mut worlds = Vec::new();
    for (i, threads) in [1, 4, 1].into_iter().enumerate() {
        let dir = tmp.path().join(format!("worlds{i}"));
        pool(threads)
            .install(|| generate_world_set(SEED, 100, KnobType::Lever, OpenDirection::Push, &dir))
            .unwrap();
        assert!(dir.join(MANIFEST_FILE).exists());
        worlds.push(dir_bytes(&dir));
    }
    let worlds_ok = worlds.windows(2).all(|w| w[0] == w[1]);

    let train = sample_worlds(SEED, 8, KnobType::Pull, OpenDirection::Pull);
    let probe = sample_worlds(SEED + 1, 8, KnobType::Pull, OpenDirection::Pull);
    let cfg = PpoTrainConfig {
        ppo: PpoConfig {
            workers: 4,
            episodes_per_worker: 2,
            episode_steps: 64,
            minibatch: 64,
            epochs: 2,
            ..Default::default()
        },
        updates: 3,
        seed: 9,
        ..Default::default()
    };
    let mut runs = Vec::new();
    for (i, threads) in [1, 3, 1].into_iter().enumerate() {
        let dir = tmp.path().join(format!("ppo{i}"));
        pool(threads)
            .install(|| train_ppo(&cfg, &train, &probe, Some(&dir), |_| ControlFlow::Continue(())))
            .unwrap();
        runs.push(dir_bytes(&dir));
    }
    let ppo_ok = runs.windows(2).all(|w| w[0] == w[1]);

    let eval_worlds = &pull_hook_worlds()[..40];
    let ecfg = EnvConfig {
        mode: KnobEstimateMode::noisy(0.02),
        ..EnvConfig::default()
    };
    let reports: Vec<(String, String)> = [1, 4, 1]
        .into_iter()
        .map(|threads| {
            let r = pool(threads)
                .install(|| evaluate(&ScriptedOracle::default(), eval_worlds, &ecfg, SEED, 2))
                .unwrap();
            (r.to_json(), r.to_csv())
        })
        .collect();
    let eval_ok = reports.windows(2).all(|w| w[0] == w[1]);

    let detail = format!("worldgen {worlds_ok}, ppo log+checkpoints {ppo_ok}, eval report {eval_ok}");
    report(10, "byte-identical outputs across reruns and thread counts", worlds_ok && ppo_ok && eval_ok, &detail);
}

#[test]
fn criterion_11_randomization_ranges() {
    let mut out_of_range = 0;
    let mut lossy = 0;
    let mut total = 0;
    for (k, knob) in KnobType::ALL.into_iter().enumerate() {
        for (d, dir) in [OpenDirection::Pull, OpenDirection::Push].into_iter().enumerate() {
            let n = if k == 0 && d == 0 { 10_000 } else { 1_000 };
            for w in sample_worlds(derive_seed(SEED, &[11, k as u64, d as u64]), n, knob, dir) {
                total += 1;
                let inside = FIELD_RANGES.iter().all(|f| {
                    let v = (f.get)(&w);
                    v >= f.lo && v <= f.hi
                });
                if !inside || w.validate().is_err() || w.knob_mass_kg != w.knob_mass_raw / 10.0 {
                    out_of_range += 1;
                }
                if WorldSpec::from_json_str(&w.to_json_string()).ok().as_ref() != Some(&w) {
                    lossy += 1;
                }
            }
        }
    }
    let pass = out_of_range == 0 && lossy == 0;
    let detail = format!("{total} worlds, {out_of_range} out of range, {lossy} lossy round-trips");
    report(11, "every sampled field in range, lossless round-trip", pass, &detail);
}

/// Closed-form free response of `I x'' + c x' + k x = 0` from rest at `x0`.
fn damped_response(inertia: f64, c: f64, k: f64, x0: f64, t: f64) -> f64 {
    let disc = c * c - 4.0 * k * inertia;
    let sigma = c / (2.0 * inertia);
    if disc > 1e-12 {
        let root = disc.sqrt() / (2.0 * inertia);
        let (r1, r2) = (-sigma + root, -sigma - root);
        let a = -r2 * x0 / (r1 - r2);
        a * (r1 * t).exp() + (x0 - a) * (r2 * t).exp()
    } else if disc < -1e-12 {
        let wd = (-disc).sqrt() / (2.0 * inertia);
        (-sigma * t).exp() * (x0 * (wd * t).cos() + sigma * x0 / wd * (wd * t).sin())
    } else {
        (x0 + sigma * x0 * t) * (-sigma * t).exp()
    }
}

fn parked_state(model: &DoorModel, arm: ArmType) -> SimState {
    let mut s = model.init_state(arm, 0);
    s.q[0] = 1.5;
    s.q[2] = 0.3;
    s.q[3..6].fill(0.0);
    s.latched = false;
    s
}

fn damped_door_worst_error(constants: &DynamicsConstants) -> f64 {
    let mut worst: f64 = 0.0;
    for (i, dir) in [OpenDirection::Pull, OpenDirection::Push].into_iter().enumerate() {
        for mut w in sample_worlds(derive_seed(SEED, &[12, i as u64]), 10, KnobType::Pull, dir) {
            w.frame_frictionloss = 0.0;
            let model = DoorModel::new(&w, constants);
            let inertia = w.door_mass_kg * w.door_width_m.powi(2) / 3.0;
            let c = w.frame_damper * constants.frame_damping;
            let k = w.frame_spring * constants.frame_stiffness;
            let mut s = parked_state(&model, ArmType::FloatingHook);
            let x0 = 0.3;
            s.phi = x0;
            let zero = vec![0.0; 6];
            for _ in 0..50 {
                s = model.step_physics(&s, &zero).unwrap();
                let want = damped_response(inertia, c, k, x0, s.t);
                if want <= 0.0 {
                    break;
                }
                worst = worst.max((s.phi - want).abs() / want);
            }
        }
    }
    worst
}

fn passivity_violations(constants: &DynamicsConstants) -> usize {
    let mut rng = stream(derive_seed(SEED, &[12, 2]));
    let mut violations = 0;
    for ep in 0..1000u64 {
        let knob = KnobType::ALL[(ep % 3) as usize];
        let dir = if ep % 2 == 0 { OpenDirection::Pull } else { OpenDirection::Push };
        let arm = if ep % 4 < 2 { ArmType::FloatingHook } else { ArmType::FloatingGripper };
        let w = doorsim_core::worldgen::sample_world(derive_seed(SEED, &[12, 3]), ep, knob, dir);
        let model = DoorModel::new(&w, constants);
        let mut s = parked_state(&model, arm);
        s.phi = rng.random_range(0.0..1.5);
        s.phi_dot = rng.random_range(-2.0..2.0);
        if knob != KnobType::Pull {
            s.psi = rng.random_range(0.0..w.knob_rot_range_rad);
            s.psi_dot = rng.random_range(-3.0..3.0);
        }
        let zero = vec![0.0; arm.dof()];
        let mut energy = model.energy(&s);
        for _ in 0..100 {
            s = model.step_physics(&s, &zero).unwrap();
            let next = model.energy(&s);
            if next > energy * (1.0 + 1e-9) + 1e-12 || s.attached {
                violations += 1;
                break;
            }
            energy = next;
        }
    }
    violations
}

fn latch_moves(constants: &DynamicsConstants) -> usize {
    let mut moved = 0;
    for knob in [KnobType::Lever, KnobType::Round] {
        for dir in [OpenDirection::Pull, OpenDirection::Push] {
            for arm in [ArmType::FloatingHook, ArmType::FloatingGripper] {
                for w in sample_worlds(derive_seed(SEED, &[12, 4]), 5, knob, dir) {
                    let model = DoorModel::new(&w, constants);
                    let mut s = model.init_state(arm, 1);
                    let grasp = model.knob_grasp_point(&s);
                    let n = model.door_normal(0.0);
                    s.q[..3].copy_from_slice(&grasp);
                    s.q[3] = 0.0;
                    s.q[4] = 0.0;
                    s.q[5] = n[1].atan2(n[0]);
                    if arm == ArmType::FloatingGripper {
                        s.q[6] = 0.0;
                    }
                    for sign in [1.0, -1.0] {
                        let mut t = s.clone();
                        let mut u = vec![0.0; arm.dof()];
                        u[0] = 0.5 * sign;
                        if arm == ArmType::FloatingGripper {
                            u[6] = -1.0;
                        }
                        for _ in 0..100 {
                            t = model.step_physics(&t, &u).unwrap();
                        }
                        if t.phi != 0.0 || !t.latched || t.psi >= model.unlatch_angle() {
                            moved += 1;
                        }
                    }
                }
            }
        }
    }
    moved
}

#[test]
fn criterion_12_physics_sanity() {
    let constants = DynamicsConstants::default();
    let worst = damped_door_worst_error(&constants);
    let violations = passivity_violations(&constants);
    let moved = latch_moves(&constants);
    let pass = worst < 0.05 && violations == 0 && moved == 0;
    let detail = format!(
        "free response max rel err {:.2}%, {violations}/1000 energy increases, {moved} latched doors moved",
        worst * 100.0
    );
    report(12, "damped door, passivity, latch", pass, &detail);
}

#[test]
fn criterion_13_randomization_ablation() {
    let cfg = AblationConfig {
        seed: SEED,
        ..AblationConfig::default()
    };
    assert_eq!(cfg.train.updates, 75);
    let r = run_ablation(&cfg, |_, _| {}).unwrap();
    let asr = |p, t| r.cell(p, t).unwrap().r_asr;
    let b = asr(POLICY_RANDOMIZED, TEST_RANDOMIZED);
    let a = asr(POLICY_SINGLE, TEST_RANDOMIZED);
    let detail = format!(
        "randomized-trained {b:.2} vs single-env-trained {a:.2} on randomized set; on env1 {:.2}/{:.2}",
        asr(POLICY_RANDOMIZED, TEST_ENV1),
        asr(POLICY_SINGLE, TEST_ENV1)
    );
    report(13, "randomized training generalizes at least as well", b >= a, &detail);
}
