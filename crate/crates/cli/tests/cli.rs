use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn doorsim(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_doorsim"))
        .args(args)
        .env_remove("DOORSIM_THREADS")
        .output()
        .expect("binary runs")
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn ok(out: &Output) {
    assert!(
        out.status.success(),
        "exit {:?}\nstdout: {}\nstderr: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
}

/// Asserts the exit code and that stderr is exactly one JSON error line.
fn fails_with(out: &Output, code: i32) -> Value {
    assert_eq!(out.status.code(), Some(code), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let err = String::from_utf8(out.stderr.clone()).unwrap();
    assert_eq!(err.lines().count(), 1, "{err}");
    let v: Value = serde_json::from_str(err.trim()).unwrap();
    assert_eq!(v["exit_code"], code);
    v
}

fn gen(dir: &Path, n: usize, knob: &str) {
    ok(&doorsim(&["gen", "--n", &n.to_string(), "--knob", knob, "--direction", "pull", "--seed", "1", "--out", p(dir)]));
}

#[test]
fn gen_writes_worlds_manifest_and_reproducible_config() {
    let tmp = tempfile::tempdir().unwrap();
    let a = tmp.path().join("a");
    gen(&a, 100, "pull");
    let worlds = fs::read_dir(&a)
        .unwrap()
        .filter(|e| e.as_ref().unwrap().file_name().to_string_lossy().starts_with("world_"))
        .count();
    assert_eq!(worlds, 100);
    assert!(a.join("manifest.json").exists());

    let b = tmp.path().join("b");
    ok(&doorsim(&["gen", "--config", p(&a.join("resolved_config.json")), "--out", p(&b)]));
    for i in [0, 57, 99] {
        let name = format!("world_{i:05}.json");
        assert_eq!(fs::read(a.join(&name)).unwrap(), fs::read(b.join(&name)).unwrap());
    }
    assert_eq!(fs::read(a.join("manifest.json")).unwrap(), fs::read(b.join("manifest.json")).unwrap());
}

#[test]
fn oracle_eval_solves_pull_hook_worlds() {
    let tmp = tempfile::tempdir().unwrap();
    let w = tmp.path().join("w");
    gen(&w, 100, "pull");
    let out = tmp.path().join("eval");
    ok(&doorsim(&["eval", "--oracle", "--worlds", p(&w), "--mode", "gt", "--out", p(&out)]));
    let report: Value = serde_json::from_str(&fs::read_to_string(out.join("eval_report.json")).unwrap()).unwrap();
    assert!(report["r_asr"].as_f64().unwrap() >= 0.9);
    assert_eq!(report["results"].as_array().unwrap().len(), 100);
    let csv = fs::read_to_string(out.join("eval_report.csv")).unwrap();
    assert!(csv.starts_with("world_id,success,t_open,phi_max\n"));
    assert!(out.join("resolved_config.json").exists());

    let again = tmp.path().join("again");
    ok(&doorsim(&["--threads", "2", "eval", "--config", p(&out.join("resolved_config.json")), "--out", p(&again)]));
    assert_eq!(
        fs::read(out.join("eval_report.json")).unwrap(),
        fs::read(again.join("eval_report.json")).unwrap()
    );
}

#[test]
fn ppo_train_one_update_then_eval_and_replay_the_checkpoint() {
    let tmp = tempfile::tempdir().unwrap();
    let w = tmp.path().join("w");
    gen(&w, 10, "pull");
    let mut runs = Vec::new();
    for threads in ["1", "2"] {
        let out = tmp.path().join(format!("ppo{threads}"));
        ok(&doorsim(&["--threads", threads, "train", "--algo", "ppo", "--updates", "1", "--worlds", p(&w), "--out", p(&out)]));
        let checkpoints: Vec<_> = fs::read_dir(&out)
            .unwrap()
            .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
            .filter(|n| n.starts_with("checkpoint_"))
            .collect();
        assert_eq!(checkpoints, vec!["checkpoint_00001.json".to_string()]);
        let log = fs::read_to_string(out.join("train_log.csv")).unwrap();
        assert_eq!(log.lines().count(), 2);
        runs.push((log, fs::read(out.join("checkpoint_00001.json")).unwrap()));
    }
    assert_eq!(runs[0], runs[1]);

    let ck = tmp.path().join("ppo1").join("checkpoint_00001.json");
    let eval = tmp.path().join("eval");
    ok(&doorsim(&["eval", "--checkpoint", p(&ck), "--worlds", p(&w), "--out", p(&eval)]));
    assert!(eval.join("eval_report.json").exists());

    let replay = tmp.path().join("replay");
    ok(&doorsim(&["replay", "--checkpoint", p(&ck), "--world", p(&w), "--index", "3", "--out", p(&replay)]));
    let trace = fs::read_to_string(replay.join("trace.jsonl")).unwrap();
    assert_eq!(trace.lines().count(), 512);
    for line in trace.lines().take(3) {
        let rec: Value = serde_json::from_str(line).unwrap();
        assert_eq!(rec["q"].as_array().unwrap().len(), 6);
    }

    let gripper = doorsim(&["eval", "--checkpoint", p(&ck), "--worlds", p(&w), "--arm", "gripper", "--out", p(&eval)]);
    fails_with(&gripper, 4);
}

#[test]
fn sac_trains_from_a_config_file() {
    let tmp = tempfile::tempdir().unwrap();
    let w = tmp.path().join("w");
    gen(&w, 4, "lever");
    let out = tmp.path().join("sac");
    let cfg = serde_json::json!({
        "command": "train",
        "algo": "sac",
        "worlds": w,
        "probe_worlds": null,
        "out": out,
        "ppo": null,
        "sac": {
            "epochs": 1,
            "sac": { "batch": 16, "episodes_per_epoch": 1, "episode_steps": 40, "replay_capacity": 1000 }
        }
    });
    let cfg_path = tmp.path().join("sac.json");
    fs::write(&cfg_path, cfg.to_string()).unwrap();
    let run = doorsim(&["train", "--config", p(&cfg_path)]);
    ok(&run);
    assert!(out.join("checkpoint_00001.json").exists());
    let log = fs::read_to_string(out.join("train_log.csv")).unwrap();
    assert!(log.starts_with("epoch,env_steps,"));
    assert_eq!(log.lines().count(), 2);
    let resolved: Value = serde_json::from_str(&fs::read_to_string(out.join("resolved_config.json")).unwrap()).unwrap();
    assert_eq!(resolved["sac"]["sac"]["episode_steps"], 40);

    let replay = tmp.path().join("replay");
    let ck = out.join("checkpoint_00001.json");
    ok(&doorsim(&["replay", "--checkpoint", p(&ck), "--world", p(&w), "--out", p(&replay)]));
}

#[test]
fn empty_sweep_is_all_untrained() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("sweep");
    ok(&doorsim(&["eval", "--sweep", "--worlds-per-cell", "3", "--out", p(&out)]));
    let csv = fs::read_to_string(out.join("sweep.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines.len(), 5);
    assert_eq!(lines[0], "arm,direction,pull_asr,pull_at,lever_asr,lever_at,round_asr,round_at");
    for row in &lines[1..] {
        assert_eq!(row.matches("untrained").count(), 6);
    }
}

#[test]
fn oracle_replay_opens_the_door() {
    let tmp = tempfile::tempdir().unwrap();
    let w = tmp.path().join("w");
    gen(&w, 2, "pull");
    let out = tmp.path().join("replay");
    let run = doorsim(&["replay", "--oracle", "--world", p(&w.join("world_00001.json")), "--out", p(&out)]);
    ok(&run);
    let trace = fs::read_to_string(out.join("trace.jsonl")).unwrap();
    let phi_max = trace
        .lines()
        .map(|l| serde_json::from_str::<Value>(l).unwrap()["phi"].as_f64().unwrap())
        .fold(0.0, f64::max);
    assert!(phi_max > 0.2);
}

#[test]
fn errors_are_single_json_lines_with_distinct_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let v = fails_with(&doorsim(&["eval", "--oracle", "--worlds", "/no/such/dir", "--out", p(tmp.path())]), 3);
    assert_eq!(v["error"], "missing_file");
    fails_with(&doorsim(&["gen", "--frobnicate"]), 2);
    fails_with(&doorsim(&["gen", "--n", "0", "--out", p(tmp.path())]), 2);
    fails_with(&doorsim(&["train", "--out", p(tmp.path())]), 2);

    let w = tmp.path().join("w");
    gen(&w, 1, "pull");
    let world = w.join("world_00000.json");
    let text = fs::read_to_string(&world).unwrap().replace("doorgym_world_v1", "doorgym_world_v9");
    fs::write(&world, text).unwrap();
    let v = fails_with(&doorsim(&["eval", "--oracle", "--worlds", p(&world), "--out", p(tmp.path())]), 4);
    assert_eq!(v["error"], "schema");

    let wrong = doorsim(&["train", "--config", p(&w.join("resolved_config.json")), "--out", p(tmp.path())]);
    fails_with(&wrong, 2);

    let bad_threads = Command::new(env!("CARGO_BIN_EXE_doorsim"))
        .args(["config", "--show", "env"])
        .env("DOORSIM_THREADS", "many")
        .output()
        .unwrap();
    fails_with(&bad_threads, 2);
}

#[test]
fn help_lists_flags_with_units_and_defaults() {
    let out = doorsim(&["train", "--help"]);
    ok(&out);
    let help = String::from_utf8(out.stdout).unwrap();
    for needle in ["--updates", "[default: 150]", "--sigma", "metres", "--time-limit", "seconds", "--curriculum", "--threads", "DOORSIM_THREADS"] {
        assert!(help.contains(needle), "missing {needle}");
    }
    let out = doorsim(&["eval", "--help"]);
    let help = String::from_utf8(out.stdout).unwrap();
    for needle in ["--oracle", "--sweep", "--ablation", "--repeats", "[default: 1]", "[default: 75]"] {
        assert!(help.contains(needle), "missing {needle}");
    }
}

#[test]
fn config_show_prints_parseable_defaults() {
    for kind in ["ppo", "sac", "env", "dynamics", "ablation"] {
        let out = doorsim(&["config", "--show", kind]);
        ok(&out);
        let _: Value = serde_json::from_slice(&out.stdout).unwrap();
    }
    let out = doorsim(&["config", "--show", "ppo"]);
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["updates"], 150);
    assert_eq!(v["ppo"]["clip_eps"], 0.2);
}
