use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

const TINY: &str = r#"{
  "n_trajectories": 12,
  "traj_len": 30,
  "hidden": 8,
  "trans_hidden": 6,
  "batch": 16,
  "iterations": 20,
  "eval_every": 10,
  "n_val": 4,
  "n_test": 8,
  "n_seeds": 1,
  "baseline_k": [2],
  "eps_count": [0.02],
  "spectral_max_points": 60,
  "n_neighbors": 5,
  "grid": 6
}"#;

fn cigan(dir: &Path, args: &[&str]) -> Output {
    let cfg = dir.join("tiny.json");
    if !cfg.exists() {
        fs::write(&cfg, TINY).unwrap();
    }
    Command::new(env!("CARGO_BIN_EXE_cigan"))
        .args(args)
        .arg("--config")
        .arg(&cfg)
        .arg("--out")
        .arg(dir.join("out"))
        .env("RUST_LOG", "warn")
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

#[test]
fn gen_data_is_reproducible_and_counted() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    for d in [&a, &b] {
        let o = cigan(d.path(), &["gen-data", "--seed", "2", "--set", "domain=door_key"]);
        assert_eq!(code(&o), 0, "{o:?}");
    }
    let data = |d: &Path| d.join("out/data/door_key/seed2");
    for f in ["pairs.jsonl", "trajectories.jsonl", "domain.json"] {
        assert_eq!(fs::read(data(a.path()).join(f)).unwrap(), fs::read(data(b.path()).join(f)).unwrap(), "{f}");
    }
    let manifest: Value = serde_json::from_str(&fs::read_to_string(data(a.path()).join("manifest.json")).unwrap()).unwrap();
    let lines = fs::read_to_string(data(a.path()).join("pairs.jsonl")).unwrap().lines().count();
    assert_eq!(manifest["info"]["n_pairs"].as_u64().unwrap() as usize, lines);
    assert_eq!(manifest["info"]["seed"], 2);

    // the effective config alone reproduces the dataset
    let c = tempfile::tempdir().unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_cigan"))
        .args(["gen-data", "--config"])
        .arg(data(a.path()).join("config.json"))
        .arg("--out")
        .arg(c.path())
        .env("RUST_LOG", "warn")
        .output()
        .unwrap();
    assert_eq!(code(&o), 0, "{o:?}");
    assert_eq!(
        fs::read(c.path().join("data/door_key/seed2/pairs.jsonl")).unwrap(),
        fs::read(data(a.path()).join("pairs.jsonl")).unwrap()
    );
}

#[test]
fn train_resume_and_plan() {
    let d = tempfile::tempdir().unwrap();
    let o = cigan(d.path(), &["train", "--set", "iterations=10"]);
    assert_eq!(code(&o), 0, "{o:?}");
    let o = cigan(d.path(), &["train", "--resume"]);
    assert_eq!(code(&o), 0, "{o:?}");
    let run = d.path().join("out/train/tunnel/seed0");
    let csv = fs::read_to_string(run.join("metrics.csv")).unwrap();
    let iters: Vec<&str> = csv.lines().skip(1).map(|l| l.split(',').next().unwrap()).collect();
    assert_eq!(iters, ["10", "20"]);
    let best = run.join("best.json");
    let ck: Value = serde_json::from_str(&fs::read_to_string(&best).unwrap()).unwrap();
    assert_eq!(ck["format"], "cigan-checkpoint-v1");
    let best = best.to_str().unwrap();

    let o = cigan(d.path(), &["plan", "--checkpoint", best, "--start", "-0.5,0.5", "--goal", "-0.5,0.5"]);
    assert_eq!(code(&o), 0, "{o:?}");
    assert!(stdout(&o).starts_with("score 1\n"), "{}", stdout(&o));
    let w: Value = serde_json::from_str(&fs::read_to_string(d.path().join("out/plan/walkthrough.json")).unwrap()).unwrap();
    let keys: Vec<&str> = w.as_object().unwrap().keys().map(String::as_str).collect();
    assert_eq!(keys, ["empty", "latent", "obs", "score"]);
    assert!(w["latent"].is_array() && w["score"].is_number() && w["empty"].is_boolean());
    assert_eq!(w["obs"][0], serde_json::json!([-0.5, 0.5]));
    assert!(fs::read_to_string(d.path().join("out/plan/walkthrough.svg")).unwrap().contains("<polyline"));

    // an edge threshold of 1 leaves no edges, so distinct encodings have no path
    let mut saw_empty = false;
    for goal in ["0.9,-0.9", "0.9,0.9", "-0.9,-0.9", "0.1,-0.5"] {
        let o = cigan(d.path(), &["plan", "--checkpoint", best, "--start", "-0.9,0.9", "--goal", goal, "--set", "eps_edge=1.0"]);
        assert_eq!(code(&o), 0, "{o:?}");
        if stdout(&o).trim() == "no path" {
            saw_empty = true;
            let w: Value = serde_json::from_str(&fs::read_to_string(d.path().join("out/plan/walkthrough.json")).unwrap()).unwrap();
            assert_eq!(w["empty"], true);
        }
    }
    assert!(saw_empty);

    let o = cigan(d.path(), &["plan", "--checkpoint", best, "--start", "x,1", "--goal", "0,0"]);
    assert_eq!(code(&o), 1);
    let o = cigan(d.path(), &["plan", "--checkpoint", best, "--start", "0,0,0", "--goal", "0,0"]);
    assert_eq!(code(&o), 1);
}

#[test]
fn table2_fills_every_cell_and_reuses_stages() {
    let d = tempfile::tempdir().unwrap();
    let o = cigan(d.path(), &["table2"]);
    assert_eq!(code(&o), 0, "{o:?}");
    assert!(stdout(&o).contains("0 of 9 stages served from cache"), "{}", stdout(&o));
    let first = fs::read(d.path().join("out/table2/report.json")).unwrap();
    let report: Value = serde_json::from_slice(&first).unwrap();
    let cells = report["table"]["cells"].as_array().unwrap();
    assert_eq!(cells.len(), 12);
    assert!(cells.iter().all(|c| c["mean"].is_number()));
    let md = fs::read_to_string(d.path().join("out/table2/report.md")).unwrap();
    for c in cells {
        assert!(md.contains(&format!("{:.1}%", 100.0 * c["mean"].as_f64().unwrap())));
    }

    let o = cigan(d.path(), &["table2"]);
    assert!(stdout(&o).contains("9 of 9 stages served from cache"), "{}", stdout(&o));
    assert_eq!(fs::read(d.path().join("out/table2/report.json")).unwrap(), first);

    let o = cigan(d.path(), &["plots", "--set", "domain=rescaled_door_key"]);
    assert_eq!(code(&o), 0, "{o:?}");
    let out = stdout(&o);
    for f in ["clusters_cigan_key.svg", "key_transition_kmeans.svg", "walkthroughs.svg", "key_field.json"] {
        assert!(out.contains(f), "{out}");
    }
    let o = cigan(d.path(), &["eval", "--set", "domain=tunnel"]);
    assert_eq!(code(&o), 0, "{o:?}");
    assert_eq!(stdout(&o).lines().filter(|l| l.ends_with('%')).count(), 4);
}

#[test]
fn usage_errors_exit_one() {
    let d = tempfile::tempdir().unwrap();
    for args in [
        vec!["frobnicate"],
        vec!["train", "--no-such-flag"],
        vec!["train", "--set", "unknown_key=3"],
        vec!["train", "--set", "iterations"],
        vec!["gen-data", "--seed", "minus"],
        vec!["plan", "--start", "0,0"],
    ] {
        assert_eq!(code(&cigan(d.path(), &args)), 1, "{args:?}");
    }
    let o = Command::new(env!("CARGO_BIN_EXE_cigan")).args(["train", "--config", "/no/such/file.json"]).output().unwrap();
    assert_eq!(code(&o), 1);
    assert_eq!(code(&Command::new(env!("CARGO_BIN_EXE_cigan")).arg("--help").output().unwrap()), 0);
}

#[test]
fn runtime_failures_exit_two() {
    let d = tempfile::tempdir().unwrap();
    let o = cigan(d.path(), &["plan", "--checkpoint", "/no/such/ckpt.json", "--start", "0,0", "--goal", "0,0"]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("ckpt.json"));
    // output location blocked by a regular file
    let blocker = d.path().join("blocked");
    fs::write(&blocker, "").unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_cigan"))
        .args(["gen-data", "--set", "n_trajectories=2", "--out"])
        .arg(&blocker)
        .output()
        .unwrap();
    assert_eq!(code(&o), 2);
}
