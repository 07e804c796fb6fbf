mod common;

use std::path::Path;
use std::process::{Command, Output};

use coevolve::cli::Summary;
use coevolve::engine::{parse_log, Event};
use serde_json::Value;

use common::fixture;

fn coevolve(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_coevolve"))
        .args(args)
        .env_remove("ESCHER_API_KEY")
        .output()
        .expect("binary runs")
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn summary(dir: &Path) -> Summary {
    serde_json::from_slice(&std::fs::read(dir.join("summary.json")).unwrap()).unwrap()
}

fn eval_json(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).expect("eval prints JSON")
}

#[test]
fn eval_cp_with_25_circles_is_wrong_cardinality() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("c.json");
    let circles: Vec<[f64; 3]> = (0..25)
        .map(|i| [0.1 + 0.2 * (i % 5) as f64, 0.1 + 0.2 * (i / 5) as f64, 0.05])
        .collect();
    std::fs::write(&file, serde_json::json!({"task": "cp", "circles": circles}).to_string()).unwrap();
    let out = coevolve(&["eval", path(&file)]);
    assert_eq!(out.status.code(), Some(1));
    let v = eval_json(&out);
    assert_eq!(v["valid"], false);
    assert!(v["violation"].as_str().unwrap().contains("wrong cardinality"));
}

#[test]
fn eval_ht_repeated_vertices_scores_zero() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("h.json");
    let v = [[0.0, 0.0], [1.0, 0.0], [0.5, 3f64.sqrt() / 2.0]];
    let points: Vec<[f64; 2]> = (0..11).map(|i| v[i % 3]).collect();
    std::fs::write(&file, serde_json::json!({"task": "ht", "points": points}).to_string()).unwrap();
    let out = coevolve(&["eval", path(&file), "--task", "ht"]);
    assert_eq!(out.status.code(), Some(0));
    let r = eval_json(&out);
    assert_eq!(r["valid"], true);
    assert_eq!(r["s_raw"], 0.0);
}

#[test]
fn eval_kn_axis_vectors_scores_22() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("k.json");
    let mut vectors = Vec::new();
    for i in 0..11 {
        for s in [2, -2] {
            let mut v = vec![0; 11];
            v[i] = s;
            vectors.push(v);
        }
    }
    std::fs::write(&file, serde_json::json!({"task": "kn", "vectors": vectors}).to_string()).unwrap();
    let out = coevolve(&["eval", path(&file)]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(eval_json(&out)["s_raw"], 22.0);
}

#[test]
fn eval_fixture_and_missing_file() {
    let out = coevolve(&["eval", path(&fixture("cp_1p0001.json"))]);
    assert_eq!(out.status.code(), Some(0));
    assert!(eval_json(&out)["s_norm"].as_f64().unwrap() > 1.0);
    assert_eq!(coevolve(&["eval", "/nonexistent/x.json", "--task", "cp"]).status.code(), Some(1));
}

#[test]
fn kn_seed_of_582_is_summarized_as_0_9815() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("kn.toml");
    std::fs::write(
        &cfg,
        format!(
            "task = \"kn\"\nseed = 1\nbudget = 1e9\n[seeds]\ntasks = [\"{}\"]\n[loop]\nmax_iterations = 2\ncheckpoint_every = 0\n",
            path(&fixture("kn_582.json"))
        ),
    )
    .unwrap();
    let out_dir = dir.path().join("run");
    let out = coevolve(&["run", "--config", path(&cfg), "--out", path(&out_dir)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let s = summary(&out_dir);
    assert_eq!(s.s_raw, 582.0);
    assert!((s.s_norm - 0.9815).abs() < 5e-5);
}

#[test]
fn budget_contract_and_byte_identical_reruns() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cp.toml");
    std::fs::write(&cfg, "task = \"cp\"\n[loop]\nworkers = 2\n").unwrap();
    let mut bytes = Vec::new();
    for name in ["a", "b"] {
        let out_dir = dir.path().join(name);
        let out = coevolve(&[
            "run", "--config", path(&cfg), "--seed", "7", "--backend", "scripted", "--budget", "50000", "--out",
            path(&out_dir),
        ]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        let s = summary(&out_dir);
        let log = std::fs::read_to_string(out_dir.join("run.jsonl")).unwrap();
        let events = parse_log(&log).unwrap();
        let last_round: f64 = events
            .iter()
            .filter(|e| e.iter() == s.iterations)
            .map(|e| match e {
                Event::Gen { tokens_in, tokens_out, .. } => *tokens_out as f64 + 0.25 * *tokens_in as f64,
                _ => 0.0,
            })
            .sum();
        assert!(s.equivalent_tokens >= 50_000.0);
        assert!(s.equivalent_tokens - last_round < 50_000.0);
        assert!(out_dir.join("ckpt_20").is_dir());
        bytes.push(std::fs::read(out_dir.join("summary.json")).unwrap());
    }
    assert_eq!(bytes[0], bytes[1]);
}

#[test]
fn remote_mode_without_key_exits_3_before_running() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("run");
    let out = coevolve(&["run", "--task", "cp", "--backend", "remote-chat", "--out", path(&out_dir)]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("ESCHER_API_KEY"));
    assert!(!out_dir.join("run.jsonl").exists());
}

#[test]
fn config_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let bad = [
        ("unknown.toml", "task = \"cp\"\ncolour = 1\n"),
        ("budget.toml", "task = \"cp\"\nbudget = -5\n"),
        ("seed.toml", "task = \"cp\"\nseed = \"sometimes\"\n"),
        ("missing.toml", "task = \"cp\"\n[seeds]\ntasks = [\"nope.json\"]\n"),
        ("syntax.toml", "task = \n"),
    ];
    for (name, text) in bad {
        let cfg = dir.path().join(name);
        std::fs::write(&cfg, text).unwrap();
        let out = coevolve(&["run", "--config", path(&cfg), "--out", path(&dir.path().join("o"))]);
        assert_eq!(out.status.code(), Some(2), "{name}: {}", String::from_utf8_lossy(&out.stderr));
    }
    assert_eq!(coevolve(&["run", "--config", "/nonexistent.toml"]).status.code(), Some(2));
    assert_eq!(coevolve(&["run"]).status.code(), Some(2));
}

#[test]
fn reports_from_a_run_log() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("run");
    let out = coevolve(&["run", "--task", "ht", "--seed", "3", "--max-iterations", "15", "--out", path(&out_dir)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let log = std::fs::read_to_string(out_dir.join("run.jsonl")).unwrap();
    let events = parse_log(&log).unwrap();

    let elo = coevolve(&["report", path(&out_dir), "--kind", "elo"]);
    assert!(elo.status.success());
    let text = String::from_utf8(elo.stdout).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("iteration,optimizer_id,rating"));
    let elo_events = events.iter().filter(|e| matches!(e, Event::Elo { .. })).count();
    assert!(elo_events > 0);
    assert_eq!(lines.count(), elo_events);

    let csv = dir.path().join("best.csv");
    let best = coevolve(&["report", path(&out_dir.join("run.jsonl")), "--kind", "best_so_far", "--output", path(&csv)]);
    assert!(best.status.success());
    let text = std::fs::read_to_string(&csv).unwrap();
    let rows: Vec<(f64, f64)> = text
        .lines()
        .skip(1)
        .map(|l| {
            let (a, b) = l.split_once(',').unwrap();
            (a.parse().unwrap(), b.parse().unwrap())
        })
        .collect();
    assert_eq!(rows.len(), events.iter().filter(|e| matches!(e, Event::Eval { .. })).count());
    assert!(rows.windows(2).all(|w| w[0].0 <= w[1].0 && w[0].1 <= w[1].1));
    assert!((rows.last().unwrap().1 - summary(&out_dir).s_norm).abs() < 1e-12);

    let again = coevolve(&["report", path(&out_dir), "--kind", "best_so_far"]);
    assert_eq!(String::from_utf8(again.stdout).unwrap(), text);
}

#[test]
fn report_on_missing_or_corrupt_log_fails() {
    let dir = tempfile::tempdir().unwrap();
    assert_ne!(coevolve(&["report", path(dir.path()), "--kind", "elo"]).status.code(), Some(0));
    let bad = dir.path().join("run.jsonl");
    std::fs::write(&bad, "{\"event\":\"eval\",\"iter\":\n").unwrap();
    assert_ne!(coevolve(&["report", path(&bad), "--kind", "best_so_far"]).status.code(), Some(0));
    std::fs::write(&bad, "").unwrap();
    let empty = coevolve(&["report", path(&bad), "--kind", "best_so_far"]);
    assert!(empty.status.success());
    assert_eq!(String::from_utf8(empty.stdout).unwrap(), "equivalent_tokens,best_norm_score\n");
}

#[test]
fn resume_rejects_non_checkpoint() {
    let dir = tempfile::tempdir().unwrap();
    let out = coevolve(&["resume", path(dir.path())]);
    assert!(matches!(out.status.code(), Some(1) | Some(2)));
}
