use std::path::Path;
use std::process::{Command, Output};

use erlq_cli::output::HISTORY_COLUMNS;
use erlq_cli::ExperimentConfig;

const BIN: &str = env!("CARGO_BIN_EXE_erlq");

fn erlq(args: &[&str]) -> Output {
    Command::new(BIN)
        .args(args)
        .env_remove("ERLQ_SEED")
        .output()
        .expect("binary runs")
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p.display().to_string()
}

const SHORT_RUN: &str = r#"{"sbrpg": {"m": 200, "n_iter": 15}, "output": {"svg": false}}"#;

#[test]
fn history_header_is_stable() {
    let golden = "iter,f,f_estimate,gap,relative_gap,k_err_sq,sigma_err_sq,eta1,eta2,phi,s_hat,\
                  grad_k_std,grad_sigma_std,rejected,backtracks,oracle_eval";
    assert_eq!(HISTORY_COLUMNS.join(","), golden);
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(tmp.path(), "c.json", SHORT_RUN);
    let out = tmp.path().join("o");
    let o = erlq(&["sbrpg", "-c", &cfg, "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = std::fs::read_to_string(out.join("sbrpg.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next().unwrap(), golden);
    let iters: Vec<usize> = lines.map(|l| l.split(',').next().unwrap().parse().unwrap()).collect();
    assert_eq!(iters, (0..=15).collect::<Vec<_>>());
}

#[test]
fn same_seed_same_bytes_across_thread_counts() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(tmp.path(), "c.json", SHORT_RUN);
    let run = |name: &str, threads: &str, seed: &str| {
        let out = tmp.path().join(name);
        let o = erlq(&["sbrpg", "-c", &cfg, "--seed", seed, "--threads", threads, "--out", out.to_str().unwrap()]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        std::fs::read(out.join("sbrpg.csv")).unwrap()
    };
    let a = run("a", "1", "7");
    let b = run("b", "4", "7");
    let c = run("c", "4", "7");
    let d = run("d", "1", "8");
    assert_eq!(a, b);
    assert_eq!(b, c);
    assert_ne!(a, d);
}

#[test]
fn meta_config_round_trips() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("o");
    let o = erlq(&["solve", "--seed", "3", "--out", out.to_str().unwrap()]);
    assert!(o.status.success());
    let meta: serde_json::Value = serde_json::from_slice(&std::fs::read(out.join("meta.json")).unwrap()).unwrap();
    let cfg = erlq_cli::config::parse(&meta["config"].to_string()).unwrap();
    assert_eq!(cfg.seed, Some(3));
    assert_eq!(cfg.output.dir, out);
    assert_eq!(meta["config_hash"].as_str().unwrap(), cfg.hash());
    assert_eq!(meta["command"], "solve");
    // Re-running from the emitted config reproduces the report in place.
    let before = std::fs::read(out.join("riccati.json")).unwrap();
    std::fs::remove_file(out.join("riccati.json")).unwrap();
    let again = erlq(&["solve", "-c", &write(tmp.path(), "m.json", &meta["config"].to_string())]);
    assert!(again.status.success());
    assert_eq!(std::fs::read(out.join("riccati.json")).unwrap(), before);
}

#[test]
fn solve_reaches_residual() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("o");
    assert!(erlq(&["solve", "--out", out.to_str().unwrap()]).status.success());
    let r: serde_json::Value = serde_json::from_slice(&std::fs::read(out.join("riccati.json")).unwrap()).unwrap();
    assert!(r["residual"].as_f64().unwrap() <= 1e-12);
    assert!(r["grad_k_norm"].as_f64().unwrap() <= 1e-8);
}

#[test]
fn config_errors_exit_one_with_key_path() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(tmp.path(), "bad.json", r#"{"sbrpg": {"m": 10, "radius": 0.1}}"#);
    let o = erlq(&["sbrpg", "-c", &cfg, "--out", tmp.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("sbrpg.radius"));

    let o = erlq(&["solve", "-c", "/nonexistent/erlq.json"]);
    assert_eq!(o.status.code(), Some(1));
    let o = erlq(&["no-such-command"]);
    assert_eq!(o.status.code(), Some(1));
    let o = erlq(&["paper-exp", "-c", &cfg]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn numerical_errors_exit_two_naming_the_operation() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(tmp.path(), "c.json", r#"{"policy": {"k": [5, 5, 5]}}"#);
    let o = erlq(&["eval", "-c", &cfg, "--out", tmp.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("p_k"));
}

#[test]
fn env_seed_is_the_lowest_priority() {
    let tmp = tempfile::tempdir().unwrap();
    let run = |args: &[&str], cfg: Option<&str>| {
        let out = tmp.path().join("o");
        let mut cmd = Command::new(BIN);
        cmd.args(["solve", "--out", out.to_str().unwrap()]).args(args).env("ERLQ_SEED", "11");
        if let Some(c) = cfg {
            cmd.args(["-c", c]);
        }
        assert!(cmd.output().unwrap().status.success());
        let meta: serde_json::Value = serde_json::from_slice(&std::fs::read(out.join("meta.json")).unwrap()).unwrap();
        meta["seed"].as_u64().unwrap()
    };
    assert_eq!(run(&[], None), 11);
    let cfg = write(tmp.path(), "s.json", r#"{"seed": 5}"#);
    assert_eq!(run(&[], Some(&cfg)), 5);
    assert_eq!(run(&["--seed", "2"], Some(&cfg)), 2);
}

#[test]
fn every_command_writes_its_report() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(
        tmp.path(),
        "c.json",
        r#"{"rpg": {"epsilon": 1e-3}, "gradcheck": {"policies": 5}, "sbrpg": {"m": 50, "n_iter": 3}}"#,
    );
    let out = tmp.path().join("o");
    let o = out.to_str().unwrap();
    for (cmd, file) in [
        ("solve", "riccati.json"),
        ("eval", "eval.json"),
        ("rpg", "rpg_gap.svg"),
        ("gradcheck", "gradcheck.csv"),
        ("bounds", "bounds.json"),
        ("sbrpg", "sbrpg_sigma_err.svg"),
    ] {
        let r = erlq(&[cmd, "-c", &cfg, "--out", o]);
        assert!(r.status.success(), "{cmd}: {}", String::from_utf8_lossy(&r.stderr));
        assert!(out.join(file).is_file(), "{cmd} did not write {file}");
    }
    for f in ["rpg.csv", "sbrpg.csv", "sbrpg_cost.svg", "sbrpg_relative_gap.svg", "sbrpg_k_err.svg", "meta.json"] {
        assert!(out.join(f).is_file(), "missing {f}");
    }
    let b: serde_json::Value = serde_json::from_slice(&std::fs::read(out.join("bounds.json")).unwrap()).unwrap();
    assert!(b["report"]["n_sb"].as_f64().unwrap() >= b["report"]["n_rpg"].as_f64().unwrap());
}

#[test]
fn slack_adds_one_to_rollout_lengths() {
    let tmp = tempfile::tempdir().unwrap();
    let read = |name: &str, extra: &[&str]| {
        let out = tmp.path().join(name);
        let mut args = vec!["bounds", "--out", out.to_str().unwrap()];
        args.extend_from_slice(extra);
        assert!(erlq(&args).status.success());
        let v: serde_json::Value = serde_json::from_slice(&std::fs::read(out.join("bounds.json")).unwrap()).unwrap();
        v["report"]["l_k"].as_f64().unwrap()
    };
    assert_eq!(read("a", &[]) + 1.0, read("b", &["--slack"]));
}

#[test]
fn default_config_is_the_preset() {
    assert_eq!(erlq_cli::paper_exp_config(), ExperimentConfig::default());
    let cfg = erlq_cli::paper_exp_config();
    assert_eq!(cfg.system.a, 0.7);
    assert_eq!(cfg.system.b, vec![0.1, 0.2, 0.3]);
    assert_eq!((cfg.system.c, cfg.system.q, cfg.system.gamma, cfg.system.tau), (0.03, 0.5, 0.5, 0.1));
    assert_eq!(cfg.policy.k, vec![0.0; 3]);
    assert_eq!(cfg.sbrpg.n_iter, 300);
}
