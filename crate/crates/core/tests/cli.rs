use std::path::Path;
use std::process::{Command, Output};

fn entroseed(args: &[&str], envs: &[(&str, &Path)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_entroseed"));
    cmd.args(args).env_remove("ENTROSEED_OUT");
    for (k, v) in envs {
        cmd.env(k, v);
    }
    cmd.output().unwrap()
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn usage_errors_exit_with_2() {
    assert_eq!(entroseed(&[], &[]).status.code(), Some(2));
    assert_eq!(entroseed(&["init", "--env"], &[]).status.code(), Some(2));
    assert_eq!(entroseed(&["study", "bogus", "--config", "x"], &[]).status.code(), Some(2));
}

#[test]
fn init_then_train_then_measure() {
    let dir = tempfile::tempdir().unwrap();
    let model = dir.path().join("m.json");
    let out = entroseed(
        &["init", "--env", "gridworld-4", "--seed", "3", "--out", path(&model), "--actors", "4", "--horizon", "16"],
        &[],
    );
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let log = std::fs::read_to_string(dir.path().join("m.attempts.csv")).unwrap();
    assert_eq!(log.lines().next().unwrap(), "attempt,seed,entropy,elapsed_sec");

    let curve = dir.path().join("curve.csv");
    let out = entroseed(
        &["train", "--env", "gridworld-4", "--model", path(&model), "--iters", "2", "--seed", "1", "--out-curve", path(&curve)],
        &[],
    );
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let text = std::fs::read_to_string(&curve).unwrap();
    assert_eq!(text.lines().next().unwrap(), "iteration,mean_return,episodes,elapsed_sec");
    assert_eq!(text.lines().count(), 3);

    let h = dir.path().join("h.csv");
    let out = entroseed(&["measure-entropy", "--env", "gridworld-4", "--model", path(&model), "--out", path(&h)], &[]);
    assert_eq!(out.status.code(), Some(0));
    assert!(dir.path().join("h.summary.json").exists());

    // A snapshot for the wrong task is a runtime error.
    let out = entroseed(&["measure-entropy", "--env", "catch-5x7", "--model", path(&model), "--out", path(&h)], &[]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn exhaustion_exits_with_3_and_keeps_the_log() {
    let dir = tempfile::tempdir().unwrap();
    let model = dir.path().join("m.json");
    let out = entroseed(
        &[
            "init", "--env", "gridworld-4", "--threshold", "1.38", "--max-attempts", "3",
            "--output-gain", "1000", "--actors", "2", "--horizon", "8", "--out", path(&model),
        ],
        &[],
    );
    assert_eq!(out.status.code(), Some(3));
    assert!(!model.exists());
    let log = std::fs::read_to_string(dir.path().join("m.attempts.csv")).unwrap();
    assert_eq!(log.lines().count(), 4);
}

#[test]
fn output_dir_env_var_overrides_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("study.toml");
    std::fs::write(
        &cfg,
        "version = 1\nstudy_kind = \"histogram\"\nenv_ids = [\"gridworld-4\"]\nn_seeds = 3\n\
         output_dir = \"/nonexistent/never\"\n\n[init]\nh_th = 0.5\nactors = 2\nhorizon = 8\n",
    )
    .unwrap();
    let target = dir.path().join("elsewhere");
    let out = entroseed(
        &["study", "histogram", "--config", path(&cfg), "--no-timing"],
        &[("ENTROSEED_OUT", &target)],
    );
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(target.join("histogram_raw.csv").exists());

    let out = entroseed(&["study", "scatter", "--config", path(&cfg)], &[("ENTROSEED_OUT", &target)]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn missing_threshold_is_reported_by_name() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("study.toml");
    std::fs::write(
        &cfg,
        "version = 1\nstudy_kind = \"histogram\"\nenv_ids = [\"gridworld-4\"]\noutput_dir = \"o\"\n\n[init]\nactors = 2\n",
    )
    .unwrap();
    let out = entroseed(&["study", "histogram", "--config", path(&cfg)], &[]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("h_th"));
}
