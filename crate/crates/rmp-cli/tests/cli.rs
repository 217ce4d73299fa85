//! End-to-end tests of the `rmp` binary: exit codes, artifact shapes, and
//! byte-level reproducibility.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_rmp")
}

fn workspace_config(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../configs")
        .join(name)
}

/// A small configuration so end-to-end runs stay fast.
fn small_run_config(kind: &str, extra: &str) -> String {
    format!(
        r#"
[model]
weights = [0.5, 0.5]
means = [[-1.0], [1.0]]
variances = [0.04, 0.04]

[measurement]
matrix = [[1.0]]
noise_std = 0.5

[diffusion]
kind = "vp"
steps = 50
beta_min = 1e-4
beta_max = 0.02

[solver]
mean_step = 0.9
seed = 3

[guidance]
kind = "prior-free"

[experiment]
kind = "{kind}"
{extra}
"#
    )
}

fn run(args: &[&str]) -> Output {
    Command::new(bin())
        .args(args)
        .env_remove("RMP_OUT_ROOT")
        .output()
        .expect("binary should execute")
}

#[test]
fn run_emits_trajectory_with_exactly_t_records() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.toml");
    fs::write(&cfg, small_run_config("run", "y = [0.2]")).unwrap();
    let out = dir.path().join("out");
    let result = run(&[
        "run",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(
        result.status.success(),
        "stderr: {}",
        String::from_utf8_lossy(&result.stderr)
    );

    let csv = fs::read_to_string(out.join("trajectory.csv")).unwrap();
    let rows: Vec<&str> = csv.trim_end().lines().collect();
    assert_eq!(rows.len(), 51, "header plus one record per reverse step");
    assert!(rows[0].starts_with("k,i,mu0,lambda_inv"));

    let summary: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["status"]["state"], "completed");
    assert_eq!(summary["rng"], "chacha12");
    assert_eq!(summary["nfe"], 50);
    assert!(summary["oracle"]["posterior_mean"][0].is_number());
    assert_eq!(summary["config"]["solver"]["seed"], 3);
}

#[test]
fn identical_configs_produce_identical_csv() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.toml");
    fs::write(&cfg, small_run_config("run", "y = [0.2]")).unwrap();
    let out_a = dir.path().join("a");
    let out_b = dir.path().join("b");
    assert!(run(&[
        "run",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out_a.to_str().unwrap()
    ])
    .status
    .success());
    assert!(run(&[
        "run",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out_b.to_str().unwrap()
    ])
    .status
    .success());
    let a = fs::read(out_a.join("trajectory.csv")).unwrap();
    let b = fs::read(out_b.join("trajectory.csv")).unwrap();
    assert_eq!(a, b, "trajectories must match byte for byte");
}

#[test]
fn seed_flag_overrides_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.toml");
    fs::write(&cfg, small_run_config("run", "y = [0.2]")).unwrap();
    let out_a = dir.path().join("a");
    let out_b = dir.path().join("b");
    run(&[
        "run",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out_a.to_str().unwrap(),
    ]);
    run(&[
        "run",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out_b.to_str().unwrap(),
        "--seed",
        "99",
    ]);
    let a = fs::read(out_a.join("trajectory.csv")).unwrap();
    let b = fs::read(out_b.join("trajectory.csv")).unwrap();
    assert_ne!(a, b);
}

#[test]
fn malformed_config_exits_2_with_location() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.toml");
    fs::write(&cfg, "[model\nweights = [1.0]").unwrap();
    let result = run(&["run", "--config", cfg.to_str().unwrap()]);
    assert_eq!(result.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&result.stderr);
    assert!(
        stderr.contains("line 1"),
        "stderr should carry the error location: {stderr}"
    );
}

#[test]
fn unknown_key_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.toml");
    fs::write(
        &cfg,
        small_run_config("run", "y = [0.2]").replace("mean_step", "mean_stepp"),
    )
    .unwrap();
    let result = run(&["run", "--config", cfg.to_str().unwrap()]);
    assert_eq!(result.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&result.stderr).contains("mean_stepp"));
}

#[test]
fn kind_mismatch_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.toml");
    fs::write(&cfg, small_run_config("sweep", "seeds = [1]")).unwrap();
    let result = run(&["run", "--config", cfg.to_str().unwrap()]);
    assert_eq!(result.status.code(), Some(2));
}

#[test]
fn sweep_writes_rows_for_every_cell() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.toml");
    fs::write(
        &cfg,
        small_run_config(
            "sweep",
            "seeds = [1, 2]\n\n[experiment.y_grid]\nfrom = -1.0\nto = 1.0\ncount = 5",
        ),
    )
    .unwrap();
    let out = dir.path().join("out");
    let result = run(&[
        "sweep",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
        "--threads",
        "2",
    ]);
    assert!(
        result.status.success(),
        "stderr: {}",
        String::from_utf8_lossy(&result.stderr)
    );
    let csv = fs::read_to_string(out.join("sweep.csv")).unwrap();
    assert_eq!(csv.trim_end().lines().count(), 1 + 5 * 2);
    let summary: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("sweep_summary.json")).unwrap()).unwrap();
    assert_eq!(summary["cells"], 10);
}

#[test]
fn sweep_is_reproducible_across_thread_counts() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.toml");
    fs::write(
        &cfg,
        small_run_config(
            "sweep",
            "seeds = [1, 2]\n\n[experiment.y_grid]\nfrom = -1.0\nto = 1.0\ncount = 4",
        ),
    )
    .unwrap();
    let out_a = dir.path().join("a");
    let out_b = dir.path().join("b");
    // Thread pools are process-global, so use separate invocations.
    assert!(run(&[
        "sweep",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out_a.to_str().unwrap(),
        "--threads",
        "1"
    ])
    .status
    .success());
    assert!(run(&[
        "sweep",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out_b.to_str().unwrap(),
        "--threads",
        "4"
    ])
    .status
    .success());
    assert_eq!(
        fs::read(out_a.join("sweep.csv")).unwrap(),
        fs::read(out_b.join("sweep.csv")).unwrap()
    );
}

#[test]
fn figures_emit_all_panels() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.toml");
    fs::write(
        &cfg,
        small_run_config(
            "figures",
            "y = [0.2]\n\n[experiment.y_grid]\nfrom = -1.0\nto = 1.0\ncount = 5",
        ),
    )
    .unwrap();
    let out = dir.path().join("out");
    let result = run(&[
        "figures",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(
        result.status.success(),
        "stderr: {}",
        String::from_utf8_lossy(&result.stderr)
    );
    for file in [
        "fig_y_sweep.csv",
        "fig_random_start.csv",
        "fig_fixed_pairs.csv",
        "fig_exact_chain.csv",
        "fig_mmse_curve.csv",
        "figures_summary.json",
    ] {
        assert!(out.join(file).exists(), "{file} missing");
    }
    // The reference trace covers every chain index 0..=T.
    let chain = fs::read_to_string(out.join("fig_exact_chain.csv")).unwrap();
    assert_eq!(chain.trim_end().lines().count(), 1 + 51);
    // Panel (c) carries exactly the three pinned pairs.
    let pairs = fs::read_to_string(out.join("fig_fixed_pairs.csv")).unwrap();
    for needle in ["0,-1,-1.5,", "1,0,0.2,", "2,1,1.5,"] {
        assert!(pairs.contains(needle), "missing pair row {needle}");
    }
    let summary: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("figures_summary.json")).unwrap())
            .unwrap();
    assert!(summary["panel_d_max_abs_gap"].as_f64().unwrap().is_finite());
    assert!(summary["panel_d_mu0_at_y0"].as_f64().is_some());
}

#[test]
fn frontier_writes_table_and_medians() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.toml");
    fs::write(
        &cfg,
        small_run_config(
            "frontier",
            "budgets = [50, 100]\nseeds = [1, 2]\n\n[experiment.y_grid]\nfrom = -1.0\nto = 1.0\ncount = 2",
        ),
    )
    .unwrap();
    let out = dir.path().join("out");
    let result = run(&[
        "frontier",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(
        result.status.success(),
        "stderr: {}",
        String::from_utf8_lossy(&result.stderr)
    );
    let csv = fs::read_to_string(out.join("frontier.csv")).unwrap();
    assert_eq!(csv.trim_end().lines().count(), 1 + 2 * 2 * 2 * 2);
    assert!(csv.starts_with("method,nfe,y,seed,sq_error"));
}

#[test]
fn frontier_infeasible_budget_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.toml");
    fs::write(
        &cfg,
        small_run_config("frontier", "budgets = [10]\ny = [0.2]\nseeds = [1]"),
    )
    .unwrap();
    let result = run(&[
        "frontier",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        dir.path().join("o").to_str().unwrap(),
    ]);
    assert_eq!(result.status.code(), Some(2));
}

#[test]
fn numerical_abort_exits_3_with_error_json() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.toml");
    // A divergent mean step overflows the state mid-run.
    fs::write(
        &cfg,
        small_run_config("run", "y = [0.2]").replace("mean_step = 0.9", "mean_step = 1e300"),
    )
    .unwrap();
    let out = dir.path().join("out");
    let result = run(&[
        "run",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(result.status.code(), Some(3));
    let stderr = String::from_utf8_lossy(&result.stderr);
    let error: serde_json::Value =
        serde_json::from_str(stderr.lines().last().unwrap()).expect("machine-readable error");
    assert_eq!(error["error"], "numerical-abort");
    // Partial artifacts are still written.
    let summary: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["status"]["state"], "aborted");
}

#[test]
fn check_suites_pass_and_unknown_suite_errors() {
    for suite in ["telescoping", "kl-decomposition", "tweedie"] {
        let result = run(&["check", suite]);
        assert!(
            result.status.success(),
            "suite {suite} failed: {}",
            String::from_utf8_lossy(&result.stdout)
        );
        let stdout = String::from_utf8_lossy(&result.stdout);
        assert!(stdout.contains("ok"), "{stdout}");
        assert!(stdout.contains("checks passed"));
    }
    let result = run(&["check", "no-such-suite"]);
    assert_eq!(result.status.code(), Some(2));
}

#[test]
fn out_root_env_var_is_honored() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.toml");
    fs::write(&cfg, small_run_config("run", "y = [0.2]")).unwrap();
    let root = dir.path().join("envroot");
    let result = Command::new(bin())
        .args(["run", "--config", cfg.to_str().unwrap()])
        .env("RMP_OUT_ROOT", root.to_str().unwrap())
        .output()
        .unwrap();
    assert!(result.status.success());
    assert!(root.join("trajectory.csv").exists());
}

#[test]
fn shipped_run_config_parses_and_runs() {
    // The repository example config is the documented entry point; keep it
    // working end to end (full T = 1000, still fast).
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let result = run(&[
        "run",
        "--config",
        workspace_config("toy_run.toml").to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(
        result.status.success(),
        "stderr: {}",
        String::from_utf8_lossy(&result.stderr)
    );
    let csv = fs::read_to_string(out.join("trajectory.csv")).unwrap();
    assert_eq!(csv.trim_end().lines().count(), 1001);
}
