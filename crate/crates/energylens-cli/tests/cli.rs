//! End-to-end tests of the `energylens` binary: artifact contents, exit
//! codes, config-file/flag/env precedence, and run-to-run determinism.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_energylens"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary should spawn")
}

/// Runs the CLI expecting success; returns stdout.
fn run_ok(args: &[&str]) -> String {
    let out = run(args);
    assert!(
        out.status.success(),
        "command {args:?} failed with {:?}:\n{}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8_lossy(&out.stdout).into_owned()
}

/// Runs the CLI expecting failure; returns (exit code, stderr).
fn run_fail(args: &[&str]) -> (i32, String) {
    let out = run(args);
    assert!(
        !out.status.success(),
        "command {args:?} unexpectedly succeeded:\n{}",
        String::from_utf8_lossy(&out.stdout)
    );
    (
        out.status.code().expect("exit code"),
        String::from_utf8_lossy(&out.stderr).into_owned(),
    )
}

fn read(path: &Path) -> String {
    std::fs::read_to_string(path)
        .unwrap_or_else(|e| panic!("reading {}: {e}", path.display()))
}

fn csv_rows(path: &Path) -> usize {
    read(path).lines().count().saturating_sub(1)
}

/// Generates the small noiseless grid into `dir` and returns the CSV path.
fn small_dataset(dir: &Path) -> PathBuf {
    let out = dir.to_str().unwrap();
    run_ok(&["generate", "--out-dir", out, "--grid", "small"]);
    dir.join("data.csv")
}

#[test]
fn generate_writes_csv_sidecar_and_manifest() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().to_str().unwrap();
    let stdout = run_ok(&["generate", "--out-dir", out, "--noise", "0.05", "--seed", "7"]);

    assert!(stdout.contains("wrote 756 rows"), "stdout: {stdout}");
    assert_eq!(csv_rows(&dir.path().join("data.csv")), 756);

    let sidecar: serde_json::Value =
        serde_json::from_str(&read(&dir.path().join("data.csv.sidecar.json"))).unwrap();
    assert_eq!(sidecar["seed"], 7);
    assert!(sidecar["source"].as_str().unwrap().contains("synthetic"));

    let manifest: serde_json::Value =
        serde_json::from_str(&read(&dir.path().join("manifest.json"))).unwrap();
    assert_eq!(manifest["schema"], "energylens-manifest-v1");
    assert_eq!(manifest["command"], "generate");
    assert_eq!(manifest["seed"], 7);
    assert_eq!(manifest["settings"]["noise"], "0.05");
    assert_eq!(manifest["settings"]["grid"], "default");
    assert!(manifest["outputs"]
        .as_array()
        .unwrap()
        .iter()
        .any(|p| p.as_str().unwrap().ends_with("data.csv")));
    assert!(manifest["unix_time_s"].as_u64().unwrap() > 0);
}

#[test]
fn generate_rejects_negative_noise_as_usage_error() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().to_str().unwrap();
    let (code, stderr) = run_fail(&["generate", "--out-dir", out, "--noise", "-1"]);
    assert_eq!(code, 2);
    assert!(stderr.contains("--noise"), "stderr: {stderr}");
    // Failed runs leave no manifest behind.
    assert!(!dir.path().join("manifest.json").exists());
}

#[test]
fn generate_rejects_unknown_grid_preset() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().to_str().unwrap();
    let (code, stderr) = run_fail(&["generate", "--out-dir", out, "--grid", "huge"]);
    assert_eq!(code, 2);
    assert!(stderr.contains("--grid") && stderr.contains("huge"), "stderr: {stderr}");
}

#[test]
fn generate_axis_overrides_change_the_grid() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().to_str().unwrap();
    run_ok(&[
        "generate",
        "--out-dir",
        out,
        "--tp-values",
        "1,2",
        "--pp-values",
        "1",
        "--batch-values",
        "1,8",
        "--max-token-values",
        "64",
        "--input-token-values",
        "128,512",
    ]);
    // 2 tp x 1 pp x 2 batch x 1 max_tokens x 2 prompt sizes.
    assert_eq!(csv_rows(&dir.path().join("data.csv")), 8);
}

#[test]
fn identical_invocations_produce_byte_identical_artifacts() {
    let a = TempDir::new().unwrap();
    let b = TempDir::new().unwrap();
    for dir in [&a, &b] {
        run_ok(&[
            "generate",
            "--out-dir",
            dir.path().to_str().unwrap(),
            "--noise",
            "0.1",
            "--seed",
            "21",
        ]);
    }
    assert_eq!(
        read(&a.path().join("data.csv")),
        read(&b.path().join("data.csv"))
    );
    assert_eq!(
        read(&a.path().join("data.csv.sidecar.json")),
        read(&b.path().join("data.csv.sidecar.json"))
    );
}

#[test]
fn fit_writes_loadable_params() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().to_str().unwrap();
    let data = small_dataset(dir.path());
    let stdout = run_ok(&[
        "fit",
        data.to_str().unwrap(),
        "--out-dir",
        out,
        "--n",
        "20",
        "--starts",
        "4",
    ]);
    assert!(stdout.contains("fit energylens on 20 records"), "stdout: {stdout}");

    let loaded = energylens::model::load_params(dir.path().join("params.json")).unwrap();
    assert_eq!(loaded.n_train, 20);
    assert!(loaded.params.validate().is_ok());
}

#[test]
fn fit_with_too_small_sample_is_a_runtime_error() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().to_str().unwrap();
    let data = small_dataset(dir.path());
    let (code, stderr) = run_fail(&["fit", data.to_str().unwrap(), "--out-dir", out, "--n", "5"]);
    assert_eq!(code, 1);
    assert!(
        stderr.contains("--n 5") && stderr.contains("13"),
        "stderr: {stderr}"
    );
}

#[test]
fn fit_rejects_unknown_method_as_usage_error() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().to_str().unwrap();
    let data = small_dataset(dir.path());
    let (code, stderr) = run_fail(&[
        "fit",
        data.to_str().unwrap(),
        "--out-dir",
        out,
        "--method",
        "xgboost",
    ]);
    assert_eq!(code, 2);
    assert!(stderr.contains("--method") && stderr.contains("xgboost"), "stderr: {stderr}");
}

#[test]
fn fit_baseline_writes_loadable_artifact() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().to_str().unwrap();
    let data = small_dataset(dir.path());
    run_ok(&[
        "fit",
        data.to_str().unwrap(),
        "--out-dir",
        out,
        "--method",
        "rf",
        "--n",
        "20",
        "--trees",
        "10",
    ]);
    let model =
        energylens::baselines::load_baseline(dir.path().join("baseline.json")).unwrap();
    assert_eq!(model.kind_name(), "random-forest");
}

#[test]
fn evaluate_reports_every_requested_method() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().to_str().unwrap();
    run_ok(&["generate", "--out-dir", out, "--noise", "0.05", "--seed", "3"]);
    let data = dir.path().join("data.csv");
    let stdout = run_ok(&[
        "evaluate",
        data.to_str().unwrap(),
        "--out-dir",
        out,
        "--n",
        "50",
        "--starts",
        "4",
        "--trees",
        "20",
        "--seed",
        "3",
    ]);
    for method in ["energylens", "linear", "rf", "gbm", "proxy"] {
        assert!(stdout.contains(method), "missing {method} in:\n{stdout}");
    }

    let leaderboard = read(&dir.path().join("leaderboard.csv"));
    assert_eq!(leaderboard.lines().count(), 6, "header + 5 methods");
    assert!(leaderboard.starts_with("method,dataset,n_train,"));

    let reports =
        energylens::evaluation::load_reports(dir.path().join("reports.json")).unwrap();
    assert_eq!(reports.len(), 5);
    assert!(reports.iter().all(|r| r.dataset == "data-n50"));
}

#[test]
fn evaluate_subset_of_methods_keeps_order() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().to_str().unwrap();
    run_ok(&["generate", "--out-dir", out, "--noise", "0.05"]);
    let data = dir.path().join("data.csv");
    run_ok(&[
        "evaluate",
        data.to_str().unwrap(),
        "--out-dir",
        out,
        "--methods",
        "rf,linear",
        "--n",
        "20",
        "--trees",
        "10",
    ]);
    let reports =
        energylens::evaluation::load_reports(dir.path().join("reports.json")).unwrap();
    let order: Vec<&str> = reports.iter().map(|r| r.method.as_str()).collect();
    assert_eq!(order, ["rf", "linear"]);
}

#[test]
fn select_ranks_the_pinned_grid_and_honors_constraints() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().to_str().unwrap();
    let data = small_dataset(dir.path());
    run_ok(&[
        "fit",
        data.to_str().unwrap(),
        "--out-dir",
        out,
        "--n",
        "24",
        "--starts",
        "4",
    ]);
    let params = dir.path().join("params.json");

    // Pinned token budget: one entry per tp x pp layout.
    run_ok(&[
        "select",
        params.to_str().unwrap(),
        "--out-dir",
        out,
        "--input-tokens",
        "512",
        "--max-tokens",
        "256",
    ]);
    assert_eq!(csv_rows(&dir.path().join("ranking.csv")), 9);

    // A GPU budget prunes layouts with tp * pp over the budget.
    let constrained = dir.path().join("constrained.json");
    run_ok(&[
        "select",
        params.to_str().unwrap(),
        "--out-dir",
        out,
        "--input-tokens",
        "512",
        "--max-tokens",
        "256",
        "--constraint",
        "gpus<=4",
        "-o",
        constrained.to_str().unwrap(),
    ]);
    assert_eq!(csv_rows(&dir.path().join("constrained.csv")), 6);

    // Omitting --max-tokens sweeps the whole token-budget axis.
    let swept = dir.path().join("swept.json");
    run_ok(&[
        "select",
        params.to_str().unwrap(),
        "--out-dir",
        out,
        "--input-tokens",
        "512",
        "-o",
        swept.to_str().unwrap(),
    ]);
    assert_eq!(csv_rows(&dir.path().join("swept.csv")), 36);

    let ranking = energylens::selector::load_ranking(&swept).unwrap();
    assert_eq!(ranking.entries.len(), 36);
    assert!(ranking
        .entries
        .windows(2)
        .all(|w| w[0].energy_j <= w[1].energy_j));
}

#[test]
fn select_requires_input_tokens() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().to_str().unwrap();
    let data = small_dataset(dir.path());
    run_ok(&[
        "fit",
        data.to_str().unwrap(),
        "--out-dir",
        out,
        "--n",
        "24",
        "--starts",
        "2",
    ]);
    let params = dir.path().join("params.json");
    let (code, stderr) = run_fail(&["select", params.to_str().unwrap(), "--out-dir", out]);
    assert_eq!(code, 2);
    assert!(stderr.contains("--input-tokens"), "stderr: {stderr}");
}

#[test]
fn select_rejects_malformed_constraint() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().to_str().unwrap();
    let data = small_dataset(dir.path());
    run_ok(&[
        "fit",
        data.to_str().unwrap(),
        "--out-dir",
        out,
        "--n",
        "24",
        "--starts",
        "2",
    ]);
    let params = dir.path().join("params.json");
    let (code, stderr) = run_fail(&[
        "select",
        params.to_str().unwrap(),
        "--out-dir",
        out,
        "--input-tokens",
        "512",
        "--constraint",
        "memory<=4",
    ]);
    assert_eq!(code, 2);
    assert!(stderr.contains("--constraint") && stderr.contains("gpus<=N"), "stderr: {stderr}");
}

#[test]
fn symreg_writes_a_deterministic_front() {
    let a = TempDir::new().unwrap();
    let b = TempDir::new().unwrap();
    let data = small_dataset(a.path());
    for dir in [&a, &b] {
        run_ok(&[
            "symreg",
            data.to_str().unwrap(),
            "--out-dir",
            dir.path().to_str().unwrap(),
            "--pop",
            "60",
            "--generations",
            "3",
            "--seed",
            "13",
        ]);
    }
    let front = read(&a.path().join("front.json"));
    assert_eq!(front, read(&b.path().join("front.json")));

    let parsed: serde_json::Value = serde_json::from_str(&front).unwrap();
    assert_eq!(parsed["schema"], "energylens-front-v1");
    assert_eq!(parsed["seed"], 13);
    assert!(!parsed["pareto_front"].as_array().unwrap().is_empty());
    assert!(parsed["best"]["expression"].as_str().unwrap().len() > 0);

    let csv = read(&a.path().join("front.csv"));
    assert!(csv.starts_with("node_count,test_mse,ratio_of_token_load,log_compression,expression"));
    assert_eq!(
        csv.lines().count() - 1,
        parsed["pareto_front"].as_array().unwrap().len()
    );
}

#[test]
fn symreg_rejects_bad_rates() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().to_str().unwrap();
    let data = small_dataset(dir.path());
    let (code, stderr) = run_fail(&[
        "symreg",
        data.to_str().unwrap(),
        "--out-dir",
        out,
        "--crossover",
        "1.5",
    ]);
    assert_eq!(code, 2);
    assert!(stderr.contains("--crossover"), "stderr: {stderr}");
}

#[test]
fn bench_runs_the_pinned_pipeline() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().to_str().unwrap();
    let stdout = run_ok(&[
        "bench",
        "--out-dir",
        out,
        "--train-sizes",
        "50",
        "--methods",
        "energylens,linear",
        "--starts",
        "2",
        "--seed",
        "5",
    ]);
    assert!(stdout.contains("energylens") && stdout.contains("linear"));
    assert_eq!(csv_rows(&dir.path().join("bench_data.csv")), 756);

    let reports =
        energylens::evaluation::load_reports(dir.path().join("bench_reports.json")).unwrap();
    assert_eq!(reports.len(), 2);
    assert!(reports
        .iter()
        .all(|r| r.dataset == "benchmark-sigma0.05-seed5-n50"));
    assert_eq!(csv_rows(&dir.path().join("bench_leaderboard.csv")), 2);
}

#[test]
fn config_file_supplies_defaults_and_flags_override_it() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().to_str().unwrap();
    let cfg = dir.path().join("energylens.toml");
    std::fs::write(
        &cfg,
        "seed = 11\n\n[generate]\ngrid = \"small\"\nnoise = 0.1\n",
    )
    .unwrap();

    // File values apply when no flag is given.
    run_ok(&["generate", "--config", cfg.to_str().unwrap(), "--out-dir", out]);
    let manifest: serde_json::Value =
        serde_json::from_str(&read(&dir.path().join("manifest.json"))).unwrap();
    assert_eq!(manifest["seed"], 11);
    assert_eq!(manifest["settings"]["grid"], "small");
    assert_eq!(manifest["settings"]["noise"], "0.1");

    // A flag beats the file.
    let dir2 = TempDir::new().unwrap();
    run_ok(&[
        "generate",
        "--config",
        cfg.to_str().unwrap(),
        "--out-dir",
        dir2.path().to_str().unwrap(),
        "--noise",
        "0.2",
        "--seed",
        "99",
    ]);
    let manifest: serde_json::Value =
        serde_json::from_str(&read(&dir2.path().join("manifest.json"))).unwrap();
    assert_eq!(manifest["seed"], 99);
    assert_eq!(manifest["settings"]["noise"], "0.2");
}

#[test]
fn config_file_with_wrong_type_is_a_usage_error() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().to_str().unwrap();
    let cfg = dir.path().join("bad.toml");
    std::fs::write(&cfg, "[generate]\nnoise = \"loud\"\n").unwrap();
    let (code, stderr) = run_fail(&[
        "generate",
        "--config",
        cfg.to_str().unwrap(),
        "--out-dir",
        out,
    ]);
    assert_eq!(code, 2);
    assert!(stderr.contains("generate.noise"), "stderr: {stderr}");
}

#[test]
fn seed_env_var_applies_when_no_flag_is_given() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().to_str().unwrap();
    let output = bin()
        .args(["generate", "--out-dir", out, "--grid", "small"])
        .env("ENERGYLENS_SEED", "77")
        .output()
        .unwrap();
    assert!(output.status.success());
    let manifest: serde_json::Value =
        serde_json::from_str(&read(&dir.path().join("manifest.json"))).unwrap();
    assert_eq!(manifest["seed"], 77);
}

#[test]
fn unknown_flag_exits_with_usage_code() {
    let (code, _) = run_fail(&["generate", "--frobnicate"]);
    assert_eq!(code, 2);
}

#[test]
fn missing_data_file_is_a_runtime_error() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().to_str().unwrap();
    let (code, stderr) = run_fail(&["fit", "/nonexistent/nope.csv", "--out-dir", out]);
    assert_eq!(code, 1);
    assert!(stderr.contains("nope.csv"), "stderr: {stderr}");
}
