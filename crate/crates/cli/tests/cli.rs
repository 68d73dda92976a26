use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

const BIN: &str = env!("CARGO_BIN_EXE_dropout-fr");

fn config(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name)
}

/// Shrinks the reference setup so a full CLI round trip takes seconds.
const SMALL: &[&str] = &[
    "--set",
    "data.n=400",
    "--set",
    "train.max_epochs=3",
    "--set",
    "rankers.dropout_fr.epochs=3",
    "--set",
    "rankers.dropout_fr.anneal_epochs=1",
    "--set",
    "rankers.deep_fs.epochs=3",
    "--jobs",
    "1",
];

fn run(args: &[&str]) -> Output {
    Command::new(BIN)
        .args(args)
        .env_remove("DROPOUT_FR_OUT")
        .output()
        .expect("binary runs")
}

fn run_small(sub: &[&str], out: &Path) -> Output {
    let cfg = config("no_interaction.toml");
    let mut args: Vec<&str> = sub.to_vec();
    args.extend(["--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    args.extend(SMALL);
    run(&args)
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn assert_ok(o: &Output) {
    assert!(o.status.success(), "command failed: {}", stderr(o));
}

fn assert_usage_error(o: &Output) {
    assert_eq!(o.status.code(), Some(2), "stderr: {}", stderr(o));
    let err = stderr(o);
    assert_eq!(err.trim_end().lines().count(), 1, "expected one line, got {err:?}");
    assert!(err.starts_with("error:"), "{err}");
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn simulate_is_reproducible_byte_for_byte() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for dir in [&a, &b] {
        let o = run(&[
            "simulate", "--kind", "interaction", "--n", "200", "--seed", "7", "--out",
            dir.path().to_str().unwrap(),
        ]);
        assert_ok(&o);
    }
    for file in ["interaction.csv", "interaction.truth.json"] {
        let x = fs::read(a.path().join(file)).unwrap();
        let y = fs::read(b.path().join(file)).unwrap();
        assert_eq!(x, y, "{file} differs between reruns");
    }
    let csv = fs::read_to_string(a.path().join("interaction.csv")).unwrap();
    assert_eq!(csv.lines().count(), 201);
    assert!(csv.lines().next().unwrap().ends_with(",y"));
}

#[test]
fn simulate_rejects_unknown_kind() {
    let o = run(&["simulate", "--kind", "bogus"]);
    assert_usage_error(&o);
    assert!(stderr(&o).contains("bogus"));
}

#[test]
fn rank_rejects_unknown_method() {
    let dir = tempfile::tempdir().unwrap();
    let o = run_small(&["rank", "--method", "nope"], dir.path());
    assert_usage_error(&o);
}

#[test]
fn model_based_ranker_without_model_is_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = run_small(&["rank", "--method", "shuffle"], dir.path());
    assert_usage_error(&o);
    assert!(stderr(&o).contains("--model"));
}

#[test]
fn random_ranking_needs_no_model() {
    let dir = tempfile::tempdir().unwrap();
    let o = run_small(&["rank", "--method", "random"], dir.path());
    assert_ok(&o);
    let file = read_json(&dir.path().join("ranking_random.json"));
    let order = file["order"].as_array().expect("order array");
    let mut seen: Vec<u64> = order.iter().map(|v| v.as_u64().unwrap()).collect();
    seen.sort_unstable();
    assert_eq!(seen, (0..40).collect::<Vec<u64>>());
}

#[test]
fn retrain_without_config_is_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = run_small(&["rank", "--method", "random"], dir.path());
    assert_ok(&o);
    let ranking = dir.path().join("ranking_random.json");
    let o = run(&["evaluate", "--mode", "retrain", "--ranking", ranking.to_str().unwrap()]);
    assert_usage_error(&o);
}

#[test]
fn malformed_n_list_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    assert_ok(&run_small(&["rank", "--method", "random"], dir.path()));
    let ranking = dir.path().join("ranking_random.json");
    for bad in ["1,x", "5,2", "0,1", ""] {
        let o = run_small(
            &["evaluate", "--mode", "retrain", "--ranking", ranking.to_str().unwrap(), "--n-list", bad],
            dir.path(),
        );
        assert!(!o.status.success(), "n-list {bad:?} was accepted");
    }
}

#[test]
fn missing_csv_is_reported_with_path() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("csv.toml");
    fs::write(
        &cfg,
        "[data]\nsource = \"csv\"\npath = \"/definitely/not/here.csv\"\ntarget = \"y\"\ntask = \"regression\"\n",
    )
    .unwrap();
    let o = run(&["train", "--config", cfg.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1), "stderr: {}", stderr(&o));
    assert!(stderr(&o).contains("/definitely/not/here.csv"), "{}", stderr(&o));
}

#[test]
fn train_rank_evaluate_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path();
    assert_ok(&run_small(&["train"], out));
    let model = out.join("model.json");
    let first = fs::read(&model).unwrap();

    // same seed, same bytes
    assert_ok(&run_small(&["train"], out));
    assert_eq!(first, fs::read(&model).unwrap());

    let report = read_json(&out.join("train_report.json"));
    assert!(report["test_metric"].as_f64().unwrap().is_finite());

    assert_ok(&run_small(&["rank", "--method", "shuffle", "--model", model.to_str().unwrap()], out));
    let ranking = out.join("ranking_shuffle.json");
    assert_ok(&run_small(
        &[
            "evaluate", "--mode", "zero_out", "--ranking", ranking.to_str().unwrap(), "--model",
            model.to_str().unwrap(), "--n-list", "1,5,40",
        ],
        out,
    ));
    let summary = read_json(&out.join("summary_zero_out.json"));
    let full = summary["details"]["full_test_metric"].as_f64().expect("full test metric recorded");
    let csv = fs::read_to_string(out.join("curves_zero_out.csv")).unwrap();
    let last: f64 = csv.lines().last().unwrap().rsplit(',').next().unwrap().parse().unwrap();
    assert_eq!(last.to_bits(), full.to_bits(), "keeping every feature must reproduce the model");
}

#[test]
fn lambda_grid_writes_one_ranking_per_value() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path();
    assert_ok(&run_small(&["train"], out));
    let model = out.join("model.json");
    assert_ok(&run_small(
        &["rank", "--method", "dropout_fr", "--model", model.to_str().unwrap(), "--lambda-grid", "0.01,1"],
        out,
    ));
    assert!(out.join("ranking_dropout_fr_lambda_0.01.json").exists());
    assert!(out.join("ranking_dropout_fr_lambda_1.json").exists());
    let report = read_json(&out.join("lambda_report.json"));
    assert_eq!(report["points"].as_array().unwrap().len(), 2);
    assert!(report["selected"].as_f64().is_some());
}

#[test]
fn compare_lists_every_method() {
    let dir = tempfile::tempdir().unwrap();
    let o = run_small(&["compare", "--set", "folds.k=2"], dir.path());
    assert_ok(&o);
    let md = fs::read_to_string(dir.path().join("report.md")).unwrap();
    for method in ["dropout_fr", "mean", "shuffle", "marginal", "random", "deep_fs"] {
        assert!(md.contains(&format!("| {method} |")), "{method} missing");
    }
    for external in ["random_forest", "lasso", "elastic_net"] {
        assert!(md.contains(&format!("| {external} | not computed")), "{external} missing");
    }
    let report = read_json(&dir.path().join("report.json"));
    assert_eq!(report["format_version"], 1);
    let curves = fs::read_to_string(dir.path().join("curves.csv")).unwrap();
    assert_eq!(curves.lines().next().unwrap(), "method,mode,n_features,fold,metric");
}

#[test]
fn output_dir_falls_back_to_env() {
    let dir = tempfile::tempdir().unwrap();
    let o = Command::new(BIN)
        .args(["simulate", "--kind", "no_interaction", "--n", "20"])
        .env("DROPOUT_FR_OUT", dir.path())
        .output()
        .unwrap();
    assert_ok(&o);
    assert!(dir.path().join("no_interaction.csv").exists());
}
