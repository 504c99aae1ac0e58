use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use fairdc::dataio::write_matrix;
use ndarray::array;
use serde_json::Value;

fn fairdc(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fairdc"))
        .args(args)
        .env_remove("FAIRDC_OUT")
        .output()
        .unwrap()
}

fn stdout_json(out: &Output) -> Value {
    let text = String::from_utf8_lossy(&out.stdout);
    serde_json::from_str(text.lines().last().unwrap()).unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let path = dir.join(name);
    fs::write(&path, text).unwrap();
    path.display().to_string()
}

fn worked_example(dir: &Path) -> (String, String) {
    (
        write(dir, "y.csv", "c1,c2\n0.9,0.1\n0.8,0.2\n0.7,0.3\n0.2,0.8\n"),
        write(dir, "m.csv", "group\n0\n0\n1\n1\n"),
    )
}

const QUICK: [&str; 4] = ["--pretrain-epochs", "2", "--max-refine-epochs", "2"];

fn quick_train(out: &Path, extra: &[&str]) -> Output {
    let mut args = vec!["train", "--out", out.to_str().unwrap()];
    args.extend(QUICK);
    args.extend(extra);
    fairdc(&args)
}

#[test]
fn assign_worked_example() {
    let dir = tempfile::tempdir().unwrap();
    let (y, m) = worked_example(dir.path());
    let out_dir = dir.path().join("o");
    let out = fairdc(&[
        "assign", "--soft", &y, "--membership", &m, "--sizes", "2,2", "--out", out_dir.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let v = stdout_json(&out);
    assert_eq!(v["labels"], serde_json::json!([1, 2, 1, 2]));
    assert!((v["objective"].as_f64().unwrap() - 1.4).abs() < 1e-12);
    let labels = fs::read_to_string(out_dir.join("labels.csv")).unwrap();
    assert_eq!(labels, "id,cluster\n1,1\n2,2\n3,1\n4,2\n");
}

#[test]
fn assign_reads_fdcm_like_csv() {
    let dir = tempfile::tempdir().unwrap();
    let (y_csv, m_csv) = worked_example(dir.path());
    let y_bin = dir.path().join("y.fdcm");
    let m_bin = dir.path().join("m.fdcm");
    write_matrix(&y_bin, &array![[0.9, 0.1], [0.8, 0.2], [0.7, 0.3], [0.2, 0.8]]).unwrap();
    write_matrix(&m_bin, &array![[1.0, 0.0], [1.0, 0.0], [0.0, 1.0], [0.0, 1.0]]).unwrap();
    let a = fairdc(&["assign", "--soft", &y_csv, "--membership", &m_csv, "--sizes", "2,2"]);
    let b = fairdc(&[
        "assign", "--soft", y_bin.to_str().unwrap(), "--membership", m_bin.to_str().unwrap(), "--sizes", "2,2",
    ]);
    assert_eq!(code(&b), 0, "{}", String::from_utf8_lossy(&b.stderr));
    assert_eq!(stdout_json(&a), stdout_json(&b));
}

#[test]
fn assign_keeps_already_fair_argmax() {
    let dir = tempfile::tempdir().unwrap();
    let y = write(dir.path(), "y.csv", "1,0\n0,1\n0,1\n1,0\n");
    let m = write(dir.path(), "m.csv", "0\n0\n1\n1\n");
    let v = stdout_json(&fairdc(&["assign", "--soft", &y, "--membership", &m]));
    assert_eq!(v["labels"], serde_json::json!([1, 2, 2, 1]));
    assert_eq!(v["objective"].as_f64().unwrap(), 0.0);
}

#[test]
fn assign_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let (y, m) = worked_example(dir.path());
    let tight = fairdc(&["assign", "--soft", &y, "--membership", &m, "--epsilon-relax", "0.0001"]);
    assert_eq!(code(&tight), 3);
    assert!(String::from_utf8_lossy(&tight.stderr).contains("exceeds upper bound"));

    let short = write(dir.path(), "short.csv", "0\n1\n");
    assert_eq!(code(&fairdc(&["assign", "--soft", &y, "--membership", &short])), 2);
    let bad = write(dir.path(), "bad.csv", "0.5,0.6\n0.5,0.5\n");
    assert_eq!(code(&fairdc(&["assign", "--soft", &bad, "--membership", &short])), 2);
    let missing = dir.path().join("nope.csv");
    assert_eq!(code(&fairdc(&["assign", "--soft", missing.to_str().unwrap(), "--membership", &m])), 2);
}

#[test]
fn evaluate_examples() {
    let dir = tempfile::tempdir().unwrap();
    let labels = write(dir.path(), "labels.csv", "id,cluster\n1,1\n2,1\n3,1\n4,2\n5,2\n6,2\n");
    let members = write(dir.path(), "m.csv", "0\n0\n1\n0\n1\n1\n");
    let v = stdout_json(&fairdc(&[
        "evaluate", "--labels", &labels, "--membership", &members, "--truth", &labels,
    ]));
    assert_eq!(v["balance"].as_f64().unwrap(), 0.5);
    assert_eq!(v["accuracy"].as_f64().unwrap(), 1.0);
    assert_eq!(v["nmi"].as_f64().unwrap(), 1.0);

    let pairs = write(dir.path(), "pairs.csv", "1\n1\n2\n2\n");
    let proportional = write(dir.path(), "p.csv", "0\n1\n0\n1\n");
    let v = stdout_json(&fairdc(&["evaluate", "--labels", &pairs, "--membership", &proportional]));
    assert_eq!(v["fairness"].as_f64().unwrap(), 1.0);
    assert!(v.get("accuracy").is_none());

    let short = write(dir.path(), "short.csv", "0\n1\n");
    let out = fairdc(&["evaluate", "--labels", &labels, "--membership", &short]);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("membership"));
}

#[test]
fn train_writes_artifacts_and_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    let out = quick_train(&a, &[]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let v = stdout_json(&out);
    assert_eq!(v["status"], "ok");
    assert!(v["train"]["balance"].is_number() && v["train"]["accuracy"].is_number());
    for f in ["report.jsonl", "epochs.csv", "model.json", "labels.csv"] {
        assert!(a.join(f).exists(), "{f}");
    }
    let csv = fs::read_to_string(a.join("epochs.csv")).unwrap();
    assert_eq!(csv.lines().count(), 5);

    quick_train(&b, &[]);
    for f in ["model.json", "labels.csv", "epochs.csv"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }

    let report = fs::read_to_string(a.join("report.jsonl")).unwrap();
    let lines: Vec<Value> = report.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(lines.len(), 5);
    assert!(lines[..4].iter().all(|l| l["kind"] == "epoch"));
    let run = &lines[4];
    assert_eq!(run["kind"], "run");
    assert!(run["timings"]["pretrain_s"].is_number());
    let echo = dir.path().join("echo.json");
    fs::write(&echo, run["config"].to_string()).unwrap();
    let c = dir.path().join("c");
    let out = fairdc(&["train", "--config", echo.to_str().unwrap(), "--out", c.to_str().unwrap()]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(fs::read(a.join("model.json")).unwrap(), fs::read(c.join("model.json")).unwrap());
}

#[test]
fn saved_model_predicts_the_saved_labels() {
    let dir = tempfile::tempdir().unwrap();
    let run = dir.path().join("run");
    let cfg = write(
        dir.path(),
        "cfg.toml",
        "[data.blobs]\nn_per_blob = 30\nk = 3\nd = 2\npsv_bias = 0.8\nseed = 1\n\n[train]\nk = 3\nhidden = [8]\nbatch_size = 16\n",
    );
    let out = quick_train(&run, &["--config", &cfg]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let data = fairdc::dataio::make_biased_blobs(30, 3, 2, 0.8, 1).unwrap();
    let x = dir.path().join("x.fdcm");
    write_matrix(&x, &data.features).unwrap();
    let groups: String = data.membership.unwrap().groups().iter().map(|g| format!("{g}\n")).collect();
    let m = write(dir.path(), "m.csv", &groups);
    let labels = run.join("labels.csv");
    let from_model = fairdc(&[
        "evaluate",
        "--model",
        run.join("model.json").to_str().unwrap(),
        "--features",
        x.to_str().unwrap(),
        "--membership",
        &m,
        "--truth",
        labels.to_str().unwrap(),
    ]);
    assert_eq!(code(&from_model), 0, "{}", String::from_utf8_lossy(&from_model.stderr));
    assert_eq!(stdout_json(&from_model)["accuracy"].as_f64().unwrap(), 1.0);

    let broken = dir.path().join("broken.json");
    let mut model: Value = serde_json::from_str(&fs::read_to_string(run.join("model.json")).unwrap()).unwrap();
    model["layers"][0]["bias"] = serde_json::json!([0.0]);
    fs::write(&broken, model.to_string()).unwrap();
    let out = fairdc(&[
        "evaluate", "--model", broken.to_str().unwrap(), "--features", x.to_str().unwrap(), "--membership", &m,
    ]);
    assert_eq!(code(&out), 2);
}

#[test]
fn invalid_config_lists_every_problem() {
    let dir = tempfile::tempdir().unwrap();
    let out = quick_train(dir.path(), &["--k", "1", "--batch-size", "1", "--epsilon-relax", "2"]);
    assert_eq!(code(&out), 2);
    let err = String::from_utf8_lossy(&out.stderr);
    for needle in ["k must be", "batch_size", "fairness_relax"] {
        assert!(err.contains(needle), "{needle} missing from {err}");
    }
    let cfg = write(dir.path(), "bad.toml", "[data.blobs]\nn_per_blob = 5\nk = 2\nd = 2\npsv_bias = 0.5\nseed = 1\nbogus = 3\n");
    assert_eq!(code(&quick_train(dir.path(), &["--config", &cfg])), 2);
}

#[test]
fn infeasible_refinement_leaves_a_failed_report() {
    let dir = tempfile::tempdir().unwrap();
    let out = quick_train(dir.path(), &["--epsilon-relax", "0.000001"]);
    assert_eq!(code(&out), 3, "{}", String::from_utf8_lossy(&out.stderr));
    let report = fs::read_to_string(dir.path().join("report.jsonl")).unwrap();
    let run: Value = serde_json::from_str(report.lines().last().unwrap()).unwrap();
    assert_eq!(run["status"], "failed");
    assert!(run["error"].as_str().unwrap().contains("infeasible"));
    assert_eq!(run["epochs"], 2);
}

#[test]
fn output_directory_from_environment() {
    let dir = tempfile::tempdir().unwrap();
    let (y, m) = worked_example(dir.path());
    let target = dir.path().join("from_env");
    let out = Command::new(env!("CARGO_BIN_EXE_fairdc"))
        .args(["assign", "--soft", &y, "--membership", &m])
        .env("FAIRDC_OUT", &target)
        .output()
        .unwrap();
    assert_eq!(code(&out), 0);
    assert!(target.join("labels.csv").exists());
    let help = String::from_utf8_lossy(&fairdc(&["--help"]).stdout).to_string();
    assert!(help.contains("FAIRDC_OUT") && help.contains("FAIRDC_LOG"));
}

#[test]
fn sweep_continues_past_failed_runs() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("sweep");
    let mut args = vec!["sweep", "--param", "epsilon", "--values", "0.000001,0.3", "--threads", "2"];
    args.extend(["--out", out_dir.to_str().unwrap()]);
    args.extend(QUICK);
    let out = fairdc(&args);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let csv = fs::read_to_string(out_dir.join("sweep.csv")).unwrap();
    let rows: Vec<&str> = csv.lines().skip(1).collect();
    assert_eq!(rows.len(), 2);
    assert!(rows[0].starts_with("epsilon,0.000001,failed"), "{}", rows[0]);
    assert!(rows[1].starts_with("epsilon,0.3,ok"), "{}", rows[1]);
}

#[test]
fn singleton_beta_sweep_matches_train() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("sweep");
    let mut args = vec!["sweep", "--param", "beta", "--values", "4", "--threshold", "0"];
    args.extend(["--out", out_dir.to_str().unwrap()]);
    args.extend(QUICK);
    let out = fairdc(&args);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stdout).contains("recommended beta: 4"));
    let solo = dir.path().join("solo");
    quick_train(&solo, &["--beta", "4"]);
    assert_eq!(
        fs::read(out_dir.join("beta_4").join("model.json")).unwrap(),
        fs::read(solo.join("model.json")).unwrap()
    );
}
