use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn ipcae(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ipcae"))
        .args(args)
        .current_dir(cwd)
        .output()
        .unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn json(text: &[u8]) -> Value {
    serde_json::from_slice(text).unwrap()
}

const RECON: &str = r#"{
  "train": {"task": "reconstruction", "k": 3, "epochs": 4, "batch_size": 32, "hidden": [8]},
  "data": {"synthetic": {"task": "reconstruction", "n": 150, "d": 8, "k_true": 3, "noise": 0.1, "seed": 1}}
}"#;

const CLASSIFY: &str = r#"{
  "train": {"task": "classification", "k": 2, "epochs": 3, "batch_size": 32, "hidden": [8]},
  "data": {"synthetic": {"task": "classification", "n": 150, "d": 6, "k_true": 2, "classes": 3, "seed": 1}}
}"#;

fn setup(config: &str) -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("run.json"), config).unwrap();
    dir
}

#[test]
fn train_writes_artifacts_and_eval_reproduces_them() {
    let dir = setup(CLASSIFY);
    let out = ipcae(
        &[
            "train", "--config", "run.json", "--seed", "44", "--out", "o",
        ],
        dir.path(),
    );
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let o = dir.path().join("o");
    let metrics = std::fs::read_to_string(o.join("metrics.csv")).unwrap();
    assert!(
        metrics.starts_with("epoch,temperature,lr,train_loss,val_loss,val_metric,unique_pct,gjsd")
    );
    assert_eq!(metrics.lines().count(), 4);

    let summary = json(&std::fs::read(o.join("summary.json")).unwrap());
    let run = &summary["runs"][0];
    assert_eq!(run["seed"], 44);
    for (split, field) in [("test", "test_metric"), ("val", "best_val_metric")] {
        let ev = ipcae(
            &["eval", "--checkpoint", "o/checkpoint.bin", "--split", split],
            dir.path(),
        );
        assert_eq!(code(&ev), 0, "{}", stderr(&ev));
        let ev = json(&ev.stdout);
        assert_eq!(ev["metric"].as_f64(), run[field].as_f64(), "{split}");
        assert_eq!(ev["indices"], run["selection"]);
        assert_eq!(ev["metric_kind"], "accuracy");
    }
    // evaluating twice gives the same output
    let a = ipcae(&["eval", "--checkpoint", "o/checkpoint.bin"], dir.path());
    let b = ipcae(&["eval", "--checkpoint", "o/checkpoint.bin"], dir.path());
    assert_eq!(a.stdout, b.stdout);
}

#[test]
fn trace_flag_adds_trace_file() {
    let dir = setup(&RECON.replace("\"hidden\": [8]", "\"hidden\": [8], \"trace\": true"));
    let out = ipcae(&["train", "--config", "run.json", "--out", "o"], dir.path());
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let trace = std::fs::read_to_string(dir.path().join("o/trace.csv")).unwrap();
    assert!(trace.starts_with("step,epoch,alpha_norm,psi_norm,w_norm,psi_dot,transform_norm\n"));
}

#[test]
fn invalid_input_exits_with_one() {
    let dir = setup(&RECON.replace("\"k\": 3", "\"k\": 3, \"momentum\": 0.9"));
    let out = ipcae(&["train", "--config", "run.json"], dir.path());
    assert_eq!(code(&out), 1);
    assert!(stderr(&out).contains("momentum"), "{}", stderr(&out));

    let out = ipcae(&["train"], dir.path());
    assert_eq!(code(&out), 1);
    let out = ipcae(&["train", "--config", "missing.json"], dir.path());
    assert_eq!(code(&out), 1);
    let out = ipcae(&["--help"], dir.path());
    assert_eq!(code(&out), 0);

    let dir = setup(RECON);
    let out = ipcae(
        &[
            "train",
            "--config",
            "run.json",
            "--P",
            "5",
            "--variant",
            "direct",
        ],
        dir.path(),
    );
    assert_eq!(code(&out), 1, "{}", stderr(&out));
}

#[test]
fn eval_on_data_of_the_wrong_width_fails() {
    let dir = setup(RECON);
    assert_eq!(
        code(&ipcae(
            &["train", "--config", "run.json", "--out", "o"],
            dir.path()
        )),
        0
    );
    let rows: Vec<String> = (0..30).map(|i| format!("{i},1,2,3")).collect();
    std::fs::write(
        dir.path().join("narrow.csv"),
        format!("a,b,c,d\n{}\n", rows.join("\n")),
    )
    .unwrap();
    let out = ipcae(
        &[
            "eval",
            "--checkpoint",
            "o/checkpoint.bin",
            "--data",
            "narrow.csv",
        ],
        dir.path(),
    );
    assert_eq!(code(&out), 1);
    assert!(
        stderr(&out).contains("dimension mismatch"),
        "{}",
        stderr(&out)
    );
}

#[test]
fn unwritable_output_exits_with_two() {
    let dir = setup(RECON);
    std::fs::write(dir.path().join("blocker"), "").unwrap();
    let out = ipcae(
        &["train", "--config", "run.json", "--out", "blocker/o"],
        dir.path(),
    );
    assert_eq!(code(&out), 2, "{}", stderr(&out));
}

#[test]
fn oracle_check_passes_and_reports_corruption() {
    let dir = tempfile::tempdir().unwrap();
    let out = ipcae(&["oracle-check", "--trials", "20"], dir.path());
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    assert!(String::from_utf8_lossy(&out.stdout).contains("full_ip"));
    let out = ipcae(
        &["oracle-check", "--trials", "5", "--corrupt", "1e-3"],
        dir.path(),
    );
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stdout).contains("FAIL"));
}

#[test]
fn generated_csv_trains_like_the_generator() {
    let dir = setup(RECON);
    std::fs::write(
        dir.path().join("spec.json"),
        r#"{"task": "reconstruction", "n": 150, "d": 8, "k_true": 3, "noise": 0.1, "seed": 1}"#,
    )
    .unwrap();
    let out = ipcae(
        &["gen-synth", "--spec", "spec.json", "--out", "gen"],
        dir.path(),
    );
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let planted = json(&std::fs::read(dir.path().join("gen/planted.json")).unwrap());
    assert_eq!(planted["planted"].as_array().unwrap().len(), 3);

    let from_csv = RECON.replace(
        r#"{"synthetic": {"task": "reconstruction", "n": 150, "d": 8, "k_true": 3, "noise": 0.1, "seed": 1}}"#,
        r#"{"csv": "gen/data.csv"}"#,
    );
    std::fs::write(dir.path().join("csv.json"), from_csv).unwrap();
    assert_eq!(
        code(&ipcae(
            &["train", "--config", "run.json", "--out", "a"],
            dir.path()
        )),
        0
    );
    let out = ipcae(&["train", "--config", "csv.json", "--out", "b"], dir.path());
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let read = |p: &str| std::fs::read(dir.path().join(p)).unwrap();
    assert_eq!(read("a/metrics.csv"), read("b/metrics.csv"));
}

#[test]
fn gen_synth_rejects_bad_specs() {
    let dir = tempfile::tempdir().unwrap();
    for (spec, needle) in [
        (
            r#"{"task": "reconstruction", "n": 10, "d": 4, "k_true": 5}"#,
            "k_true",
        ),
        (
            r#"{"task": "reconstruction", "n": 10, "d": 4, "k_true": 2, "sigma": 1}"#,
            "sigma",
        ),
    ] {
        std::fs::write(dir.path().join("spec.json"), spec).unwrap();
        let out = ipcae(
            &["gen-synth", "--spec", "spec.json", "--out", "g"],
            dir.path(),
        );
        assert_eq!(code(&out), 1);
        assert!(stderr(&out).contains(needle), "{}", stderr(&out));
    }
}

#[test]
fn sweep_writes_one_row_per_value() {
    let dir = setup(RECON);
    let out = ipcae(
        &[
            "sweep", "--config", "run.json", "--axis", "K", "--values", "2,3", "--seeds", "11,22",
            "--out", "s",
        ],
        dir.path(),
    );
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let report = json(&std::fs::read(dir.path().join("s/sweep.json")).unwrap());
    let rows = report["rows"].as_array().unwrap();
    assert_eq!(rows.len(), 2);
    assert!(rows
        .iter()
        .all(|r| r["runs"].as_array().unwrap().len() == 2));
    assert!(dir.path().join("s/runs/3/seed22.csv").exists());
    let table = String::from_utf8_lossy(&out.stdout);
    assert_eq!(table.lines().count(), 3);
}

#[test]
fn identical_flags_give_identical_metrics() {
    let dir = setup(RECON);
    for out in ["a", "b"] {
        let run = ipcae(
            &[
                "train", "--config", "run.json", "--seed", "66", "--out", out,
            ],
            dir.path(),
        );
        assert_eq!(code(&run), 0, "{}", stderr(&run));
    }
    let read = |p: &str| std::fs::read(dir.path().join(p)).unwrap();
    assert_eq!(read("a/metrics.csv"), read("b/metrics.csv"));
}
