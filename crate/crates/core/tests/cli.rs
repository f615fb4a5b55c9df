//! End-to-end tests of the `rebpr` binary: every subcommand, the on-disk
//! file formats, determinism across invocations, and the error exit codes.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

fn rebpr(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rebpr"))
        .args(args)
        .current_dir(cwd)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn write_toy_dataset(dir: &Path) -> (String, String) {
    let train = dir.join("train.txt");
    let test = dir.join("test.txt");
    fs::write(
        &train,
        "10 100 101 102\n\
         11 100 103\n\
         12 101 103 104\n\
         13 102 104\n\
         14 100 104 105\n\
         15 101 105\n",
    )
    .unwrap();
    fs::write(
        &test,
        "10 103\n11 104\n12 100\n13 105\n14 101\n15 102\n",
    )
    .unwrap();
    (
        train.to_string_lossy().into_owned(),
        test.to_string_lossy().into_owned(),
    )
}

fn assert_csv_header(path: &Path, expected: &str) {
    let text = fs::read_to_string(path).unwrap_or_else(|e| panic!("read {path:?}: {e}"));
    let first = text.lines().next().unwrap_or_default();
    assert_eq!(first, expected, "header of {path:?}");
    assert!(text.lines().count() > 1, "{path:?} has data rows");
}

#[test]
fn analyze_outputs_are_byte_identical_across_runs() {
    let tmp = TempDir::new().unwrap();
    let (train, test) = write_toy_dataset(tmp.path());
    let args = |out: &str| {
        vec![
            "analyze".to_string(),
            "--train".into(),
            train.clone(),
            "--test".into(),
            test.clone(),
            "--out-dir".into(),
            out.into(),
            "--bins".into(),
            "2".into(),
            "--null-samples".into(),
            "8".into(),
            "--seed".into(),
            "42".into(),
        ]
    };
    for out in ["a1", "a2"] {
        let argv = args(out);
        let argv: Vec<&str> = argv.iter().map(String::as_str).collect();
        let res = rebpr(&argv, tmp.path());
        assert!(res.status.success(), "stderr: {}", String::from_utf8_lossy(&res.stderr));
    }

    for name in ["profiles.csv", "ccdf.csv", "significance.csv", "id_map.csv"] {
        let a = fs::read(tmp.path().join("a1").join(name)).unwrap();
        let b = fs::read(tmp.path().join("a2").join(name)).unwrap();
        assert_eq!(a, b, "{name} differs between identically seeded runs");
    }

    let dir = tmp.path().join("a1");
    assert_csv_header(&dir.join("profiles.csv"), "user_id,d_u,p_u,quadrant");
    assert_csv_header(&dir.join("ccdf.csv"), "group,x,frac");
    assert_csv_header(
        &dir.join("significance.csv"),
        "bin_activity,bin_pref,observed,null_mean,null_std,z,norm_dev,significant",
    );
    assert_csv_header(&dir.join("id_map.csv"), "kind,raw_id,index");

    // 2x2 grid -> 4 significance rows
    let sig = fs::read_to_string(dir.join("significance.csv")).unwrap();
    assert_eq!(sig.lines().count(), 1 + 4);
    // 6 users -> 6 profile rows with quadrant labels from the fixed set
    let profiles = fs::read_to_string(dir.join("profiles.csv")).unwrap();
    assert_eq!(profiles.lines().count(), 1 + 6);
    for line in profiles.lines().skip(1) {
        let quadrant = line.rsplit(',').next().unwrap();
        assert!(
            ["power_niche", "power_mainstream", "light_niche", "light_mainstream"]
                .contains(&quadrant),
            "unexpected quadrant {quadrant}"
        );
    }
}

#[test]
fn train_persists_a_resumable_run() {
    let tmp = TempDir::new().unwrap();
    let (train, test) = write_toy_dataset(tmp.path());
    let runs = tmp.path().join("runs");
    let config = tmp.path().join("train.json");
    fs::write(
        &config,
        serde_json::json!({
            "variant": "ui",
            "alpha": 0.5,
            "beta": -0.5,
            "epochs": 4,
            "seed": 3,
            "model": {"kind": "mf", "dim": 8, "lr": 0.05, "reg_lambda": 1e-4, "batch_size": 8},
            "data": {"train": train, "test": test},
            "out_dir": runs,
            "k": 3
        })
        .to_string(),
    )
    .unwrap();

    let first = rebpr(&["train", "--config", config.to_str().unwrap()], tmp.path());
    assert!(first.status.success(), "stderr: {}", String::from_utf8_lossy(&first.stderr));

    let run_dirs: Vec<_> = fs::read_dir(&runs).unwrap().map(|e| e.unwrap().path()).collect();
    assert_eq!(run_dirs.len(), 1, "one content-addressed run directory");
    let run_dir = &run_dirs[0];
    for name in ["run.json", "eval.json", "loss.csv", "checkpoint.bin"] {
        assert!(run_dir.join(name).exists(), "{name} missing");
    }
    assert_csv_header(&run_dir.join("loss.csv"), "epoch,mean_loss,reg_loss,wallclock_s");
    let loss = fs::read_to_string(run_dir.join("loss.csv")).unwrap();
    assert_eq!(loss.lines().count(), 1 + 4, "one loss row per epoch");

    let eval: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(run_dir.join("eval.json")).unwrap()).unwrap();
    assert_eq!(eval["k"], 3);
    assert!(eval["overall"]["recall"].is_number());
    for q in ["power_niche", "power_mainstream", "light_niche", "light_mainstream"] {
        assert!(eval["quadrants"][q].is_object(), "quadrant {q} present");
    }

    let run: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(run_dir.join("run.json")).unwrap()).unwrap();
    assert_eq!(run["config"]["variant"], "ui");
    assert_eq!(
        run_dir.file_name().unwrap().to_str().unwrap(),
        run["config_hash"].as_str().unwrap(),
        "directory is named by the config hash"
    );

    // a second invocation reuses the finished run and leaves it untouched
    let eval_before = fs::read(run_dir.join("eval.json")).unwrap();
    let second = rebpr(&["train", "--config", config.to_str().unwrap()], tmp.path());
    assert!(second.status.success());
    assert_eq!(fs::read_dir(&runs).unwrap().count(), 1);
    assert_eq!(fs::read(run_dir.join("eval.json")).unwrap(), eval_before);
}

#[test]
fn grid_sweeps_and_report_reduces() {
    let tmp = TempDir::new().unwrap();
    let (train, test) = write_toy_dataset(tmp.path());
    let runs = tmp.path().join("runs");
    let spec = tmp.path().join("spec.json");
    fs::write(
        &spec,
        serde_json::json!({
            "data": {"train": train, "test": test},
            "model": {"kind": "mf", "dim": 8, "lr": 0.05, "reg_lambda": 1e-4, "batch_size": 8},
            "variants": ["vanilla", "ui", "only_item", "only_user"],
            "alphas": [0.0, 0.5],
            "betas": [0.0, -0.5],
            "seeds": [1, 2],
            "epochs": 3,
            "out_dir": runs,
            "k": 3
        })
        .to_string(),
    )
    .unwrap();

    let res = rebpr(&["grid", "--spec", spec.to_str().unwrap()], tmp.path());
    assert!(res.status.success(), "stderr: {}", String::from_utf8_lossy(&res.stderr));

    // 3 pinned variants + 2x2 ui sweep, each over 2 seeds, plus the two tables
    assert_eq!(fs::read_dir(&runs).unwrap().count(), (3 + 4) * 2 + 2);
    assert_csv_header(&runs.join("grid.csv"), "alpha,beta,seeds,mean_recall,mean_bias");
    let grid = fs::read_to_string(runs.join("grid.csv")).unwrap();
    assert_eq!(grid.lines().count(), 1 + 4, "one row per (alpha, beta) cell");

    let selection: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(runs.join("selection.json")).unwrap()).unwrap();
    assert!(selection["alpha"].is_number());
    assert!(selection["beta"].is_number());
    assert!(selection["mean_recall"].is_number());

    // rerunning the grid reuses every run
    let again = rebpr(&["grid", "--spec", spec.to_str().unwrap()], tmp.path());
    assert!(again.status.success());
    assert_eq!(fs::read_dir(&runs).unwrap().count(), (3 + 4) * 2 + 2, "no new run directories");

    let report_dir = tmp.path().join("report");
    let res = rebpr(
        &["report", "--runs", runs.to_str().unwrap(), "--out-dir", report_dir.to_str().unwrap()],
        tmp.path(),
    );
    assert!(res.status.success(), "stderr: {}", String::from_utf8_lossy(&res.stderr));

    assert_csv_header(
        &report_dir.join("results.csv"),
        "variant,alpha,beta,seeds,recall,precision,ndcg,bias,recall_change,precision_change,ndcg_change,bias_change",
    );
    assert_csv_header(&report_dir.join("pareto.csv"), "variant,recall,bias");
    assert_csv_header(
        &report_dir.join("quadrants.csv"),
        "variant,quadrant,users,recall,precision,ndcg,bias,recall_change,precision_change,ndcg_change,bias_change",
    );
    let results = fs::read_to_string(report_dir.join("results.csv")).unwrap();
    let labels: Vec<&str> = results.lines().skip(1).map(|l| l.split(',').next().unwrap()).collect();
    assert_eq!(labels[0], "vanilla", "baseline row comes first");
    assert!(labels.iter().filter(|l| l.starts_with("ui_a")).count() >= 4);
    let quadrants = fs::read_to_string(report_dir.join("quadrants.csv")).unwrap();
    assert_eq!(
        quadrants.lines().count(),
        1 + labels.len() * 4,
        "four quadrant rows per variant row"
    );
}

#[test]
fn missing_input_file_exits_2() {
    let tmp = TempDir::new().unwrap();
    let res = rebpr(
        &["analyze", "--train", "absent.txt", "--test", "absent.txt"],
        tmp.path(),
    );
    assert_eq!(res.status.code(), Some(2), "I/O failures exit 2");
}

#[test]
fn malformed_input_exits_1() {
    let tmp = TempDir::new().unwrap();
    let train = tmp.path().join("train.txt");
    let test = tmp.path().join("test.txt");
    fs::write(&train, "10 100 oops 102\n").unwrap();
    fs::write(&test, "10 101\n").unwrap();
    let res = rebpr(
        &[
            "analyze",
            "--train",
            train.to_str().unwrap(),
            "--test",
            test.to_str().unwrap(),
        ],
        tmp.path(),
    );
    assert_eq!(res.status.code(), Some(1), "parse failures exit 1");
    let stderr = String::from_utf8_lossy(&res.stderr);
    assert!(stderr.contains("oops"), "error names the offending token: {stderr}");
}

#[test]
fn overlapping_split_is_rejected() {
    let tmp = TempDir::new().unwrap();
    let train = tmp.path().join("train.txt");
    let test = tmp.path().join("test.txt");
    fs::write(&train, "10 100 101\n11 100\n").unwrap();
    fs::write(&test, "10 101\n").unwrap(); // 101 already in train for user 10
    let res = rebpr(
        &[
            "analyze",
            "--train",
            train.to_str().unwrap(),
            "--test",
            test.to_str().unwrap(),
        ],
        tmp.path(),
    );
    assert_eq!(res.status.code(), Some(1), "leaking test edges exit 1");
}

#[test]
fn invalid_exponents_are_rejected_before_training() {
    let tmp = TempDir::new().unwrap();
    let (train, test) = write_toy_dataset(tmp.path());
    let config = tmp.path().join("train.json");
    fs::write(
        &config,
        serde_json::json!({
            "variant": "ui",
            "alpha": 0.5,
            "beta": 0.5, // positive exponents amplify popular items
            "epochs": 2,
            "seed": 3,
            "model": {"kind": "mf", "dim": 4, "lr": 0.05, "reg_lambda": 1e-4, "batch_size": 8},
            "data": {"train": train, "test": test},
            "out_dir": tmp.path().join("runs")
        })
        .to_string(),
    )
    .unwrap();
    let res = rebpr(&["train", "--config", config.to_str().unwrap()], tmp.path());
    assert_eq!(res.status.code(), Some(1));
    assert!(!tmp.path().join("runs").exists(), "no partial run directory");
}
