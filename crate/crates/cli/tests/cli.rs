//! CLI surface tests: exit codes, report shape, determinism, and the
//! CSV/model round trips between subcommands.

use std::path::Path;
use std::process::{Command, Output};

fn netspect(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_netspect"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn assert_code(out: &Output, want: i32, what: &str) {
    assert_eq!(
        out.status.code(),
        Some(want),
        "{what}: expected exit {want}, got {:?}\nstderr: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
}

/// A small corpus, extracted features, and a trained model in `dir`.
fn fixture(dir: &Path) {
    let gen = netspect(
        dir,
        &[
            "benchgen",
            "--out",
            "corpus",
            "--n-circuits",
            "6",
            "--gates-min",
            "40",
            "--gates-max",
            "70",
            "--trojan-fraction",
            "0.5",
            "--trigger-width",
            "3",
            "--seed",
            "9",
        ],
    );
    assert_code(&gen, 0, "benchgen");
    let extract = netspect(
        dir,
        &["extract", "--corpus", "corpus", "--out", "features.csv"],
    );
    assert_code(&extract, 0, "extract");
    let train = netspect(
        dir,
        &[
            "train",
            "--features",
            "features.csv",
            "--model-out",
            "model.json",
        ],
    );
    assert_code(&train, 0, "train");
}

#[test]
fn missing_input_exits_2() {
    let tmp = tempfile::tempdir().unwrap();
    let out = netspect(
        tmp.path(),
        &["extract", "--netlist", "absent.v", "--out", "features.csv"],
    );
    assert_code(&out, 2, "missing netlist");
    std::fs::write(
        tmp.path().join("tiny.v"),
        "module t (a, y);\n  input a;\n  output y;\n  INV g (.A(a), .Y(y));\nendmodule\n",
    )
    .unwrap();
    let out = netspect(
        tmp.path(),
        &[
            "extract",
            "--netlist",
            "tiny.v",
            "--library",
            "nolib.json",
            "--out",
            "f.csv",
        ],
    );
    assert_code(&out, 2, "missing library");
    assert!(
        String::from_utf8_lossy(&out.stderr).contains("nolib.json"),
        "error message names the path"
    );
}

#[test]
fn single_class_dataset_exits_3() {
    let tmp = tempfile::tempdir().unwrap();
    let csv =
        "circuit,net,line,LGFi,FFi,FFo,PI,PO,label\nc0,n0,1,1,2,3,4,5,0\nc0,n1,2,2,3,4,5,6,0\n";
    std::fs::write(tmp.path().join("flat.csv"), csv).unwrap();
    let out = netspect(
        tmp.path(),
        &[
            "train",
            "--features",
            "flat.csv",
            "--model-out",
            "model.json",
        ],
    );
    assert_code(&out, 3, "single-class training set");
}

#[test]
fn method_model_mismatch_exits_4() {
    let tmp = tempfile::tempdir().unwrap();
    fixture(tmp.path());
    let out = netspect(
        tmp.path(),
        &[
            "explain",
            "--features",
            "features.csv",
            "--method",
            "property",
            "--out",
            "out.json",
        ],
    );
    assert_code(&out, 4, "property without ensemble");
    let out = netspect(
        tmp.path(),
        &[
            "explain",
            "--features",
            "features.csv",
            "--method",
            "shap",
            "--model",
            "model.json",
            "--out",
            "out.json",
        ],
    );
    assert_code(&out, 4, "shap without train features");
    let out = netspect(
        tmp.path(),
        &[
            "explain",
            "--features",
            "features.csv",
            "--method",
            "gradient",
            "--out",
            "out.json",
        ],
    );
    assert_code(&out, 4, "gradient without model");
}

#[test]
fn mismatched_predictions_exit_5() {
    let tmp = tempfile::tempdir().unwrap();
    fixture(tmp.path());
    std::fs::write(
        tmp.path().join("short.json"),
        r#"{"schema":"netspect-predictions","version":1,"threshold":0.5,"predictions":[1,0,1]}"#,
    )
    .unwrap();
    let out = netspect(
        tmp.path(),
        &[
            "evaluate",
            "--model",
            "model.json",
            "--features",
            "features.csv",
            "--out",
            "eval.json",
            "--no-bootstrap",
            "--compare",
            "short.json",
            "short.json",
        ],
    );
    assert_code(&out, 5, "prediction length mismatch");
}

#[test]
fn infeasible_generator_config_exits_6() {
    let tmp = tempfile::tempdir().unwrap();
    let out = netspect(
        tmp.path(),
        &[
            "benchgen",
            "--out",
            "corpus",
            "--n-circuits",
            "1",
            "--gates-min",
            "2",
            "--gates-max",
            "2",
            "--po-min",
            "40",
            "--po-max",
            "40",
        ],
    );
    assert_code(&out, 6, "po count beyond gate count");
}

#[test]
fn train_prints_counts_and_weight() {
    let tmp = tempfile::tempdir().unwrap();
    fixture(tmp.path());
    let out = netspect(
        tmp.path(),
        &[
            "train",
            "--features",
            "features.csv",
            "--model-out",
            "model2.json",
        ],
    );
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("benign"), "{stdout}");
    assert!(stdout.contains("positive_class_weight = "), "{stdout}");
    // printed weight equals N_benign / N_trojan recounted from the CSV
    let csv = std::fs::read_to_string(tmp.path().join("features.csv")).unwrap();
    let (mut benign, mut trojan) = (0f64, 0f64);
    for line in csv.lines().skip(1) {
        match line.rsplit(',').next() {
            Some("1") => trojan += 1.0,
            Some("0") => benign += 1.0,
            _ => {}
        }
    }
    let expected = benign / trojan;
    let printed: f64 = stdout
        .lines()
        .find(|l| l.starts_with("positive_class_weight"))
        .and_then(|l| l.rsplit(' ').next())
        .unwrap()
        .parse()
        .unwrap();
    assert!((printed - expected).abs() < 1e-9);
}

#[test]
fn ensemble_flag_writes_31_members() {
    let tmp = tempfile::tempdir().unwrap();
    fixture(tmp.path());
    let out = netspect(
        tmp.path(),
        &[
            "train",
            "--features",
            "features.csv",
            "--model-out",
            "m.json",
            "--ensemble-out",
            "ens.json",
            "--n-estimators",
            "5",
        ],
    );
    assert_code(&out, 0, "ensemble training");
    let ens: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(tmp.path().join("ens.json")).unwrap())
            .unwrap();
    assert_eq!(ens["ensemble"]["members"].as_array().unwrap().len(), 31);
}

#[test]
fn explain_covers_every_row_with_required_fields() {
    let tmp = tempfile::tempdir().unwrap();
    fixture(tmp.path());
    let n_rows = std::fs::read_to_string(tmp.path().join("features.csv"))
        .unwrap()
        .lines()
        .count()
        - 1;
    for (method, extra) in [
        ("case", vec!["--train-features", "features.csv"]),
        ("shap", vec!["--train-features", "features.csv"]),
        ("gradient", vec![]),
    ] {
        let mut args = vec![
            "explain",
            "--features",
            "features.csv",
            "--method",
            method,
            "--model",
            "model.json",
            "--out",
            "expl.json",
        ];
        args.extend(extra);
        let out = netspect(tmp.path(), &args);
        assert_code(&out, 0, method);
        let report: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(tmp.path().join("expl.json")).unwrap())
                .unwrap();
        assert_eq!(report["schema"], "netspect-explanations");
        let records = report["records"].as_array().unwrap();
        assert_eq!(records.len(), n_rows, "coverage for {method}");
        let first = &records[0];
        assert!(first["wall_time_ns"].as_u64().is_some());
        assert!(first["net"].as_str().is_some());
        match method {
            "case" => {
                let neighbors = first["explanation"]["neighbors"].as_array().unwrap();
                assert_eq!(neighbors.len(), 5);
                for field in ["distance", "label", "circuit", "net", "line"] {
                    assert!(!neighbors[0][field].is_null(), "neighbor missing {field}");
                }
            }
            "shap" | "gradient" => {
                assert_eq!(
                    first["explanation"]["attributions"]
                        .as_array()
                        .unwrap()
                        .len(),
                    5
                );
                assert_eq!(first["explanation"]["ranking"].as_array().unwrap().len(), 5);
            }
            _ => {}
        }
    }
}

#[test]
fn evaluate_emits_requested_threshold_rows_and_is_deterministic() {
    let tmp = tempfile::tempdir().unwrap();
    fixture(tmp.path());
    let args = [
        "evaluate",
        "--model",
        "model.json",
        "--features",
        "features.csv",
        "--out",
        "eval.json",
        "--threshold",
        "0.5",
        "--threshold",
        "0.99",
        "--bootstrap-iters",
        "500",
        "--seed",
        "42",
    ];
    let out = netspect(tmp.path(), &args);
    assert_code(&out, 0, "evaluate");
    let first = std::fs::read(tmp.path().join("eval.json")).unwrap();
    let report: serde_json::Value = serde_json::from_slice(&first).unwrap();
    let rows = report["thresholds"].as_array().unwrap();
    assert_eq!(rows.len(), 2);
    assert_eq!(rows[0]["threshold"].as_f64(), Some(0.5));
    assert_eq!(rows[1]["threshold"].as_f64(), Some(0.99));
    for field in ["tool_version", "config_sha256", "inputs", "sweep"] {
        assert!(!report[field].is_null(), "report missing {field}");
    }
    // identical seed -> byte-identical report
    let out = netspect(tmp.path(), &args);
    assert_code(&out, 0, "evaluate rerun");
    let second = std::fs::read(tmp.path().join("eval.json")).unwrap();
    assert_eq!(first, second);
}

#[test]
fn csv_reingested_by_train_without_loss() {
    let tmp = tempfile::tempdir().unwrap();
    fixture(tmp.path());
    // re-extract into a second file and confirm identical bytes, then
    // train from both and compare models
    let out = netspect(
        tmp.path(),
        &["extract", "--corpus", "corpus", "--out", "features2.csv"],
    );
    assert_code(&out, 0, "re-extract");
    let a = std::fs::read(tmp.path().join("features.csv")).unwrap();
    let b = std::fs::read(tmp.path().join("features2.csv")).unwrap();
    assert_eq!(a, b);
    let out = netspect(
        tmp.path(),
        &[
            "train",
            "--features",
            "features2.csv",
            "--model-out",
            "model2.json",
        ],
    );
    assert_code(&out, 0, "retrain");
    let m1 = std::fs::read(tmp.path().join("model.json")).unwrap();
    let m2 = std::fs::read(tmp.path().join("model2.json")).unwrap();
    assert_eq!(m1, m2);
}

#[test]
fn benchgen_same_seed_same_manifest() {
    let tmp = tempfile::tempdir().unwrap();
    for sub in ["a", "b"] {
        let out = netspect(
            tmp.path(),
            &[
                "benchgen",
                "--out",
                sub,
                "--n-circuits",
                "4",
                "--gates-min",
                "30",
                "--gates-max",
                "50",
                "--seed",
                "11",
            ],
        );
        assert_code(&out, 0, "benchgen");
    }
    let a = std::fs::read(tmp.path().join("a/manifest.json")).unwrap();
    let b = std::fs::read(tmp.path().join("b/manifest.json")).unwrap();
    assert_eq!(a, b);
}

#[test]
fn config_file_supplies_defaults_and_flags_override() {
    let tmp = tempfile::tempdir().unwrap();
    std::fs::write(
        tmp.path().join("gen.json"),
        serde_json::to_string(&serde_json::json!({
            "n_circuits": 3,
            "gates_per_circuit": [20, 30],
            "pi_count": [3, 5],
            "po_count": [2, 3],
            "ff_fraction": 0.1,
            "trojan_fraction_of_circuits": 0.0,
            "trigger_width": 2,
            "seed": 4
        }))
        .unwrap(),
    )
    .unwrap();
    let out = netspect(
        tmp.path(),
        &[
            "benchgen",
            "--config",
            "gen.json",
            "--out",
            "corpus",
            "--n-circuits",
            "5",
        ],
    );
    assert_code(&out, 0, "benchgen with config");
    let manifest: serde_json::Value = serde_json::from_str(
        &std::fs::read_to_string(tmp.path().join("corpus/manifest.json")).unwrap(),
    )
    .unwrap();
    // flag overrides the file; the file supplies the rest
    assert_eq!(manifest["circuits"].as_array().unwrap().len(), 5);
    assert_eq!(manifest["config"]["seed"].as_u64(), Some(4));
}

#[test]
fn explain_and_evaluate_accept_config_files() {
    let tmp = tempfile::tempdir().unwrap();
    fixture(tmp.path());
    std::fs::write(tmp.path().join("explain.json"), r#"{"k": 3, "seed": 7}"#).unwrap();
    let out = netspect(
        tmp.path(),
        &[
            "explain",
            "--config",
            "explain.json",
            "--features",
            "features.csv",
            "--method",
            "case",
            "--model",
            "model.json",
            "--train-features",
            "features.csv",
            "--out",
            "expl.json",
        ],
    );
    assert_code(&out, 0, "explain with config");
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(tmp.path().join("expl.json")).unwrap())
            .unwrap();
    let neighbors = report["records"][0]["explanation"]["neighbors"]
        .as_array()
        .unwrap();
    assert_eq!(neighbors.len(), 3, "k from the config file applies");

    std::fs::write(
        tmp.path().join("eval_cfg.json"),
        r#"{"thresholds": [0.25], "no_bootstrap": true}"#,
    )
    .unwrap();
    let out = netspect(
        tmp.path(),
        &[
            "evaluate",
            "--config",
            "eval_cfg.json",
            "--model",
            "model.json",
            "--features",
            "features.csv",
            "--out",
            "eval.json",
        ],
    );
    assert_code(&out, 0, "evaluate with config");
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(tmp.path().join("eval.json")).unwrap())
            .unwrap();
    let rows = report["thresholds"].as_array().unwrap();
    assert_eq!(rows.len(), 1);
    assert_eq!(rows[0]["threshold"].as_f64(), Some(0.25));
}

#[test]
fn compare_runs_mcnemar_with_bonferroni() {
    let tmp = tempfile::tempdir().unwrap();
    fixture(tmp.path());
    for (threshold, out) in [("0.5", "p_low.json"), ("0.99", "p_high.json")] {
        let run = netspect(
            tmp.path(),
            &[
                "evaluate",
                "--model",
                "model.json",
                "--features",
                "features.csv",
                "--out",
                "scratch.json",
                "--threshold",
                threshold,
                "--no-bootstrap",
                "--preds-out",
                out,
            ],
        );
        assert_code(&run, 0, "prediction export");
    }
    let run = netspect(
        tmp.path(),
        &[
            "evaluate",
            "--model",
            "model.json",
            "--features",
            "features.csv",
            "--out",
            "compared.json",
            "--no-bootstrap",
            "--compare",
            "p_low.json",
            "p_high.json",
        ],
    );
    assert_code(&run, 0, "comparison run");
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(tmp.path().join("compared.json")).unwrap())
            .unwrap();
    let comparison = &report["comparisons"][0];
    assert!(comparison["mcnemar"]["p_value"].as_f64().is_some());
    assert!(comparison["mcnemar"]["statistic"].as_f64().is_some());
    let bonferroni = &report["bonferroni"];
    assert_eq!(bonferroni["reject"].as_array().unwrap().len(), 1);
    assert!((bonferroni["threshold"].as_f64().unwrap() - 0.05).abs() < 1e-12);
}
