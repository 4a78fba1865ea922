use std::path::Path;

use dropout_conformal::runner::{
    build_manifest, emit_reports, load_artifacts, load_dataset, parse_config_str, run_dir, run_experiment, run_single,
    summarize, ExperimentConfig,
};

const SMALL: &str = "
synthetic.n = 240
synthetic.d = 3
seed = 5
dropout_p = 0.2
n_passes = 10
cv_folds = 3
net.hidden_sizes = 8
net.max_epochs = 80
net.patience = 40
forest.n_trees = 8
";

fn config(dir: &Path, extra: &str) -> ExperimentConfig {
    let runs = if extra.contains("n_runs") { "" } else { "n_runs = 2\n" };
    parse_config_str(&format!("{SMALL}{runs}{extra}"), dir).unwrap()
}

fn files(dir: &Path) -> Vec<String> {
    build_manifest(dir).unwrap().entries.into_iter().map(|e| e.path).collect()
}

#[test]
fn full_run_layout() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = config(tmp.path(), "");
    let artifacts = run_experiment(&cfg).unwrap();
    let manifest = emit_reports(&artifacts, &cfg.output_dir).unwrap();
    assert!(manifest.entries.len() >= 5);
    let names = files(&cfg.output_dir);
    for f in [
        "config.txt",
        "summary.json",
        "calibration_curve.csv",
        "width_stats.csv",
        "retrieval_counts.csv",
        "variance_error.csv",
        "plots/calibration_curve.svg",
        "plots/widths.svg",
        "plots/variance_error.svg",
        "run_000/split.json",
        "run_000/status.json",
        "run_000/dnn_p0.2/training_log.csv",
        "run_000/dnn_p0.2/model.txt",
        "run_000/dnn_p0.2/calibration.csv",
        "run_000/dnn_p0.2/intervals.csv",
        "run_001/rf/report.json",
    ] {
        assert!(names.iter().any(|n| n == f), "missing {f}");
    }
    let text = std::fs::read_to_string(cfg.output_dir.join("manifest.txt")).unwrap();
    assert_eq!(text, manifest.to_text());
    assert_eq!(text.lines().count(), manifest.entries.len());
}

#[test]
fn rf_only_without_plots() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = config(tmp.path(), "models = rf\nemit_plots = false\n");
    let artifacts = run_experiment(&cfg).unwrap();
    emit_reports(&artifacts, &cfg.output_dir).unwrap();
    let names = files(&cfg.output_dir);
    assert!(names.iter().all(|n| !n.contains("dnn")));
    assert!(names.iter().all(|n| n.ends_with(".csv") || n.ends_with(".json") || n.ends_with(".txt")));
    assert!(!cfg.output_dir.join("plots").exists());
}

#[test]
fn rerunning_one_run_reproduces_it() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = config(tmp.path(), "");
    let artifacts = run_experiment(&cfg).unwrap();
    let before = emit_reports(&artifacts, &cfg.output_dir).unwrap();

    std::fs::remove_dir_all(run_dir(&cfg.output_dir, 1)).unwrap();
    let data = load_dataset(&cfg).unwrap();
    run_single(&cfg, &data, 1).unwrap();
    let reloaded = load_artifacts(&cfg.output_dir).unwrap();
    let after = emit_reports(&reloaded, &cfg.output_dir).unwrap();
    assert_eq!(before, after);
}

#[test]
fn failed_network_does_not_stop_forest() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = config(tmp.path(), "n_runs = 1\nnet.lr0 = 0\nretry_limit = 2\n");
    let artifacts = run_experiment(&cfg).unwrap();
    let run = &artifacts.runs[0];
    let dnn = run.models.iter().find(|m| m.label == "dnn_p0.2").unwrap();
    assert_eq!(dnn.attempts, 3);
    assert!(dnn.failure.is_some());
    assert!(dnn.report.is_none());
    let rf = run.models.iter().find(|m| m.label == "rf").unwrap();
    assert!(rf.failure.is_none());
    assert!(rf.report.is_some());

    let summary = summarize(&artifacts).unwrap();
    assert_eq!(summary.failures.len(), 1);
    assert_eq!(summary.failures[0].model, "dnn_p0.2");
    assert_eq!(summary.failures[0].attempts, 3);
    let dnn_sum = summary.models.iter().find(|m| m.model == "dnn_p0.2").unwrap();
    assert_eq!((dnn_sum.n_ok, dnn_sum.n_failed), (0, 1));
    assert!(dnn_sum.aggregate.is_none());

    emit_reports(&artifacts, &cfg.output_dir).unwrap();
    let names = files(&cfg.output_dir);
    assert!(names.iter().any(|n| n == "run_000/dnn_p0.2/training_log.csv"));
    assert!(!names.iter().any(|n| n == "run_000/dnn_p0.2/report.json"));
}

#[test]
fn strict_calibration_uses_half_the_validation_set() {
    let tmp = tempfile::tempdir().unwrap();
    let loose = config(&tmp.path().join("a"), "n_runs = 1\n");
    let strict = config(&tmp.path().join("b"), "n_runs = 1\nstrict_calibration = true\n");
    let a = run_experiment(&loose).unwrap();
    let b = run_experiment(&strict).unwrap();
    let n_val = a.runs[0].split.as_ref().unwrap().validation.len();
    let cal = |art: &dropout_conformal::runner::RunArtifacts, label: &str| {
        art.runs[0].models.iter().find(|m| m.label == label).unwrap().report.as_ref().unwrap().n_calibration
    };
    assert_eq!(cal(&a, "dnn_p0.2"), n_val);
    assert_eq!(cal(&b, "dnn_p0.2"), n_val - n_val / 2);
    assert_eq!(cal(&a, "rf"), cal(&b, "rf"));
}

#[test]
fn same_seed_same_manifest_other_seed_differs() {
    let tmp = tempfile::tempdir().unwrap();
    let mut digests = Vec::new();
    for (name, seed) in [("a", 5), ("b", 5), ("c", 6)] {
        let mut cfg = config(&tmp.path().join(name), "n_runs = 1\nmodels = rf\n");
        cfg.seed = seed;
        let artifacts = run_experiment(&cfg).unwrap();
        digests.push(emit_reports(&artifacts, &cfg.output_dir).unwrap());
    }
    assert_eq!(digests[0], digests[1]);
    assert_ne!(digests[0], digests[2]);
}
