//! Configuration-driven experiments: repeated splits, both conformal
//! pipelines, evaluation and report emission.

pub mod config;
mod experiment;
mod plot;
mod report;

pub use config::{parse_config, parse_config_str, DataSource, ExperimentConfig, ModelKind};
pub use experiment::{
    dnn_label, load_artifacts, load_dataset, model_labels, run_dir, run_experiment, run_experiment_with, run_seed,
    run_single, ModelRun, RunArtifacts, RunRecord,
};
pub use report::{build_manifest, emit_reports, summarize, ExperimentSummary, Failure, Manifest, ManifestEntry, ModelSummary, MANIFEST};
