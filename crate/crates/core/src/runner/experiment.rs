//! Repeated-split experiments.
//!
//! Run `r` derives its seed as `derive(root, [RUN, r])`, so any run can be
//! recomputed on its own. Each run writes under `run_<rrr>/`:
//!
//! ```text
//! split.json
//! status.json
//! dnn_p<p>/training_log.csv  model.txt  calibration.csv  intervals.csv  report.json
//! rf/calibration.csv  intervals.csv  report.json
//! ```

use std::io::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::config::{DataSource, ExperimentConfig, ModelKind};
use crate::conformal::{dropout_icp, rf_ccp, write_calibration_dump, write_interval_table, ConfidenceLevel};
use crate::data::{load_table, make_synthetic, random_split, Dataset, SplitIndices};
use crate::error::{Error, Result};
use crate::eval::{evaluate, EvaluationReport};
use crate::net::{train, write_model, NetConfig, TrainingLog};
use crate::seed;

/// Outcome of one model within one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelRun {
    pub label: String,
    pub kind: ModelKind,
    pub dropout_p: Option<f64>,
    pub attempts: usize,
    /// `None` on success.
    pub failure: Option<String>,
    #[serde(skip)]
    pub report: Option<EvaluationReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub index: usize,
    pub seed: u64,
    pub models: Vec<ModelRun>,
    #[serde(skip)]
    pub split: Option<SplitIndices>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunArtifacts {
    pub config: ExperimentConfig,
    pub runs: Vec<RunRecord>,
}

pub fn run_dir(out: &Path, index: usize) -> PathBuf {
    out.join(format!("run_{index:03}"))
}

pub fn dnn_label(p: f64) -> String {
    format!("dnn_p{p}")
}

/// Model labels in report order.
pub fn model_labels(config: &ExperimentConfig) -> Vec<String> {
    let mut labels = Vec::new();
    for kind in &config.models {
        match kind {
            ModelKind::Dnn => labels.extend(config.dropout_p.iter().map(|&p| dnn_label(p))),
            ModelKind::Rf => labels.push("rf".into()),
        }
    }
    labels
}

pub fn load_dataset(config: &ExperimentConfig) -> Result<Dataset> {
    match &config.data {
        DataSource::Table { path, schema } => load_table(path, schema),
        DataSource::Synthetic { n, d, noise } => make_synthetic(*n, *d, *noise, seed::derive(config.seed, &[seed::SYNTHETIC])),
    }
}

pub fn run_seed(config: &ExperimentConfig, index: usize) -> u64 {
    seed::derive(config.seed, &[seed::RUN, index as u64])
}

fn create_dir(path: &Path) -> Result<()> {
    std::fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

pub(crate) fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::Report(e.to_string()))?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn write_training_log(log: &TrainingLog, path: &Path) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = std::io::BufWriter::new(file);
    let io = |e| Error::io(path, e);
    writeln!(out, "epoch,learning_rate,train_loss,val_rmse").map_err(io)?;
    for r in &log.epochs {
        writeln!(out, "{},{},{},{}", r.epoch, r.learning_rate, r.train_loss, r.val_rmse).map_err(io)?;
    }
    out.flush().map_err(io)
}

/// I/O problems abort the experiment; anything else only fails the model.
fn contain(result: Result<EvaluationReport>, run: &mut ModelRun) -> Result<()> {
    match result {
        Ok(report) => {
            run.report = Some(report);
            Ok(())
        }
        Err(e @ Error::Io { .. }) => Err(e),
        Err(e) => {
            run.failure = Some(e.to_string());
            Ok(())
        }
    }
}

struct Partitions {
    train: Dataset,
    early_stop: Dataset,
    calibration: Dataset,
    test: Dataset,
}

fn partitions(config: &ExperimentConfig, data: &Dataset, split: &SplitIndices) -> Result<Partitions> {
    let validation = data.subset(&split.validation)?;
    let (early_stop, calibration) = if config.strict_calibration {
        let half = split.validation.len() / 2;
        if half == 0 {
            return Err(Error::config("strict_calibration", "validation set too small to halve"));
        }
        (
            data.subset(&split.validation[..half])?,
            data.subset(&split.validation[half..])?,
        )
    } else {
        (validation.clone(), validation)
    };
    Ok(Partitions {
        train: data.subset(&split.train)?,
        early_stop,
        calibration,
        test: data.subset(&split.test)?,
    })
}

fn levels(config: &ExperimentConfig) -> Result<Vec<ConfidenceLevel>> {
    config.cl_grid.iter().map(|&c| ConfidenceLevel::new(c)).collect()
}

#[allow(clippy::too_many_arguments)]
fn run_dnn(
    config: &ExperimentConfig,
    parts: &Partitions,
    p_index: usize,
    p: f64,
    run_seed: u64,
    dir: &Path,
) -> Result<ModelRun> {
    let label = dnn_label(p);
    let model_dir = dir.join(&label);
    create_dir(&model_dir)?;
    let net = NetConfig {
        dropout_p: p,
        ..config.net.clone()
    };
    let mut run = ModelRun {
        label,
        kind: ModelKind::Dnn,
        dropout_p: Some(p),
        attempts: 0,
        failure: None,
        report: None,
    };
    let mut trained = None;
    let mut last_problem = String::new();
    for attempt in 0..=config.retry_limit {
        run.attempts = attempt + 1;
        let s = seed::derive(run_seed, &[seed::RETRY, p_index as u64, attempt as u64]);
        match train(&parts.train, &parts.early_stop, &net, s) {
            Ok((model, log)) => {
                write_training_log(&log, &model_dir.join("training_log.csv"))?;
                if log.converged {
                    trained = Some((model, s));
                    break;
                }
                last_problem = format!(
                    "best validation RMSE {} did not reach the gate {}",
                    log.best_val_rmse, net.rmse_gate
                );
            }
            Err(e @ Error::Diverged { .. }) => last_problem = e.to_string(),
            Err(e) => {
                run.failure = Some(e.to_string());
                return Ok(run);
            }
        }
    }
    let Some((model, s)) = trained else {
        run.failure = Some(format!("not converged after {} attempts: {last_problem}", run.attempts));
        return Ok(run);
    };
    write_model(&model, &model_dir.join("model.txt"))?;
    let result = (|| {
        let out = dropout_icp(&model, &parts.calibration, &parts.test, config.n_passes, &levels(config)?, s)?;
        write_calibration_dump(&out.records, &model_dir.join("calibration.csv"))?;
        write_interval_table(parts.test.ids(), &out.levels, &model_dir.join("intervals.csv"))?;
        let report = evaluate(&run.label, &out, parts.test.ids(), parts.test.labels(), config.default_cl, &config.cutoffs)?;
        write_json(&report, &model_dir.join("report.json"))?;
        Ok(report)
    })();
    contain(result, &mut run)?;
    Ok(run)
}

fn run_rf(config: &ExperimentConfig, parts: &Partitions, data: &Dataset, split: &SplitIndices, run_seed: u64, dir: &Path) -> Result<ModelRun> {
    let model_dir = dir.join("rf");
    create_dir(&model_dir)?;
    let mut run = ModelRun {
        label: "rf".into(),
        kind: ModelKind::Rf,
        dropout_p: None,
        attempts: 1,
        failure: None,
        report: None,
    };
    let result = (|| {
        let mut fit_rows = split.train.clone();
        fit_rows.extend_from_slice(&split.validation);
        let fit = data.subset(&fit_rows)?;
        let out = rf_ccp(
            &fit,
            &parts.test,
            &config.forest,
            config.cv_folds,
            &levels(config)?,
            seed::derive(run_seed, &[seed::FOREST]),
        )?;
        write_calibration_dump(&out.records, &model_dir.join("calibration.csv"))?;
        write_interval_table(parts.test.ids(), &out.levels, &model_dir.join("intervals.csv"))?;
        let report = evaluate("rf", &out, parts.test.ids(), parts.test.labels(), config.default_cl, &config.cutoffs)?;
        write_json(&report, &model_dir.join("report.json"))?;
        Ok(report)
    })();
    contain(result, &mut run)?;
    Ok(run)
}

/// Execute run `index` and write its directory under `config.output_dir`.
pub fn run_single(config: &ExperimentConfig, data: &Dataset, index: usize) -> Result<RunRecord> {
    let dir = run_dir(&config.output_dir, index);
    if dir.exists() {
        std::fs::remove_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    }
    create_dir(&dir)?;
    let s = run_seed(config, index);
    let split = random_split(data.n_rows(), config.split, s)?;
    write_json(&split, &dir.join("split.json"))?;
    let parts = partitions(config, data, &split)?;

    let mut models = Vec::new();
    for kind in &config.models {
        match kind {
            ModelKind::Dnn => {
                for (i, &p) in config.dropout_p.iter().enumerate() {
                    models.push(run_dnn(config, &parts, i, p, s, &dir)?);
                }
            }
            ModelKind::Rf => models.push(run_rf(config, &parts, data, &split, s, &dir)?),
        }
    }
    let record = RunRecord {
        index,
        seed: s,
        models,
        split: Some(split),
    };
    write_json(&record, &dir.join("status.json"))?;
    Ok(record)
}

/// Run every repetition. Runs execute on up to `config.workers` threads;
/// `on_run` is called as each one finishes.
pub fn run_experiment_with(config: &ExperimentConfig, on_run: &(dyn Fn(&RunRecord) + Sync)) -> Result<RunArtifacts> {
    config.validate()?;
    let data = load_dataset(config)?;
    create_dir(&config.output_dir)?;
    let cfg_path = config.output_dir.join("config.txt");
    std::fs::write(&cfg_path, config.to_canonical_string()).map_err(|e| Error::io(&cfg_path, e))?;

    let one = |r: usize| {
        let rec = run_single(config, &data, r)?;
        on_run(&rec);
        Ok(rec)
    };
    #[cfg(feature = "parallel")]
    let runs: Result<Vec<RunRecord>> = {
        use rayon::prelude::*;
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(config.workers)
            .build()
            .map_err(|e| Error::Invalid(e.to_string()))?;
        pool.install(|| (0..config.n_runs).into_par_iter().map(one).collect())
    };
    #[cfg(not(feature = "parallel"))]
    let runs: Result<Vec<RunRecord>> = (0..config.n_runs).map(one).collect();

    Ok(RunArtifacts {
        config: config.clone(),
        runs: runs?,
    })
}

pub fn run_experiment(config: &ExperimentConfig) -> Result<RunArtifacts> {
    run_experiment_with(config, &|_| {})
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Report(format!("{}: {e}", path.display())))
}

/// Rebuild artifacts from an output directory written by
/// [`run_experiment`].
pub fn load_artifacts(dir: &Path) -> Result<RunArtifacts> {
    let mut config = super::config::parse_config(&dir.join("config.txt"))?;
    config.output_dir = dir.to_path_buf();
    let mut runs = Vec::with_capacity(config.n_runs);
    for index in 0..config.n_runs {
        let rd = run_dir(dir, index);
        let mut record: RunRecord = read_json(&rd.join("status.json"))?;
        if record.index != index {
            return Err(Error::Report(format!("{} holds run {}", rd.display(), record.index)));
        }
        record.split = Some(read_json(&rd.join("split.json"))?);
        for m in &mut record.models {
            if m.failure.is_none() {
                m.report = Some(read_json(&rd.join(&m.label).join("report.json"))?);
            }
        }
        runs.push(record);
    }
    Ok(RunArtifacts { config, runs })
}
