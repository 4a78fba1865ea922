//! Cross-run tables, summary, plots and the digest manifest.
//!
//! Files written at the top of the output directory:
//!
//! | file | columns |
//! |------|---------|
//! | `calibration_curve.csv` | `model,run,cl,coverage` |
//! | `width_stats.csv` | `model,run,cl,n_finite,fraction_unbounded,mean,median,q1,q3,min,max` |
//! | `retrieval_counts.csv` | `model,run,cutoff,n_test,uncertain,true_positive,false_positive,false_negative,true_negative,tp_percent,tp_percent_of_calls` |
//! | `variance_error.csv` | `model,run,id,sigma,abs_error` |
//! | `summary.json` | per-model [`AggregateSummary`] plus failures |
//! | `plots/*.svg` | when `emit_plots` is set |
//! | `manifest.txt` | `<sha256>  <relative path>` for every other file, sorted |
//!
//! Empty cells stand for undefined values (e.g. widths when every interval
//! is unbounded).

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use super::experiment::{model_labels, write_json, RunArtifacts};
use super::plot;
use crate::error::{Error, Result};
use crate::eval::{aggregate_runs, AggregateSummary, EvaluationReport};

pub const MANIFEST: &str = "manifest.txt";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ManifestEntry {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Manifest {
    pub entries: Vec<ManifestEntry>,
}

impl Manifest {
    pub fn to_text(&self) -> String {
        self.entries.iter().map(|e| format!("{}  {}\n", e.sha256, e.path)).collect()
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Failure {
    pub run: usize,
    pub model: String,
    pub attempts: usize,
    pub reason: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct ModelSummary {
    pub model: String,
    pub n_ok: usize,
    pub n_failed: usize,
    pub aggregate: Option<AggregateSummary>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ExperimentSummary {
    pub n_runs: usize,
    pub models: Vec<ModelSummary>,
    pub failures: Vec<Failure>,
}

/// Reports of model `label` with their run indices.
pub fn reports_for<'a>(artifacts: &'a RunArtifacts, label: &str) -> Vec<(usize, &'a EvaluationReport)> {
    artifacts
        .runs
        .iter()
        .flat_map(|r| r.models.iter().map(move |m| (r.index, m)))
        .filter(|(_, m)| m.label == label)
        .filter_map(|(i, m)| m.report.as_ref().map(|rep| (i, rep)))
        .collect()
}

pub fn summarize(artifacts: &RunArtifacts) -> Result<ExperimentSummary> {
    let mut models = Vec::new();
    for label in model_labels(&artifacts.config) {
        let reports: Vec<EvaluationReport> = reports_for(artifacts, &label).into_iter().map(|(_, r)| r.clone()).collect();
        models.push(ModelSummary {
            n_ok: reports.len(),
            n_failed: artifacts.runs.len() - reports.len(),
            aggregate: if reports.is_empty() { None } else { Some(aggregate_runs(&reports)?) },
            model: label,
        });
    }
    let failures = artifacts
        .runs
        .iter()
        .flat_map(|r| {
            r.models.iter().filter_map(move |m| {
                m.failure.as_ref().map(|reason| Failure {
                    run: r.index,
                    model: m.label.clone(),
                    attempts: m.attempts,
                    reason: reason.clone(),
                })
            })
        })
        .collect();
    Ok(ExperimentSummary {
        n_runs: artifacts.runs.len(),
        models,
        failures,
    })
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn tables(artifacts: &RunArtifacts, out: &Path) -> Result<()> {
    let mut curve = String::from("model,run,cl,coverage\n");
    let mut widths = String::from("model,run,cl,n_finite,fraction_unbounded,mean,median,q1,q3,min,max\n");
    let mut retrieval = String::from(
        "model,run,cutoff,n_test,uncertain,true_positive,false_positive,false_negative,true_negative,tp_percent,tp_percent_of_calls\n",
    );
    let mut pairs = String::from("model,run,id,sigma,abs_error\n");
    for label in model_labels(&artifacts.config) {
        for (run, rep) in reports_for(artifacts, &label) {
            for p in &rep.curve.points {
                let _ = writeln!(curve, "{label},{run},{},{}", p.cl, p.coverage);
            }
            for w in &rep.widths {
                let _ = writeln!(
                    widths,
                    "{label},{run},{},{},{},{},{},{},{},{},{}",
                    w.cl,
                    w.n_finite,
                    w.fraction_unbounded,
                    opt(w.mean),
                    opt(w.median),
                    opt(w.q1),
                    opt(w.q3),
                    opt(w.min),
                    opt(w.max)
                );
            }
            for c in &rep.retrieval {
                let _ = writeln!(
                    retrieval,
                    "{label},{run},{},{},{},{},{},{},{},{},{}",
                    c.cutoff,
                    c.n_test,
                    c.uncertain,
                    c.true_positive,
                    c.false_positive,
                    c.false_negative,
                    c.true_negative,
                    c.tp_percent,
                    opt(c.tp_percent_of_calls)
                );
            }
            for p in &rep.variance_error {
                let _ = writeln!(pairs, "{label},{run},{},{},{}", p.id, p.sigma, p.abs_error);
            }
        }
    }
    write_text(&out.join("calibration_curve.csv"), &curve)?;
    write_text(&out.join("width_stats.csv"), &widths)?;
    write_text(&out.join("retrieval_counts.csv"), &retrieval)?;
    write_text(&out.join("variance_error.csv"), &pairs)
}

fn collect_files(root: &Path, dir: &Path, out: &mut Vec<PathBuf>) -> Result<()> {
    let entries = std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    for entry in entries {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        if path.is_dir() {
            collect_files(root, &path, out)?;
        } else {
            out.push(path.strip_prefix(root).expect("under root").to_path_buf());
        }
    }
    Ok(())
}

/// Digest every file under `dir` except the manifest itself.
pub fn build_manifest(dir: &Path) -> Result<Manifest> {
    let mut files = Vec::new();
    collect_files(dir, dir, &mut files)?;
    let mut entries = files
        .into_iter()
        .map(|rel| rel.components().map(|c| c.as_os_str().to_string_lossy().into_owned()).collect::<Vec<_>>().join("/"))
        .filter(|p| p != MANIFEST)
        .map(|path| {
            let full = dir.join(&path);
            let bytes = std::fs::read(&full).map_err(|e| Error::io(&full, e))?;
            Ok(ManifestEntry {
                sha256: hex::encode(Sha256::digest(&bytes)),
                path,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    entries.sort_by(|a, b| a.path.cmp(&b.path));
    Ok(Manifest { entries })
}

/// Write tables, summary, optional plots and the manifest into `out`.
pub fn emit_reports(artifacts: &RunArtifacts, out: &Path) -> Result<Manifest> {
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    tables(artifacts, out)?;
    let summary = summarize(artifacts)?;
    write_json(&summary, &out.join("summary.json"))?;
    let plots = out.join("plots");
    if plots.exists() {
        std::fs::remove_dir_all(&plots).map_err(|e| Error::io(&plots, e))?;
    }
    if artifacts.config.emit_plots {
        std::fs::create_dir_all(&plots).map_err(|e| Error::io(&plots, e))?;
        write_text(&plots.join("calibration_curve.svg"), &plot::calibration_svg(&summary))?;
        write_text(&plots.join("widths.svg"), &plot::widths_svg(artifacts))?;
        write_text(&plots.join("variance_error.svg"), &plot::variance_error_svg(artifacts))?;
    }
    let manifest = build_manifest(out)?;
    write_text(&out.join(MANIFEST), &manifest.to_text())?;
    Ok(manifest)
}
