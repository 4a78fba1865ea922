//! Test-time dropout ensembles.
//!
//! Each pass draws its own keep-masks from the stream `(seed, pass)`, so the
//! pass matrix does not depend on how passes are scheduled across threads.

use std::io::Write;
use std::path::Path;

use ndarray::{Array2, ArrayView2};
#[cfg(feature = "parallel")]
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::net::{DropoutMasks, MlpModel};
use crate::seed;

/// Per-instance mean and spread over `n_members` ensemble members.
#[derive(Debug, Clone, PartialEq)]
pub struct EnsemblePrediction {
    pub means: Vec<f64>,
    pub stds: Vec<f64>,
    /// `n_instances x n_members`.
    pub passes: Array2<f64>,
    pub n_members: usize,
}

impl EnsemblePrediction {
    /// Summarise a raw `n_instances x n_members` pass matrix.
    pub fn from_passes(passes: Array2<f64>) -> Result<Self> {
        if passes.ncols() == 0 {
            return Err(Error::Invalid("ensemble needs at least one member".into()));
        }
        let (means, stds) = passes
            .rows()
            .into_iter()
            .map(|r| pass_stats(r.as_slice().expect("standard layout")).expect("non-empty"))
            .unzip();
        Ok(Self {
            means,
            stds,
            n_members: passes.ncols(),
            passes,
        })
    }

    pub fn len(&self) -> usize {
        self.means.len()
    }

    pub fn is_empty(&self) -> bool {
        self.means.is_empty()
    }
}

/// Arithmetic mean and population standard deviation (divide by N).
pub fn pass_stats(row: &[f64]) -> Result<(f64, f64)> {
    if row.is_empty() {
        return Err(Error::Invalid("pass_stats of an empty sequence".into()));
    }
    if row.iter().all(|&v| v == row[0]) {
        return Ok((row[0], 0.0));
    }
    let n = row.len() as f64;
    let mean = row.iter().sum::<f64>() / n;
    // Corrected two-pass variance.
    let (sd, sd2) = row.iter().fold((0.0, 0.0), |(a, b), v| (a + (v - mean), b + (v - mean) * (v - mean)));
    let var = ((sd2 - sd * sd / n) / n).max(0.0);
    Ok((mean, var.sqrt()))
}

/// How to schedule independent passes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Schedule {
    Serial,
    Parallel,
}

impl Default for Schedule {
    fn default() -> Self {
        if cfg!(feature = "parallel") {
            Schedule::Parallel
        } else {
            Schedule::Serial
        }
    }
}

fn one_pass(model: &MlpModel, x: ArrayView2<'_, f64>, seed_: u64, pass: usize) -> Result<Vec<f64>> {
    let cfg = model.config();
    let mut rng = seed::stream(seed_, &[pass as u64]);
    let masks = DropoutMasks::sample(&cfg.hidden_sizes, x.nrows(), cfg.dropout_p, &mut rng);
    Ok(model.forward_batch(x, Some(&masks))?.to_vec())
}

/// `n_passes` stochastic forward passes over every row of `features`.
pub fn mc_dropout_predict(
    model: &MlpModel,
    features: ArrayView2<'_, f64>,
    n_passes: usize,
    seed: u64,
) -> Result<EnsemblePrediction> {
    mc_dropout_predict_with(model, features, n_passes, seed, Schedule::default())
}

pub fn mc_dropout_predict_with(
    model: &MlpModel,
    features: ArrayView2<'_, f64>,
    n_passes: usize,
    seed: u64,
    schedule: Schedule,
) -> Result<EnsemblePrediction> {
    if n_passes == 0 {
        return Err(Error::Invalid("n_passes must be >= 1".into()));
    }
    if features.ncols() != model.input_dim() {
        return Err(Error::Dimension {
            expected: model.input_dim(),
            actual: features.ncols(),
        });
    }
    let columns: Vec<Vec<f64>> = match schedule {
        #[cfg(feature = "parallel")]
        Schedule::Parallel => (0..n_passes)
            .into_par_iter()
            .map(|p| one_pass(model, features, seed, p))
            .collect::<Result<_>>()?,
        _ => (0..n_passes)
            .map(|p| one_pass(model, features, seed, p))
            .collect::<Result<_>>()?,
    };
    let n = features.nrows();
    let passes = Array2::from_shape_fn((n, n_passes), |(i, p)| columns[p][i]);
    EnsemblePrediction::from_passes(passes)
}

/// Dump the pass matrix as `id,pass_0,...,pass_{N-1}`.
pub fn write_pass_matrix(ids: &[String], pred: &EnsemblePrediction, path: &Path) -> Result<()> {
    if ids.len() != pred.len() {
        return Err(Error::Length {
            left: ids.len(),
            right: pred.len(),
        });
    }
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = std::io::BufWriter::new(file);
    let io = |e| Error::io(path, e);
    let header: Vec<String> = (0..pred.n_members).map(|p| format!("pass_{p}")).collect();
    writeln!(out, "id,{}", header.join(",")).map_err(io)?;
    for (id, row) in ids.iter().zip(pred.passes.rows()) {
        let cells: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        writeln!(out, "{id},{}", cells.join(",")).map_err(io)?;
    }
    out.flush().map_err(io)
}
