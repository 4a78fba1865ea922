//! Normalised inductive conformal regression.
//!
//! Nonconformity of a calibration instance is its absolute residual scaled
//! down by the exponential of its ensemble spread,
//!
//! ```text
//! alpha_i = |y_i - y_hat_i| / exp(sigma_i)
//! ```
//!
//! and a test instance gets the interval `y_hat_j +/- exp(sigma_j) * alpha_cl`,
//! where `alpha_cl` is the `k`-th smallest calibration score with
//! `k = ceil(cl * (n + 1))`. When `k > n` the calibration set is too small
//! for the requested level and the interval is the whole real line.
//!
//! Two pipelines are provided: [`dropout_icp`] calibrates a trained network
//! on a held-out set, [`rf_ccp`] pools out-of-fold forest scores.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::ensemble::{mc_dropout_predict, EnsemblePrediction};
use crate::error::{Error, Result};
use crate::forest::{fit_forest, forest_predict, oof_calibration, ForestConfig};
use crate::net::MlpModel;
use crate::seed;

/// Exponent arguments are clamped here so `exp` stays finite.
pub const MAX_EXPONENT: f64 = 700.0;

/// Absorbs rounding in `cl * (n + 1)` so that e.g. `0.8 * 10` gives `k = 8`.
const INDEX_EPS: f64 = 1e-9;

fn scale(sigma: f64) -> f64 {
    sigma.min(MAX_EXPONENT).exp()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CalibrationSource {
    Dropout,
    RfCrossConformal,
}

/// A confidence level strictly between 0 and 1.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
pub struct ConfidenceLevel(f64);

impl ConfidenceLevel {
    pub const DEFAULT: ConfidenceLevel = ConfidenceLevel(0.80);

    pub fn new(cl: f64) -> Result<Self> {
        if cl > 0.0 && cl < 1.0 {
            Ok(Self(cl))
        } else {
            Err(Error::Invalid(format!("confidence level {cl} is not in (0, 1)")))
        }
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

impl Default for ConfidenceLevel {
    fn default() -> Self {
        Self::DEFAULT
    }
}

/// `|y - y_hat| / exp(sigma)`.
pub fn nonconformity(y: f64, y_hat: f64, sigma: f64) -> Result<f64> {
    if !(y.is_finite() && y_hat.is_finite() && sigma.is_finite()) {
        return Err(Error::Invalid(format!(
            "non-finite nonconformity input (y={y}, y_hat={y_hat}, sigma={sigma})"
        )));
    }
    if sigma < 0.0 {
        return Err(Error::Invalid(format!("negative sigma {sigma}")));
    }
    Ok((y - y_hat).abs() / scale(sigma))
}

/// Ascending nonconformity scores of a calibration set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationModel {
    alphas: Vec<f64>,
    pub source: CalibrationSource,
}

impl CalibrationModel {
    /// Sorts `alphas` (stable); all scores must be finite and >= 0.
    pub fn from_scores(mut alphas: Vec<f64>, source: CalibrationSource) -> Result<Self> {
        if alphas.is_empty() {
            return Err(Error::Invalid("calibration set is empty".into()));
        }
        if let Some(a) = alphas.iter().find(|a| !(a.is_finite() && **a >= 0.0)) {
            return Err(Error::Invalid(format!("invalid nonconformity score {a}")));
        }
        alphas.sort_by(f64::total_cmp);
        Ok(Self { alphas, source })
    }

    pub fn alphas(&self) -> &[f64] {
        &self.alphas
    }

    pub fn n(&self) -> usize {
        self.alphas.len()
    }
}

/// Calibrate from labels and an ensemble over the same instances.
pub fn build_calibration(y: &[f64], preds: &EnsemblePrediction, source: CalibrationSource) -> Result<CalibrationModel> {
    build_calibration_from_parts(y, &preds.means, &preds.stds, source)
}

pub fn build_calibration_from_parts(
    y: &[f64],
    y_hat: &[f64],
    sigma: &[f64],
    source: CalibrationSource,
) -> Result<CalibrationModel> {
    if y.len() != y_hat.len() || y.len() != sigma.len() {
        return Err(Error::Length {
            left: y.len(),
            right: y_hat.len().min(sigma.len()),
        });
    }
    let alphas = y
        .iter()
        .zip(y_hat)
        .zip(sigma)
        .map(|((&y, &p), &s)| nonconformity(y, p, s))
        .collect::<Result<Vec<_>>>()?;
    CalibrationModel::from_scores(alphas, source)
}

/// `k = ceil(cl * (n + 1))`, the 1-based rank of the calibration score used
/// at level `cl`.
pub fn calibration_rank(n: usize, cl: ConfidenceLevel) -> usize {
    (cl.value() * (n + 1) as f64 - INDEX_EPS).ceil() as usize
}

/// The `k`-th smallest score, or `+inf` when `k > n`.
pub fn alpha_at_level(cal: &CalibrationModel, cl: ConfidenceLevel) -> f64 {
    let k = calibration_rank(cal.n(), cl);
    if k == 0 {
        0.0
    } else if k <= cal.n() {
        cal.alphas[k - 1]
    } else {
        f64::INFINITY
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionInterval {
    pub center: f64,
    pub sigma: f64,
    pub alpha_cl: f64,
    pub half_width: f64,
    pub lower: f64,
    pub upper: f64,
    pub cl: f64,
}

impl PredictionInterval {
    pub fn is_unbounded(&self) -> bool {
        self.half_width.is_infinite()
    }

    pub fn width(&self) -> f64 {
        self.upper - self.lower
    }

    /// Closed-interval membership. A value whose nonconformity score equals
    /// `alpha_cl` is a boundary point and counts as covered even when the
    /// bounds themselves round the other way.
    pub fn contains(&self, y: f64) -> bool {
        if self.is_unbounded() {
            return true;
        }
        (self.lower <= y && y <= self.upper) || (y - self.center).abs() / scale(self.sigma) <= self.alpha_cl
    }
}

/// `y_hat +/- exp(sigma) * alpha_cl`; an infinite `alpha_cl` gives the
/// whole line.
pub fn predict_interval(y_hat: f64, sigma: f64, alpha_cl: f64, cl: ConfidenceLevel) -> Result<PredictionInterval> {
    if !y_hat.is_finite() || !sigma.is_finite() {
        return Err(Error::Invalid(format!("non-finite prediction (y_hat={y_hat}, sigma={sigma})")));
    }
    if sigma < 0.0 {
        return Err(Error::Invalid(format!("negative sigma {sigma}")));
    }
    if alpha_cl.is_nan() || alpha_cl < 0.0 {
        return Err(Error::Invalid(format!("invalid alpha_cl {alpha_cl}")));
    }
    let half_width = if alpha_cl.is_infinite() {
        f64::INFINITY
    } else {
        scale(sigma) * alpha_cl
    };
    Ok(PredictionInterval {
        center: y_hat,
        sigma,
        alpha_cl,
        half_width,
        lower: y_hat - half_width,
        upper: y_hat + half_width,
        cl: cl.value(),
    })
}

/// Intervals for every instance of `preds` at one level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelIntervals {
    pub cl: f64,
    pub alpha_cl: f64,
    pub intervals: Vec<PredictionInterval>,
}

pub fn intervals_at_levels(
    cal: &CalibrationModel,
    preds: &EnsemblePrediction,
    levels: &[ConfidenceLevel],
) -> Result<Vec<LevelIntervals>> {
    levels
        .iter()
        .map(|&cl| {
            let alpha_cl = alpha_at_level(cal, cl);
            let intervals = preds
                .means
                .iter()
                .zip(&preds.stds)
                .map(|(&m, &s)| predict_interval(m, s, alpha_cl, cl))
                .collect::<Result<_>>()?;
            Ok(LevelIntervals {
                cl: cl.value(),
                alpha_cl,
                intervals,
            })
        })
        .collect()
}

/// One calibration instance as dumped to disk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationRecord {
    pub id: String,
    pub y: f64,
    pub y_hat: f64,
    pub sigma: f64,
    pub alpha: f64,
}

/// Everything a conformal pipeline produces for one test set.
#[derive(Debug, Clone, PartialEq)]
pub struct ConformalOutput {
    pub calibration: CalibrationModel,
    pub records: Vec<CalibrationRecord>,
    pub test_prediction: EnsemblePrediction,
    pub levels: Vec<LevelIntervals>,
}

impl ConformalOutput {
    pub fn at_level(&self, cl: f64) -> Option<&LevelIntervals> {
        self.levels.iter().find(|l| (l.cl - cl).abs() < 1e-12)
    }
}

fn records(ids: &[String], y: &[f64], y_hat: &[f64], sigma: &[f64]) -> Result<Vec<CalibrationRecord>> {
    let mut out = ids
        .iter()
        .zip(y)
        .zip(y_hat)
        .zip(sigma)
        .map(|(((id, &y), &p), &s)| {
            Ok(CalibrationRecord {
                id: id.clone(),
                y,
                y_hat: p,
                sigma: s,
                alpha: nonconformity(y, p, s)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    out.sort_by(|a, b| a.alpha.total_cmp(&b.alpha));
    Ok(out)
}

/// Dropout inductive conformal prediction with a trained network:
/// test-time dropout on the calibration set, scores, then test-time
/// dropout on the test set (an independent stream) and intervals.
pub fn dropout_icp(
    model: &MlpModel,
    calibration_set: &Dataset,
    test: &Dataset,
    n_passes: usize,
    levels: &[ConfidenceLevel],
    seed: u64,
) -> Result<ConformalOutput> {
    let cal_pred = mc_dropout_predict(
        model,
        calibration_set.features().view(),
        n_passes,
        seed::derive(seed, &[seed::PASSES_CALIBRATION]),
    )?;
    let calibration = build_calibration(calibration_set.labels(), &cal_pred, CalibrationSource::Dropout)?;
    let test_prediction = mc_dropout_predict(
        model,
        test.features().view(),
        n_passes,
        seed::derive(seed, &[seed::PASSES_TEST]),
    )?;
    let levels = intervals_at_levels(&calibration, &test_prediction, levels)?;
    Ok(ConformalOutput {
        records: records(calibration_set.ids(), calibration_set.labels(), &cal_pred.means, &cal_pred.stds)?,
        calibration,
        test_prediction,
        levels,
    })
}

/// Random-forest cross-conformal prediction: scores from `k`-fold
/// out-of-fold predictions on `train`, test spread from one forest fit on
/// all of `train`.
pub fn rf_ccp(
    train: &Dataset,
    test: &Dataset,
    config: &ForestConfig,
    k: usize,
    levels: &[ConfidenceLevel],
    seed: u64,
) -> Result<ConformalOutput> {
    let oof = oof_calibration(train, config, k, seed)?;
    let calibration = build_calibration_from_parts(&oof.y, &oof.y_hat, &oof.sigma, CalibrationSource::RfCrossConformal)?;
    let forest = fit_forest(train, config, seed::derive(seed, &[seed::FOREST]))?;
    let test_prediction = forest_predict(&forest, test.features().view())?;
    let levels = intervals_at_levels(&calibration, &test_prediction, levels)?;
    Ok(ConformalOutput {
        records: records(train.ids(), &oof.y, &oof.y_hat, &oof.sigma)?,
        calibration,
        test_prediction,
        levels,
    })
}

/// `id,y,y_hat,sigma,alpha`, ascending by alpha.
pub fn write_calibration_dump(records: &[CalibrationRecord], path: &Path) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = std::io::BufWriter::new(file);
    let io = |e| Error::io(path, e);
    writeln!(out, "id,y,y_hat,sigma,alpha").map_err(io)?;
    for r in records {
        writeln!(out, "{},{},{},{},{}", r.id, r.y, r.y_hat, r.sigma, r.alpha).map_err(io)?;
    }
    out.flush().map_err(io)
}

/// `id,cl,y_hat,sigma,lower,upper,unbounded`, level by level.
pub fn write_interval_table(ids: &[String], levels: &[LevelIntervals], path: &Path) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = std::io::BufWriter::new(file);
    let io = |e| Error::io(path, e);
    writeln!(out, "id,cl,y_hat,sigma,lower,upper,unbounded").map_err(io)?;
    for level in levels {
        if level.intervals.len() != ids.len() {
            return Err(Error::Length {
                left: ids.len(),
                right: level.intervals.len(),
            });
        }
        for (id, iv) in ids.iter().zip(&level.intervals) {
            writeln!(
                out,
                "{id},{},{},{},{},{},{}",
                level.cl,
                iv.center,
                iv.sigma,
                iv.lower,
                iv.upper,
                iv.is_unbounded()
            )
            .map_err(io)?;
        }
    }
    out.flush().map_err(io)
}
