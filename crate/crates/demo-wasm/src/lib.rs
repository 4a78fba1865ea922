//! Browser demo: fit a conformal predictor on one-dimensional synthetic
//! data and explore its intervals, calibration and screening outcome.
//!
//! [`Session`] holds the computation and is usable natively; [`Demo`] is
//! the JavaScript facade and returns JSON strings.

use dropout_conformal::conformal::{
    alpha_at_level, dropout_icp, predict_interval, rf_ccp, CalibrationModel, ConfidenceLevel, PredictionInterval,
};
use dropout_conformal::data::{make_synthetic, random_split, Dataset, NoiseModel};
use dropout_conformal::eval::{calibration_curve, coverage, rmse, screen_counts, CalibrationCurve, RetrievalCounts};
use dropout_conformal::forest::ForestConfig;
use dropout_conformal::net::{train, NetConfig};
use serde::Serialize;
use wasm_bindgen::prelude::*;

pub const GRID: [f64; 19] = [
    0.05, 0.10, 0.15, 0.20, 0.25, 0.30, 0.35, 0.40, 0.45, 0.50, 0.55, 0.60, 0.65, 0.70, 0.75, 0.80, 0.85, 0.90, 0.95,
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Model {
    Dnn,
    Rf,
}

impl Model {
    pub fn parse(s: &str) -> Result<Self, String> {
        match s {
            "dnn" => Ok(Model::Dnn),
            "rf" => Ok(Model::Rf),
            _ => Err(format!("unknown model {s:?}, expected dnn or rf")),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Summary {
    pub model: &'static str,
    pub n_train: usize,
    pub n_calibration: usize,
    pub n_test: usize,
    pub rmse: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
    pub center: f64,
    pub lower: f64,
    pub upper: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct IntervalView {
    pub cl: f64,
    pub alpha_cl: f64,
    pub coverage: f64,
    pub median_width: Option<f64>,
    pub points: Vec<Point>,
}

pub struct Session {
    summary: Summary,
    x: Vec<f64>,
    y: Vec<f64>,
    y_hat: Vec<f64>,
    sigma: Vec<f64>,
    calibration: CalibrationModel,
}

fn err(e: impl std::fmt::Display) -> String {
    e.to_string()
}

fn level(cl: f64) -> Result<ConfidenceLevel, String> {
    ConfidenceLevel::new(cl).map_err(err)
}

impl Session {
    /// `n` points with `x ~ U(-1, 1)` and heteroscedastic noise of mean
    /// standard deviation `noise`, split 60/20/20.
    pub fn fit(model: Model, n: usize, noise: f64, dropout_p: f64, seed: u64) -> Result<Self, String> {
        let data = make_synthetic(n, 1, NoiseModel::Heteroscedastic { scale: noise }, seed).map_err(err)?;
        let split = random_split(n, (0.6, 0.2, 0.2), seed).map_err(err)?;
        let part = |rows: &[usize]| data.subset(rows).map_err(err);
        let (tr, va, te): (Dataset, Dataset, Dataset) = (part(&split.train)?, part(&split.validation)?, part(&split.test)?);
        let levels: Vec<ConfidenceLevel> = GRID.iter().map(|&c| level(c)).collect::<Result<_, _>>()?;

        let (out, n_train) = match model {
            Model::Dnn => {
                let config = NetConfig {
                    hidden_sizes: vec![32, 16],
                    dropout_p,
                    max_epochs: 1500,
                    patience: 200,
                    ..NetConfig::default()
                };
                let (net, _) = train(&tr, &va, &config, seed).map_err(err)?;
                (dropout_icp(&net, &va, &te, 100, &levels, seed).map_err(err)?, tr.n_rows())
            }
            Model::Rf => {
                let fit = tr.concat(&va).map_err(err)?;
                let config = ForestConfig {
                    n_trees: 30,
                    min_samples_leaf: 3,
                    ..ForestConfig::default()
                };
                (rf_ccp(&fit, &te, &config, 5, &levels, seed).map_err(err)?, fit.n_rows())
            }
        };
        let pred = out.test_prediction;
        Ok(Session {
            summary: Summary {
                model: if model == Model::Dnn { "dnn" } else { "rf" },
                n_train,
                n_calibration: out.calibration.n(),
                n_test: te.n_rows(),
                rmse: rmse(te.labels(), &pred.means).map_err(err)?,
            },
            x: te.features().column(0).to_vec(),
            y: te.labels().to_vec(),
            y_hat: pred.means,
            sigma: pred.stds,
            calibration: out.calibration,
        })
    }

    pub fn summary(&self) -> &Summary {
        &self.summary
    }

    fn intervals_at(&self, cl: ConfidenceLevel) -> Result<Vec<PredictionInterval>, String> {
        let alpha = alpha_at_level(&self.calibration, cl);
        self.y_hat
            .iter()
            .zip(&self.sigma)
            .map(|(&p, &s)| predict_interval(p, s, alpha, cl).map_err(err))
            .collect()
    }

    /// Test-set intervals at `cl`, ordered by `x`.
    pub fn intervals(&self, cl: f64) -> Result<IntervalView, String> {
        let level = level(cl)?;
        let ivs = self.intervals_at(level)?;
        let mut widths: Vec<f64> = ivs.iter().filter(|i| !i.is_unbounded()).map(|i| i.width()).collect();
        widths.sort_by(f64::total_cmp);
        let mut points: Vec<Point> = ivs
            .iter()
            .enumerate()
            .map(|(i, iv)| Point {
                x: self.x[i],
                y: self.y[i],
                center: iv.center,
                lower: iv.lower,
                upper: iv.upper,
            })
            .collect();
        points.sort_by(|a, b| a.x.total_cmp(&b.x));
        Ok(IntervalView {
            cl,
            alpha_cl: alpha_at_level(&self.calibration, level),
            coverage: coverage(&ivs, &self.y).map_err(err)?,
            median_width: widths.get(widths.len() / 2).copied(),
            points,
        })
    }

    /// Empirical test coverage over [`GRID`].
    pub fn calibration(&self) -> Result<CalibrationCurve, String> {
        let per_level = GRID
            .iter()
            .map(|&c| self.intervals_at(level(c)?))
            .collect::<Result<Vec<_>, _>>()?;
        calibration_curve(&per_level, &self.y, &GRID).map_err(err)
    }

    /// Screening outcome at `cutoff` using intervals at `cl`.
    pub fn retrieval(&self, cl: f64, cutoff: f64) -> Result<RetrievalCounts, String> {
        let ivs = self.intervals_at(level(cl)?)?;
        let mut counts = screen_counts(&ivs, &self.y, &[cutoff]).map_err(err)?;
        Ok(counts.remove(0))
    }
}

fn to_json<T: Serialize>(value: Result<T, String>) -> Result<String, JsError> {
    let value = value.map_err(|e| JsError::new(&e))?;
    serde_json::to_string(&value).map_err(|e| JsError::new(&e.to_string()))
}

#[wasm_bindgen]
pub struct Demo {
    session: Session,
}

#[wasm_bindgen]
impl Demo {
    /// `model` is `"dnn"` or `"rf"`.
    #[wasm_bindgen(constructor)]
    pub fn new(model: &str, n: usize, noise: f64, dropout_p: f64, seed: u32) -> Result<Demo, JsError> {
        let model = Model::parse(model).map_err(|e| JsError::new(&e))?;
        let session = Session::fit(model, n, noise, dropout_p, seed as u64).map_err(|e| JsError::new(&e))?;
        Ok(Demo { session })
    }

    pub fn summary(&self) -> Result<String, JsError> {
        to_json(Ok(self.session.summary()))
    }

    pub fn intervals(&self, cl: f64) -> Result<String, JsError> {
        to_json(self.session.intervals(cl))
    }

    pub fn calibration(&self) -> Result<String, JsError> {
        to_json(self.session.calibration())
    }

    pub fn retrieval(&self, cl: f64, cutoff: f64) -> Result<String, JsError> {
        to_json(self.session.retrieval(cl, cutoff))
    }
}
