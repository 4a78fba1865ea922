//! Dropout conformal predictors for regression.
//!
//! A dropout-regularised feedforward regressor is applied many times with
//! dropout still active; the spread of those passes normalises the
//! calibration residuals, and the resulting nonconformity scores give
//! per-instance prediction intervals with finite-sample coverage. A random
//! forest cross-conformal predictor is provided as a baseline, together
//! with the evaluation and experiment-runner plumbing used to compare them.
//!
//! Module map:
//!
//! * [`data`]: feature/label tables, seeded splits, synthetic datasets.
//! * [`net`]: the ReLU network, backpropagation and the training loop.
//! * [`ensemble`]: test-time dropout ensembles and their summaries.
//! * [`forest`]: CART trees, random forests, out-of-fold calibration.
//! * [`conformal`]: nonconformity scores, calibration and intervals.
//! * [`eval`]: coverage, efficiency, accuracy and retrieval metrics.
//! * [`runner`]: configuration-driven experiments and report emission.

pub mod conformal;
pub mod data;
pub mod ensemble;
pub mod error;
pub mod eval;
pub mod forest;
pub mod net;
pub mod seed;
pub mod runner;
mod textfmt;

pub use error::{Error, Result};
