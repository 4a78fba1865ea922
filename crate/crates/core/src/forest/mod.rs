//! Random forest regression baseline.
//!
//! Trees are fully grown CART trees on bootstrap resamples; the spread of
//! per-tree predictions plays the role the dropout-pass spread plays for
//! the network. [`oof_calibration`] produces the out-of-fold
//! `(y, y_hat, sigma)` triples that cross-conformal calibration needs.

mod cart;
mod io;

use ndarray::{Array2, ArrayView2};
use rand::seq::SliceRandom;
use rand::Rng;
#[cfg(feature = "parallel")]
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::ensemble::EnsemblePrediction;
use crate::error::{Error, Result};
use crate::seed;

pub use cart::{fit_cart, fit_cart_on, Node, RegressionTree, SPLIT_TOLERANCE};
pub use io::{forest_from_str, forest_to_string, read_forest, write_forest};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MaxFeatures {
    All,
    Count(usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestConfig {
    pub n_trees: usize,
    pub max_features: MaxFeatures,
    pub min_samples_split: usize,
    pub min_samples_leaf: usize,
    pub bootstrap: bool,
}

impl Default for ForestConfig {
    fn default() -> Self {
        Self {
            n_trees: 100,
            max_features: MaxFeatures::All,
            min_samples_split: 2,
            min_samples_leaf: 1,
            bootstrap: true,
        }
    }
}

impl ForestConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_trees == 0 {
            return Err(Error::config("n_trees", "must be >= 1"));
        }
        if self.max_features == MaxFeatures::Count(0) {
            return Err(Error::config("max_features", "must be >= 1"));
        }
        if self.min_samples_split < 2 {
            return Err(Error::config("min_samples_split", "must be >= 2"));
        }
        if self.min_samples_leaf == 0 {
            return Err(Error::config("min_samples_leaf", "must be >= 1"));
        }
        Ok(())
    }

    fn validate_for(&self, n_features: usize) -> Result<()> {
        self.validate()?;
        match self.max_features {
            MaxFeatures::Count(k) if k > n_features => Err(Error::config(
                "max_features",
                format!("{k} exceeds the {n_features} available features"),
            )),
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Forest {
    pub trees: Vec<RegressionTree>,
    pub config: ForestConfig,
    pub seed: u64,
    pub n_features: usize,
}

fn fit_tree(train: &Dataset, config: &ForestConfig, seed_: u64, t: usize) -> RegressionTree {
    let mut rng = seed::stream(seed_, &[seed::TREE, t as u64]);
    let n = train.n_rows();
    let sample: Vec<usize> = if config.bootstrap {
        (0..n).map(|_| rng.random_range(0..n)).collect()
    } else {
        (0..n).collect()
    };
    fit_cart_on(train.features().view(), train.labels(), &sample, config, &mut rng)
}

/// Fit `n_trees` trees, tree `t` on its own stream `(seed, TREE, t)`.
pub fn fit_forest(train: &Dataset, config: &ForestConfig, seed: u64) -> Result<Forest> {
    config.validate_for(train.n_features())?;
    #[cfg(feature = "parallel")]
    let trees = (0..config.n_trees)
        .into_par_iter()
        .map(|t| fit_tree(train, config, seed, t))
        .collect();
    #[cfg(not(feature = "parallel"))]
    let trees = (0..config.n_trees)
        .map(|t| fit_tree(train, config, seed, t))
        .collect();
    Ok(Forest {
        trees,
        config: config.clone(),
        seed,
        n_features: train.n_features(),
    })
}

/// Per-tree predictions summarised as mean and population std.
pub fn forest_predict(forest: &Forest, features: ArrayView2<'_, f64>) -> Result<EnsemblePrediction> {
    if features.ncols() != forest.n_features {
        return Err(Error::Dimension {
            expected: forest.n_features,
            actual: features.ncols(),
        });
    }
    let passes = Array2::from_shape_fn((features.nrows(), forest.trees.len()), |(i, t)| {
        forest.trees[t].predict_row(features.row(i))
    });
    EnsemblePrediction::from_passes(passes)
}

/// Out-of-fold predictions for every training row, in the row order of
/// the input dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OofCalibrationData {
    pub y: Vec<f64>,
    pub y_hat: Vec<f64>,
    pub sigma: Vec<f64>,
    /// Fold that held each row out.
    pub fold: Vec<usize>,
}

impl OofCalibrationData {
    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }
}

/// Seeded assignment of `n` rows to `k` folds whose sizes differ by at
/// most one. Returns the rows of each fold in ascending order.
pub fn kfold_assignment(n: usize, k: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    if k < 2 {
        return Err(Error::Invalid(format!("need at least 2 folds, got {k}")));
    }
    if n < k {
        return Err(Error::Invalid(format!("{n} rows cannot fill {k} folds")));
    }
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(&mut seed::stream(seed, &[seed::FOLDS]));
    let (base, extra) = (n / k, n % k);
    let mut folds = Vec::with_capacity(k);
    let mut start = 0;
    for f in 0..k {
        let len = base + usize::from(f < extra);
        let mut fold = perm[start..start + len].to_vec();
        fold.sort_unstable();
        folds.push(fold);
        start += len;
    }
    Ok(folds)
}

/// k-fold cross-validation: each fold is predicted by a forest fit on the
/// other `k - 1` folds.
pub fn oof_calibration(train: &Dataset, config: &ForestConfig, k: usize, seed: u64) -> Result<OofCalibrationData> {
    config.validate_for(train.n_features())?;
    let n = train.n_rows();
    let folds = kfold_assignment(n, k, seed)?;
    let mut out = OofCalibrationData {
        y: train.labels().to_vec(),
        y_hat: vec![f64::NAN; n],
        sigma: vec![f64::NAN; n],
        fold: vec![usize::MAX; n],
    };
    for (f, held_out) in folds.iter().enumerate() {
        let mut in_fold = vec![false; n];
        for &i in held_out {
            in_fold[i] = true;
        }
        let rest: Vec<usize> = (0..n).filter(|&i| !in_fold[i]).collect();
        let fold_train = train.subset(&rest)?;
        let forest = fit_forest(&fold_train, config, seed::derive(seed, &[seed::FOREST, f as u64]))?;
        let held = train.features().select(ndarray::Axis(0), held_out);
        let pred = forest_predict(&forest, held.view())?;
        for (j, &i) in held_out.iter().enumerate() {
            out.y_hat[i] = pred.means[j];
            out.sigma[i] = pred.stds[j];
            out.fold[i] = f;
        }
    }
    Ok(out)
}
