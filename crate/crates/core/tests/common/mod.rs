#![allow(dead_code)]

use dropout_conformal::net::{DropoutMasks, MlpModel};
use ndarray::{Array2, ArrayView2};
use rand::Rng;

/// Brute-force regression tree: every feature, every midpoint between
/// consecutive distinct values, SSE computed directly. Among splits whose
/// SSE is within `1e-10 * parent_sse` of the minimum the lowest
/// (feature, threshold) wins; a split must beat the parent by that margin.
#[derive(Debug, Clone, PartialEq)]
pub enum OracleTree {
    Leaf(f64),
    Split {
        feature: usize,
        threshold: f64,
        left: Box<OracleTree>,
        right: Box<OracleTree>,
    },
}

impl OracleTree {
    pub fn predict(&self, row: &[f64]) -> f64 {
        match self {
            OracleTree::Leaf(v) => *v,
            OracleTree::Split {
                feature,
                threshold,
                left,
                right,
            } => {
                if row[*feature] <= *threshold {
                    left.predict(row)
                } else {
                    right.predict(row)
                }
            }
        }
    }
}

fn sse(values: &[f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    values.iter().map(|v| (v - mean) * (v - mean)).sum()
}

pub fn oracle_cart(x: &[Vec<f64>], y: &[f64], rows: &[usize], min_split: usize, min_leaf: usize) -> OracleTree {
    let labels: Vec<f64> = rows.iter().map(|&r| y[r]).collect();
    let mean = labels.iter().sum::<f64>() / labels.len() as f64;
    if rows.len() < min_split || labels.iter().all(|&v| v == labels[0]) {
        return OracleTree::Leaf(mean);
    }
    let parent = sse(&labels);
    let tol = 1e-10 * parent;
    let n_features = x[0].len();
    let mut candidates: Vec<(usize, f64, f64)> = Vec::new();
    for f in 0..n_features {
        let mut vals: Vec<f64> = rows.iter().map(|&r| x[r][f]).collect();
        vals.sort_by(f64::total_cmp);
        vals.dedup();
        for w in vals.windows(2) {
            let t = (w[0] + w[1]) / 2.0;
            let left: Vec<f64> = rows.iter().filter(|&&r| x[r][f] <= t).map(|&r| y[r]).collect();
            let right: Vec<f64> = rows.iter().filter(|&&r| x[r][f] > t).map(|&r| y[r]).collect();
            if left.len() < min_leaf || right.len() < min_leaf {
                continue;
            }
            candidates.push((f, t, sse(&left) + sse(&right)));
        }
    }
    let Some(min) = candidates.iter().map(|c| c.2).min_by(f64::total_cmp) else {
        return OracleTree::Leaf(mean);
    };
    if !(min < parent - tol) {
        return OracleTree::Leaf(mean);
    }
    let &(feature, threshold, _) = candidates.iter().find(|c| c.2 <= min + tol).expect("min is a candidate");
    let (l, r): (Vec<usize>, Vec<usize>) = rows.iter().partition(|&&r| x[r][feature] <= threshold);
    OracleTree::Split {
        feature,
        threshold,
        left: Box::new(oracle_cart(x, y, &l, min_split, min_leaf)),
        right: Box::new(oracle_cart(x, y, &r, min_split, min_leaf)),
    }
}

/// Random table with small-integer features (many ties between candidate
/// splits) and either integer or continuous labels.
pub fn random_table<R: Rng>(rng: &mut R, max_rows: usize, max_features: usize) -> (Array2<f64>, Vec<f64>) {
    let n = rng.random_range(1..=max_rows);
    let d = rng.random_range(1..=max_features);
    let levels = rng.random_range(1..=5);
    let x = Array2::from_shape_fn((n, d), |_| rng.random_range(0..levels) as f64);
    let integer_labels = rng.random_bool(0.5);
    let y = (0..n)
        .map(|_| {
            if integer_labels {
                rng.random_range(0..4) as f64
            } else {
                rng.random_range(-2.0..2.0)
            }
        })
        .collect();
    (x, y)
}

pub fn rows_of(x: ArrayView2<'_, f64>) -> Vec<Vec<f64>> {
    x.rows().into_iter().map(|r| r.to_vec()).collect()
}

/// Sign pattern of every hidden pre-activation, computed independently of
/// the library's forward pass.
pub fn relu_pattern(model: &MlpModel, x: ArrayView2<'_, f64>, masks: &DropoutMasks) -> Vec<bool> {
    let layers = model.layers();
    let scale = 1.0 / (1.0 - model.config().dropout_p);
    let mut pattern = Vec::new();
    let mut h: Vec<Vec<f64>> = x.rows().into_iter().map(|r| r.to_vec()).collect();
    for (l, layer) in layers.iter().enumerate().take(layers.len() - 1) {
        let mut next = Vec::with_capacity(h.len());
        for (i, row) in h.iter().enumerate() {
            let mut out = Vec::with_capacity(layer.weights.nrows());
            for j in 0..layer.weights.nrows() {
                let z: f64 = layer.bias[j] + (0..row.len()).map(|k| layer.weights[(j, k)] * row[k]).sum::<f64>();
                pattern.push(z > 0.0);
                let a = if z > 0.0 { z } else { 0.0 };
                out.push(if masks.layers[l][(i, j)] { a * scale } else { 0.0 });
            }
            next.push(out);
        }
        h = next;
    }
    pattern
}
