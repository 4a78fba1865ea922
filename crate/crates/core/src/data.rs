//! Feature/label tables, seeded train/validation/test splits and synthetic
//! regression datasets.
//!
//! Tables are plain CSV: a header `id,y,f0,...,f{d-1}` followed by one row
//! per instance. Fingerprint bits are ordinary 0/1 features.

use std::collections::HashSet;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use ndarray::{Array2, ArrayView1, Axis};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed;

/// Labelled rows: opaque ids, real labels and a dense feature matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    ids: Vec<String>,
    labels: Vec<f64>,
    features: Array2<f64>,
}

impl Dataset {
    pub fn new(ids: Vec<String>, labels: Vec<f64>, features: Array2<f64>) -> Result<Self> {
        if ids.is_empty() {
            return Err(Error::Dataset("dataset has no rows".into()));
        }
        if ids.len() != labels.len() || ids.len() != features.nrows() {
            return Err(Error::Dataset(format!(
                "{} ids, {} labels, {} feature rows",
                ids.len(),
                labels.len(),
                features.nrows()
            )));
        }
        if features.ncols() == 0 {
            return Err(Error::Dataset("dataset has no feature columns".into()));
        }
        if let Some(i) = labels.iter().position(|y| !y.is_finite()) {
            return Err(Error::Dataset(format!("label of row {i} is not finite")));
        }
        if let Some(((r, c), _)) = features.indexed_iter().find(|(_, v)| !v.is_finite()) {
            return Err(Error::Dataset(format!("feature ({r}, {c}) is not finite")));
        }
        let mut seen = HashSet::with_capacity(ids.len());
        for (row, id) in ids.iter().enumerate() {
            if !seen.insert(id.as_str()) {
                return Err(Error::DuplicateId {
                    id: id.clone(),
                    row,
                });
            }
        }
        Ok(Self {
            ids,
            labels,
            features,
        })
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn labels(&self) -> &[f64] {
        &self.labels
    }

    pub fn features(&self) -> &Array2<f64> {
        &self.features
    }

    pub fn row(&self, i: usize) -> ArrayView1<'_, f64> {
        self.features.row(i)
    }

    pub fn n_rows(&self) -> usize {
        self.labels.len()
    }

    pub fn n_features(&self) -> usize {
        self.features.ncols()
    }

    /// Copy of the rows at `indices`, in the given order.
    pub fn subset(&self, indices: &[usize]) -> Result<Dataset> {
        if let Some(&bad) = indices.iter().find(|&&i| i >= self.n_rows()) {
            return Err(Error::Invalid(format!(
                "row index {bad} out of range for {} rows",
                self.n_rows()
            )));
        }
        Dataset::new(
            indices.iter().map(|&i| self.ids[i].clone()).collect(),
            indices.iter().map(|&i| self.labels[i]).collect(),
            self.features.select(Axis(0), indices),
        )
    }

    /// Rows of `self` followed by rows of `other`.
    pub fn concat(&self, other: &Dataset) -> Result<Dataset> {
        if self.n_features() != other.n_features() {
            return Err(Error::Dimension {
                expected: self.n_features(),
                actual: other.n_features(),
            });
        }
        let features = ndarray::concatenate(Axis(0), &[self.features.view(), other.features.view()])
            .expect("column counts checked");
        Dataset::new(
            self.ids.iter().chain(&other.ids).cloned().collect(),
            self.labels.iter().chain(&other.labels).copied().collect(),
            features,
        )
    }
}

/// Column naming convention for [`load_table`]. Every column other than the
/// id and label columns is a feature, in header order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TableSchema {
    pub id_column: String,
    pub label_column: String,
}

impl Default for TableSchema {
    fn default() -> Self {
        Self {
            id_column: "id".into(),
            label_column: "y".into(),
        }
    }
}

fn parse_finite(raw: &str, row: usize, column: &str) -> Result<f64> {
    match raw.trim().parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(v),
        _ => Err(Error::Cell {
            row,
            column: column.to_string(),
            value: raw.to_string(),
        }),
    }
}

/// Load a CSV table. Data rows are numbered from 1 in error messages.
pub fn load_table(path: &Path, schema: &TableSchema) -> Result<Dataset> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(std::io::BufReader::new(file));

    let header: Vec<String> = reader
        .headers()
        .map_err(|e| Error::Header(e.to_string()))?
        .iter()
        .map(|h| h.trim().to_string())
        .collect();
    let find = |name: &str| -> Result<usize> {
        let hits: Vec<usize> = header
            .iter()
            .enumerate()
            .filter(|(_, h)| *h == name)
            .map(|(i, _)| i)
            .collect();
        match hits.as_slice() {
            [i] => Ok(*i),
            [] => Err(Error::Header(format!("no `{name}` column"))),
            _ => Err(Error::Header(format!("column `{name}` appears more than once"))),
        }
    };
    let id_col = find(&schema.id_column)?;
    let label_col = find(&schema.label_column)?;
    let feature_cols: Vec<usize> = (0..header.len())
        .filter(|&c| c != id_col && c != label_col)
        .collect();
    if feature_cols.is_empty() {
        return Err(Error::Header("no feature columns".into()));
    }

    let mut ids = Vec::new();
    let mut labels = Vec::new();
    let mut values = Vec::new();
    let mut seen = HashSet::new();
    for (i, record) in reader.records().enumerate() {
        let row = i + 1;
        let record = record.map_err(|e| Error::Row {
            row,
            message: e.to_string(),
        })?;
        if record.len() != header.len() {
            return Err(Error::Row {
                row,
                message: format!("{} cells, header has {}", record.len(), header.len()),
            });
        }
        let id = record[id_col].trim().to_string();
        if !seen.insert(id.clone()) {
            return Err(Error::DuplicateId { id, row });
        }
        labels.push(parse_finite(&record[label_col], row, &header[label_col])?);
        for &c in &feature_cols {
            values.push(parse_finite(&record[c], row, &header[c])?);
        }
        ids.push(id);
    }
    if ids.is_empty() {
        return Err(Error::Dataset(format!("{} has no data rows", path.display())));
    }
    let features = Array2::from_shape_vec((ids.len(), feature_cols.len()), values)
        .expect("row lengths checked");
    Dataset::new(ids, labels, features)
}

/// Write `data` as `id,y,f0,...`. Values use the shortest representation
/// that parses back to the same `f64`.
pub fn write_table(data: &Dataset, path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    let io = |e| Error::io(path, e);
    write!(out, "id,y").map_err(io)?;
    for j in 0..data.n_features() {
        write!(out, ",f{j}").map_err(io)?;
    }
    writeln!(out).map_err(io)?;
    for i in 0..data.n_rows() {
        write!(out, "{},{}", data.ids[i], data.labels[i]).map_err(io)?;
        for v in data.features.row(i) {
            write!(out, ",{v}").map_err(io)?;
        }
        writeln!(out).map_err(io)?;
    }
    out.flush().map_err(io)
}

/// Train/validation/test row indices.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitIndices {
    pub train: Vec<usize>,
    pub validation: Vec<usize>,
    pub test: Vec<usize>,
    pub seed: u64,
}

impl SplitIndices {
    pub fn sizes(&self) -> (usize, usize, usize) {
        (self.train.len(), self.validation.len(), self.test.len())
    }
}

// Guards the floor against products like 0.85 * 100 = 84.99999999999999.
const FLOOR_EPS: f64 = 1e-9;

/// Seeded uniform permutation cut at `floor(n * f_train)` and
/// `floor(n * (f_train + f_val))`; the remainder goes to the test set.
pub fn random_split(n_rows: usize, fractions: (f64, f64, f64), seed: u64) -> Result<SplitIndices> {
    let (ft, fv, fs) = fractions;
    if [ft, fv, fs].iter().any(|f| !(f.is_finite() && *f > 0.0)) {
        return Err(Error::Split(format!("fractions must be positive, got {fractions:?}")));
    }
    if ((ft + fv + fs) - 1.0).abs() > 1e-9 {
        return Err(Error::Split(format!("fractions sum to {}, not 1", ft + fv + fs)));
    }
    if n_rows < 3 {
        return Err(Error::Split(format!("need at least 3 rows, got {n_rows}")));
    }
    let n = n_rows as f64;
    let cut_train = (n * ft + FLOOR_EPS).floor() as usize;
    let cut_val = ((n * (ft + fv) + FLOOR_EPS).floor() as usize).min(n_rows);
    if cut_train == 0 || cut_val <= cut_train || cut_val >= n_rows {
        return Err(Error::Split(format!(
            "{n_rows} rows leave an empty partition with fractions {fractions:?}"
        )));
    }

    let mut perm: Vec<usize> = (0..n_rows).collect();
    perm.shuffle(&mut seed::stream(seed, &[seed::SPLIT]));
    Ok(SplitIndices {
        train: perm[..cut_train].to_vec(),
        validation: perm[cut_train..cut_val].to_vec(),
        test: perm[cut_val..].to_vec(),
        seed,
    })
}

/// Label noise for [`make_synthetic`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum NoiseModel {
    /// Gaussian noise with constant standard deviation `scale`.
    Homoscedastic { scale: f64 },
    /// Gaussian noise with standard deviation [`heteroscedastic_scale`],
    /// which averages to `scale` over the feature distribution.
    Heteroscedastic { scale: f64 },
}

impl NoiseModel {
    pub fn scale(&self) -> f64 {
        match *self {
            NoiseModel::Homoscedastic { scale } | NoiseModel::Heteroscedastic { scale } => scale,
        }
    }

    /// Noise standard deviation at feature vector `x`.
    pub fn std_at(&self, x: ArrayView1<'_, f64>) -> f64 {
        match *self {
            NoiseModel::Homoscedastic { scale } => scale,
            NoiseModel::Heteroscedastic { scale } => heteroscedastic_scale(scale, x[0]),
        }
    }
}

/// `scale * (0.2 + 1.6 |x0|)`; with `x0 ~ U(-1, 1)` its mean is `scale`.
pub fn heteroscedastic_scale(scale: f64, x0: f64) -> f64 {
    scale * (0.2 + 1.6 * x0.abs())
}

/// Offset that puts synthetic labels in a pIC50-like range (roughly 4-8).
pub const SYNTHETIC_OFFSET: f64 = 6.0;

/// The generating function of [`make_synthetic`]:
/// `6 + sin(pi x0) + x1^2 + 0.5 x2 + 0.5 x0 x3`, with terms dropped when
/// the feature they need does not exist. Further features are distractors.
pub fn synthetic_target(x: ArrayView1<'_, f64>) -> f64 {
    let d = x.len();
    let mut y = SYNTHETIC_OFFSET + (std::f64::consts::PI * x[0]).sin();
    if d > 1 {
        y += x[1] * x[1];
    }
    if d > 2 {
        y += 0.5 * x[2];
    }
    if d > 3 {
        y += 0.5 * x[0] * x[3];
    }
    y
}

/// Synthetic regression data: features i.i.d. `U(-1, 1)`, labels
/// [`synthetic_target`] plus Gaussian noise per `noise`.
pub fn make_synthetic(n: usize, d: usize, noise: NoiseModel, seed: u64) -> Result<Dataset> {
    if n < 10 {
        return Err(Error::Invalid(format!("synthetic n must be >= 10, got {n}")));
    }
    if d < 1 {
        return Err(Error::Invalid("synthetic d must be >= 1".into()));
    }
    if !(noise.scale().is_finite() && noise.scale() >= 0.0) {
        return Err(Error::Invalid(format!("noise scale must be >= 0, got {}", noise.scale())));
    }
    let mut feature_rng = seed::stream(seed, &[seed::SYNTHETIC, 0]);
    let mut noise_rng = seed::stream(seed, &[seed::SYNTHETIC, 1]);
    let features = Array2::from_shape_fn((n, d), |_| feature_rng.random_range(-1.0..1.0));
    let labels = features
        .rows()
        .into_iter()
        .map(|x| {
            let z: f64 = StandardNormal.sample(&mut noise_rng);
            synthetic_target(x) + noise.std_at(x) * z
        })
        .collect();
    let ids = (0..n).map(|i| format!("s{i}")).collect();
    Dataset::new(ids, labels, features)
}
