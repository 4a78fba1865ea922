//! Flat `key = value` experiment configuration.
//!
//! Blank lines and lines starting with `#` are ignored. Lists are
//! comma-separated. Relative paths are resolved against the directory of
//! the configuration file. Every key is optional except the data source:
//! either `data.path` or `synthetic.n` must be given.
//!
//! | key | default |
//! |-----|---------|
//! | `data.path` | (none) |
//! | `data.id_column` | `id` |
//! | `data.label_column` | `y` |
//! | `synthetic.n` | (none) |
//! | `synthetic.d` | `8` |
//! | `synthetic.noise` | `heteroscedastic` |
//! | `synthetic.noise_scale` | `0.3` |
//! | `seed` | `0` |
//! | `n_runs` | `20` |
//! | `split` | `0.70, 0.15, 0.15` |
//! | `models` | `dnn, rf` |
//! | `dropout_p` | `0.1, 0.25, 0.5` |
//! | `n_passes` | `100` |
//! | `cv_folds` | `10` |
//! | `cl_grid` | `0.05, 0.10, ..., 0.95` |
//! | `default_cl` | `0.8` |
//! | `cutoffs` | `5, 6, 7, 8, 9` |
//! | `retry_limit` | `3` |
//! | `workers` | `1` |
//! | `emit_plots` | `true` |
//! | `strict_calibration` | `false` |
//! | `output_dir` | `out` (next to the configuration file) |
//! | `net.hidden_sizes` | `1000, 1000, 100, 10` |
//! | `net.lr0`, `net.decay_factor`, `net.decay_every`, `net.cycle_length`, `net.max_epochs`, `net.patience`, `net.momentum`, `net.batch_fraction`, `net.rmse_gate` | see [`NetConfig`] |
//! | `forest.n_trees` | `100` |
//! | `forest.max_features` | `all` |
//! | `forest.min_samples_split`, `forest.min_samples_leaf`, `forest.bootstrap` | see [`ForestConfig`] |
//!
//! With `strict_calibration = true` the validation partition is split in
//! half: the first half drives early stopping, the second calibrates, so
//! calibration scores never touch data used for model selection.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::data::{NoiseModel, TableSchema};
use crate::error::{Error, Result};
use crate::forest::{ForestConfig, MaxFeatures};
use crate::net::NetConfig;

#[derive(Debug, Clone, PartialEq)]
pub enum DataSource {
    Table { path: PathBuf, schema: TableSchema },
    Synthetic { n: usize, d: usize, noise: NoiseModel },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Dnn,
    Rf,
}

impl FromStr for ModelKind {
    type Err = ();

    fn from_str(s: &str) -> std::result::Result<Self, ()> {
        match s {
            "dnn" => Ok(ModelKind::Dnn),
            "rf" => Ok(ModelKind::Rf),
            _ => Err(()),
        }
    }
}

impl ModelKind {
    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Dnn => "dnn",
            ModelKind::Rf => "rf",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub data: DataSource,
    pub seed: u64,
    pub n_runs: usize,
    pub split: (f64, f64, f64),
    pub models: Vec<ModelKind>,
    pub dropout_p: Vec<f64>,
    pub n_passes: usize,
    /// `dropout_p` here is a placeholder; each entry of `dropout_p` above
    /// overrides it.
    pub net: NetConfig,
    pub forest: ForestConfig,
    pub cv_folds: usize,
    pub cl_grid: Vec<f64>,
    pub default_cl: f64,
    pub cutoffs: Vec<f64>,
    pub retry_limit: usize,
    pub workers: usize,
    pub emit_plots: bool,
    pub strict_calibration: bool,
    pub output_dir: PathBuf,
}

pub fn default_cl_grid() -> Vec<f64> {
    (1..20).map(|i| i as f64 / 20.0).collect()
}

impl ExperimentConfig {
    /// All defaults around a data source.
    pub fn new(data: DataSource) -> Self {
        Self {
            data,
            seed: 0,
            n_runs: 20,
            split: (0.70, 0.15, 0.15),
            models: vec![ModelKind::Dnn, ModelKind::Rf],
            dropout_p: vec![0.1, 0.25, 0.5],
            n_passes: 100,
            net: NetConfig::default(),
            forest: ForestConfig::default(),
            cv_folds: 10,
            cl_grid: default_cl_grid(),
            default_cl: 0.8,
            cutoffs: vec![5.0, 6.0, 7.0, 8.0, 9.0],
            retry_limit: 3,
            workers: 1,
            emit_plots: true,
            strict_calibration: false,
            output_dir: PathBuf::from("out"),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match &self.data {
            DataSource::Synthetic { n, d, noise } => {
                if *n < 10 {
                    return Err(Error::config("synthetic.n", "must be >= 10"));
                }
                if *d == 0 {
                    return Err(Error::config("synthetic.d", "must be >= 1"));
                }
                if !(noise.scale().is_finite() && noise.scale() >= 0.0) {
                    return Err(Error::config("synthetic.noise_scale", "must be >= 0"));
                }
            }
            DataSource::Table { schema, .. } => {
                if schema.id_column == schema.label_column {
                    return Err(Error::config("data.label_column", "must differ from data.id_column"));
                }
            }
        }
        if self.n_runs == 0 {
            return Err(Error::config("n_runs", "must be >= 1"));
        }
        let (a, b, c) = self.split;
        if [a, b, c].iter().any(|f| !(*f > 0.0)) || ((a + b + c) - 1.0).abs() > 1e-9 {
            return Err(Error::config("split", "fractions must be positive and sum to 1"));
        }
        if self.models.is_empty() {
            return Err(Error::config("models", "at least one of dnn, rf"));
        }
        if self.models.contains(&ModelKind::Dnn) && self.dropout_p.is_empty() {
            return Err(Error::config("dropout_p", "at least one value is needed for dnn"));
        }
        if let Some(p) = self.dropout_p.iter().find(|p| !(0.0..1.0).contains(*p)) {
            return Err(Error::config("dropout_p", format!("{p} is not in [0, 1)")));
        }
        if self.n_passes == 0 {
            return Err(Error::config("n_passes", "must be >= 1"));
        }
        self.net.validate().map_err(|e| prefix("net", e))?;
        self.forest.validate().map_err(|e| prefix("forest", e))?;
        if self.cv_folds < 2 {
            return Err(Error::config("cv_folds", "must be >= 2"));
        }
        if self.cl_grid.is_empty() {
            return Err(Error::config("cl_grid", "must not be empty"));
        }
        if let Some(cl) = self.cl_grid.iter().find(|c| !(**c > 0.0 && **c < 1.0)) {
            return Err(Error::config("cl_grid", format!("{cl} is not in (0, 1)")));
        }
        if self.cl_grid.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::config("cl_grid", "must be strictly increasing"));
        }
        if !self.cl_grid.iter().any(|c| (c - self.default_cl).abs() < 1e-12) {
            return Err(Error::config("default_cl", format!("{} is not in cl_grid", self.default_cl)));
        }
        if self.cutoffs.is_empty() || self.cutoffs.iter().any(|c| !c.is_finite()) {
            return Err(Error::config("cutoffs", "need at least one finite cutoff"));
        }
        if self.workers == 0 {
            return Err(Error::config("workers", "must be >= 1"));
        }
        Ok(())
    }

    /// Canonical `key = value` rendering. `output_dir` is omitted so the
    /// text does not depend on where results are written.
    pub fn to_canonical_string(&self) -> String {
        let mut s = String::new();
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(s, "{k} = {v}");
        };
        match &self.data {
            DataSource::Table { path, schema } => {
                kv("data.path", path.display().to_string());
                kv("data.id_column", schema.id_column.clone());
                kv("data.label_column", schema.label_column.clone());
            }
            DataSource::Synthetic { n, d, noise } => {
                kv("synthetic.n", n.to_string());
                kv("synthetic.d", d.to_string());
                let kind = match noise {
                    NoiseModel::Homoscedastic { .. } => "homoscedastic",
                    NoiseModel::Heteroscedastic { .. } => "heteroscedastic",
                };
                kv("synthetic.noise", kind.into());
                kv("synthetic.noise_scale", noise.scale().to_string());
            }
        }
        kv("seed", self.seed.to_string());
        kv("n_runs", self.n_runs.to_string());
        kv("split", list(&[self.split.0, self.split.1, self.split.2]));
        kv("models", self.models.iter().map(|m| m.name()).collect::<Vec<_>>().join(", "));
        kv("dropout_p", list(&self.dropout_p));
        kv("n_passes", self.n_passes.to_string());
        kv("cv_folds", self.cv_folds.to_string());
        kv("cl_grid", list(&self.cl_grid));
        kv("default_cl", self.default_cl.to_string());
        kv("cutoffs", list(&self.cutoffs));
        kv("retry_limit", self.retry_limit.to_string());
        kv("workers", self.workers.to_string());
        kv("emit_plots", self.emit_plots.to_string());
        kv("strict_calibration", self.strict_calibration.to_string());
        let n = &self.net;
        kv("net.hidden_sizes", list(&n.hidden_sizes));
        kv("net.lr0", n.lr0.to_string());
        kv("net.decay_factor", n.decay_factor.to_string());
        kv("net.decay_every", n.decay_every.to_string());
        kv("net.cycle_length", n.cycle_length.to_string());
        kv("net.max_epochs", n.max_epochs.to_string());
        kv("net.patience", n.patience.to_string());
        kv("net.momentum", n.momentum.to_string());
        kv("net.batch_fraction", n.batch_fraction.to_string());
        kv("net.rmse_gate", n.rmse_gate.to_string());
        let f = &self.forest;
        kv("forest.n_trees", f.n_trees.to_string());
        kv(
            "forest.max_features",
            match f.max_features {
                MaxFeatures::All => "all".into(),
                MaxFeatures::Count(k) => k.to_string(),
            },
        );
        kv("forest.min_samples_split", f.min_samples_split.to_string());
        kv("forest.min_samples_leaf", f.min_samples_leaf.to_string());
        kv("forest.bootstrap", f.bootstrap.to_string());
        s
    }
}

fn list<T: ToString>(values: &[T]) -> String {
    values.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(", ")
}

fn prefix(section: &str, e: Error) -> Error {
    match e {
        Error::Config { key, message } => Error::Config {
            key: format!("{section}.{key}"),
            message,
        },
        other => other,
    }
}

fn scalar<T: FromStr>(key: &str, raw: &str) -> Result<T> {
    raw.parse()
        .map_err(|_| Error::config(key, format!("cannot parse {raw:?}")))
}

fn parse_list<T: FromStr>(key: &str, raw: &str) -> Result<Vec<T>> {
    raw.split(',')
        .map(str::trim)
        .filter(|t| !t.is_empty())
        .map(|t| scalar(key, t))
        .collect()
}

/// Parse configuration text. `base` resolves relative paths.
pub fn parse_config_str(text: &str, base: &Path) -> Result<ExperimentConfig> {
    let mut entries: BTreeMap<String, String> = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::Format(format!("line {}: expected `key = value`", i + 1)))?;
        let k = k.trim().to_string();
        if entries.insert(k.clone(), v.trim().to_string()).is_some() {
            return Err(Error::config(&k, "given more than once"));
        }
    }
    let mut take = |k: &str| entries.remove(k);

    let path = take("data.path");
    let id_column = take("data.id_column");
    let label_column = take("data.label_column");
    let syn_n = take("synthetic.n");
    let syn_d = take("synthetic.d");
    let syn_noise = take("synthetic.noise");
    let syn_scale = take("synthetic.noise_scale");
    let data = match (path, syn_n) {
        (Some(p), None) => {
            if syn_d.is_some() || syn_noise.is_some() || syn_scale.is_some() {
                return Err(Error::config("data.path", "cannot be combined with synthetic.*"));
            }
            let mut schema = TableSchema::default();
            if let Some(c) = id_column {
                schema.id_column = c;
            }
            if let Some(c) = label_column {
                schema.label_column = c;
            }
            DataSource::Table {
                path: base.join(p),
                schema,
            }
        }
        (None, Some(n)) => {
            if id_column.is_some() || label_column.is_some() {
                return Err(Error::config("data.id_column", "only applies to data.path"));
            }
            let scale: f64 = syn_scale.map(|v| scalar("synthetic.noise_scale", &v)).transpose()?.unwrap_or(0.3);
            let noise = match syn_noise.as_deref().unwrap_or("heteroscedastic") {
                "heteroscedastic" => NoiseModel::Heteroscedastic { scale },
                "homoscedastic" => NoiseModel::Homoscedastic { scale },
                other => {
                    return Err(Error::config(
                        "synthetic.noise",
                        format!("{other:?} is not homoscedastic or heteroscedastic"),
                    ))
                }
            };
            DataSource::Synthetic {
                n: scalar("synthetic.n", &n)?,
                d: syn_d.map(|v| scalar("synthetic.d", &v)).transpose()?.unwrap_or(8),
                noise,
            }
        }
        (Some(_), Some(_)) => return Err(Error::config("data.path", "give either data.path or synthetic.n, not both")),
        (None, None) => return Err(Error::config("data.path", "a data source is required (data.path or synthetic.n)")),
    };

    let mut cfg = ExperimentConfig::new(data);
    macro_rules! set {
        ($key:literal, $field:expr) => {
            if let Some(v) = take($key) {
                $field = scalar($key, &v)?;
            }
        };
    }
    macro_rules! set_list {
        ($key:literal, $field:expr) => {
            if let Some(v) = take($key) {
                $field = parse_list($key, &v)?;
            }
        };
    }
    set!("seed", cfg.seed);
    set!("n_runs", cfg.n_runs);
    if let Some(v) = take("split") {
        let f: Vec<f64> = parse_list("split", &v)?;
        let [a, b, c] = f[..] else {
            return Err(Error::config("split", "expected three fractions"));
        };
        cfg.split = (a, b, c);
    }
    if let Some(v) = take("models") {
        let mut models: Vec<ModelKind> = v
            .split(',')
            .map(str::trim)
            .filter(|t| !t.is_empty())
            .map(|t| t.parse().map_err(|_| Error::config("models", format!("unknown model {t:?}"))))
            .collect::<Result<_>>()?;
        models.sort();
        models.dedup();
        cfg.models = models;
    }
    set_list!("dropout_p", cfg.dropout_p);
    set!("n_passes", cfg.n_passes);
    set!("cv_folds", cfg.cv_folds);
    set_list!("cl_grid", cfg.cl_grid);
    set!("default_cl", cfg.default_cl);
    set_list!("cutoffs", cfg.cutoffs);
    set!("retry_limit", cfg.retry_limit);
    set!("workers", cfg.workers);
    set!("emit_plots", cfg.emit_plots);
    set!("strict_calibration", cfg.strict_calibration);
    cfg.output_dir = base.join(take("output_dir").as_deref().unwrap_or("out"));

    set_list!("net.hidden_sizes", cfg.net.hidden_sizes);
    set!("net.lr0", cfg.net.lr0);
    set!("net.decay_factor", cfg.net.decay_factor);
    set!("net.decay_every", cfg.net.decay_every);
    set!("net.cycle_length", cfg.net.cycle_length);
    set!("net.max_epochs", cfg.net.max_epochs);
    set!("net.patience", cfg.net.patience);
    set!("net.momentum", cfg.net.momentum);
    set!("net.batch_fraction", cfg.net.batch_fraction);
    set!("net.rmse_gate", cfg.net.rmse_gate);

    set!("forest.n_trees", cfg.forest.n_trees);
    if let Some(v) = take("forest.max_features") {
        cfg.forest.max_features = if v == "all" {
            MaxFeatures::All
        } else {
            MaxFeatures::Count(scalar("forest.max_features", &v)?)
        };
    }
    set!("forest.min_samples_split", cfg.forest.min_samples_split);
    set!("forest.min_samples_leaf", cfg.forest.min_samples_leaf);
    set!("forest.bootstrap", cfg.forest.bootstrap);

    if let Some(k) = entries.keys().next() {
        return Err(Error::UnknownKey(k.clone()));
    }
    cfg.validate()?;
    Ok(cfg)
}

/// Read and validate a configuration file.
pub fn parse_config(path: &Path) -> Result<ExperimentConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let base = path.parent().unwrap_or(Path::new(""));
    parse_config_str(&text, base)
}
