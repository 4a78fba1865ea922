//! Feedforward ReLU regressor with inverted dropout on every hidden layer.
//!
//! Weights are stored `out x in`, so a batch `X` (rows are instances)
//! propagates as `Z = X W^T + b`. Dropout is never applied to the input or
//! to the scalar output; kept hidden activations are scaled by `1/(1-p)`.

mod io;
mod train;

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis, Zip};
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed;

pub use io::{read_model, write_model};
pub use train::{train, EpochRecord, StopReason, TrainingLog};

/// Architecture and optimiser settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetConfig {
    pub hidden_sizes: Vec<usize>,
    pub dropout_p: f64,
    pub lr0: f64,
    pub decay_factor: f64,
    pub decay_every: usize,
    pub cycle_length: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub momentum: f64,
    pub batch_fraction: f64,
    pub rmse_gate: f64,
}

impl Default for NetConfig {
    fn default() -> Self {
        Self {
            hidden_sizes: vec![1000, 1000, 100, 10],
            dropout_p: 0.25,
            lr0: 0.005,
            decay_factor: 0.6,
            decay_every: 200,
            cycle_length: 1000,
            max_epochs: 4000,
            patience: 300,
            momentum: 0.9,
            batch_fraction: 0.15,
            rmse_gate: 1.2,
        }
    }
}

impl NetConfig {
    /// Default optimiser settings on a `[32, 32, 8]` network, sized for
    /// low-dimensional synthetic data.
    pub fn desk_scale() -> Self {
        Self {
            hidden_sizes: vec![32, 32, 8],
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.hidden_sizes.contains(&0) {
            return Err(Error::config("hidden_sizes", "every width must be >= 1"));
        }
        if !(0.0..1.0).contains(&self.dropout_p) {
            return Err(Error::config("dropout_p", format!("{} is not in [0, 1)", self.dropout_p)));
        }
        // lr0 = 0 is allowed: it freezes the initial weights.
        if !(self.lr0.is_finite() && self.lr0 >= 0.0) {
            return Err(Error::config("lr0", format!("{} is not >= 0", self.lr0)));
        }
        if !(self.decay_factor > 0.0 && self.decay_factor < 1.0) {
            return Err(Error::config(
                "decay_factor",
                format!("{} is not in (0, 1)", self.decay_factor),
            ));
        }
        if self.decay_every == 0 {
            return Err(Error::config("decay_every", "must be >= 1"));
        }
        if self.cycle_length == 0 {
            return Err(Error::config("cycle_length", "must be >= 1"));
        }
        if self.max_epochs == 0 {
            return Err(Error::config("max_epochs", "must be >= 1"));
        }
        if self.patience == 0 {
            return Err(Error::config("patience", "must be >= 1"));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::config("momentum", format!("{} is not in [0, 1)", self.momentum)));
        }
        if !(self.batch_fraction > 0.0 && self.batch_fraction <= 1.0) {
            return Err(Error::config(
                "batch_fraction",
                format!("{} is not in (0, 1]", self.batch_fraction),
            ));
        }
        if !(self.rmse_gate > 0.0) {
            return Err(Error::config("rmse_gate", "must be > 0"));
        }
        Ok(())
    }
}

/// Cyclical step schedule: `lr0 * decay^floor((epoch mod cycle) / every)`.
pub fn lr_at_epoch(config: &NetConfig, epoch: usize) -> f64 {
    let steps = (epoch % config.cycle_length) / config.decay_every;
    config.lr0 * config.decay_factor.powi(steps as i32)
}

/// One affine layer, `weights` is `out x in`.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
}

impl Layer {
    pub fn fan_in(&self) -> usize {
        self.weights.ncols()
    }

    pub fn fan_out(&self) -> usize {
        self.weights.nrows()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MlpModel {
    layers: Vec<Layer>,
    config: NetConfig,
    input_dim: usize,
    pub trained_epochs: usize,
    pub best_val_rmse: f64,
}

/// He-normal weights (`N(0, 2/fan_in)`), zero biases.
pub fn init_mlp(input_dim: usize, config: &NetConfig, seed: u64) -> Result<MlpModel> {
    config.validate()?;
    if input_dim == 0 {
        return Err(Error::Invalid("input_dim must be >= 1".into()));
    }
    let mut rng = seed::stream(seed, &[seed::INIT]);
    let widths: Vec<usize> = std::iter::once(input_dim)
        .chain(config.hidden_sizes.iter().copied())
        .chain(std::iter::once(1))
        .collect();
    let layers = widths
        .windows(2)
        .map(|w| {
            let (fan_in, fan_out) = (w[0], w[1]);
            let normal = Normal::new(0.0, (2.0 / fan_in as f64).sqrt()).expect("positive std");
            Layer {
                weights: Array2::from_shape_fn((fan_out, fan_in), |_| normal.sample(&mut rng)),
                bias: Array1::zeros(fan_out),
            }
        })
        .collect();
    MlpModel::from_parts(layers, config.clone(), input_dim)
}

/// Keep-masks for every hidden layer over a batch: `layers[l]` is
/// `n_rows x width_l`, `true` where the unit is kept.
#[derive(Debug, Clone, PartialEq)]
pub struct DropoutMasks {
    pub layers: Vec<Array2<bool>>,
}

impl DropoutMasks {
    /// Independent Bernoulli(1-p) keep decisions, drawn layer by layer,
    /// row by row.
    pub fn sample<R: Rng + ?Sized>(hidden: &[usize], n_rows: usize, p: f64, rng: &mut R) -> Self {
        let keep = 1.0 - p;
        let layers = hidden
            .iter()
            .map(|&w| {
                if p == 0.0 {
                    Array2::from_elem((n_rows, w), true)
                } else {
                    Array2::from_shape_fn((n_rows, w), |_| rng.random::<f64>() < keep)
                }
            })
            .collect();
        Self { layers }
    }

    pub fn all_kept(hidden: &[usize], n_rows: usize) -> Self {
        Self {
            layers: hidden
                .iter()
                .map(|&w| Array2::from_elem((n_rows, w), true))
                .collect(),
        }
    }
}

/// Forward-pass flavour for [`MlpModel::forward`].
pub enum Mode<'a> {
    Deterministic,
    Stochastic(&'a mut seed::Stream),
}

/// Per-layer gradients, same shapes as the model's layers.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layers: Vec<Layer>,
    /// Mean squared error of the batch the gradients were taken on.
    pub loss: f64,
}

impl Gradients {
    /// Flattened in the order of [`MlpModel::flat_params`].
    pub fn flatten(&self) -> Vec<f64> {
        flatten_layers(&self.layers)
    }
}

fn flatten_layers(layers: &[Layer]) -> Vec<f64> {
    layers
        .iter()
        .flat_map(|l| l.weights.iter().chain(l.bias.iter()).copied())
        .collect()
}

struct ForwardCache {
    /// Pre-activations of the hidden layers.
    pre: Vec<Array2<f64>>,
    /// Inputs to each layer: `inputs[0]` is the batch, `inputs[l+1]` the
    /// dropped hidden activations of layer `l`.
    inputs: Vec<Array2<f64>>,
    output: Array1<f64>,
}

impl MlpModel {
    pub fn from_parts(layers: Vec<Layer>, config: NetConfig, input_dim: usize) -> Result<Self> {
        config.validate()?;
        let expected: Vec<usize> = std::iter::once(input_dim)
            .chain(config.hidden_sizes.iter().copied())
            .chain(std::iter::once(1))
            .collect();
        if layers.len() + 1 != expected.len() {
            return Err(Error::Format(format!(
                "{} layers for {} hidden sizes",
                layers.len(),
                config.hidden_sizes.len()
            )));
        }
        for (l, layer) in layers.iter().enumerate() {
            if layer.weights.dim() != (expected[l + 1], expected[l]) || layer.bias.len() != expected[l + 1] {
                return Err(Error::Format(format!("layer {l} has wrong shape")));
            }
            if layer.weights.iter().chain(layer.bias.iter()).any(|v| !v.is_finite()) {
                return Err(Error::Format(format!("layer {l} has non-finite parameters")));
            }
        }
        Ok(Self {
            layers,
            config,
            input_dim,
            trained_epochs: 0,
            best_val_rmse: f64::INFINITY,
        })
    }

    pub fn config(&self) -> &NetConfig {
        &self.config
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    /// `(fan_in, fan_out)` of every layer, input first.
    pub fn layer_shapes(&self) -> Vec<(usize, usize)> {
        self.layers.iter().map(|l| (l.fan_in(), l.fan_out())).collect()
    }

    pub fn n_params(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.bias.len()).sum()
    }

    /// All parameters, layer by layer, weights (row-major) before biases.
    pub fn flat_params(&self) -> Vec<f64> {
        flatten_layers(&self.layers)
    }

    pub fn set_flat_params(&mut self, values: &[f64]) -> Result<()> {
        if values.len() != self.n_params() {
            return Err(Error::Length {
                left: values.len(),
                right: self.n_params(),
            });
        }
        let mut it = values.iter();
        for layer in &mut self.layers {
            for w in layer.weights.iter_mut().chain(layer.bias.iter_mut()) {
                *w = *it.next().expect("length checked");
            }
        }
        Ok(())
    }

    /// Same architecture with a different dropout probability.
    pub fn with_dropout(&self, p: f64) -> Result<Self> {
        let mut out = self.clone();
        out.config.dropout_p = p;
        out.config.validate()?;
        Ok(out)
    }

    fn check_width(&self, width: usize) -> Result<()> {
        if width != self.input_dim {
            return Err(Error::Dimension {
                expected: self.input_dim,
                actual: width,
            });
        }
        Ok(())
    }

    fn check_masks(&self, masks: &DropoutMasks, n_rows: usize) -> Result<()> {
        if masks.layers.len() != self.config.hidden_sizes.len() {
            return Err(Error::Dimension {
                expected: self.config.hidden_sizes.len(),
                actual: masks.layers.len(),
            });
        }
        for (m, &w) in masks.layers.iter().zip(&self.config.hidden_sizes) {
            if m.dim() != (n_rows, w) {
                return Err(Error::Dimension {
                    expected: w,
                    actual: m.ncols(),
                });
            }
        }
        Ok(())
    }

    fn forward_cache(&self, x: ArrayView2<'_, f64>, masks: Option<&DropoutMasks>) -> ForwardCache {
        let n_hidden = self.layers.len() - 1;
        let scale = 1.0 / (1.0 - self.config.dropout_p);
        let mut pre = Vec::with_capacity(n_hidden);
        let mut inputs = Vec::with_capacity(n_hidden + 1);
        inputs.push(x.to_owned());
        for (l, layer) in self.layers[..n_hidden].iter().enumerate() {
            let z = inputs[l].dot(&layer.weights.t()) + &layer.bias;
            let mut a = z.mapv(|v| v.max(0.0));
            if let Some(m) = masks {
                Zip::from(&mut a).and(&m.layers[l]).for_each(|v, &keep| {
                    *v = if keep { *v * scale } else { 0.0 };
                });
            }
            pre.push(z);
            inputs.push(a);
        }
        let last = &self.layers[n_hidden];
        let output = inputs[n_hidden].dot(&last.weights.row(0)) + last.bias[0];
        ForwardCache { pre, inputs, output }
    }

    /// Batch forward pass; `masks = None` is the deterministic network.
    pub fn forward_batch(&self, x: ArrayView2<'_, f64>, masks: Option<&DropoutMasks>) -> Result<Array1<f64>> {
        self.check_width(x.ncols())?;
        if let Some(m) = masks {
            self.check_masks(m, x.nrows())?;
        }
        Ok(self.forward_cache(x, masks).output)
    }

    /// Deterministic predictions for every row of `x`.
    pub fn predict(&self, x: ArrayView2<'_, f64>) -> Result<Vec<f64>> {
        Ok(self.forward_batch(x, None)?.to_vec())
    }

    /// Single-instance forward pass. In stochastic mode the sampled keep
    /// masks (one vector per hidden layer) are returned for reuse.
    pub fn forward(&self, x: ArrayView1<'_, f64>, mode: Mode<'_>) -> Result<(f64, Option<Vec<Vec<bool>>>)> {
        let batch = x.insert_axis(Axis(0));
        match mode {
            Mode::Deterministic => Ok((self.forward_batch(batch, None)?[0], None)),
            Mode::Stochastic(rng) => {
                self.check_width(batch.ncols())?;
                let masks = DropoutMasks::sample(&self.config.hidden_sizes, 1, self.config.dropout_p, rng);
                let y = self.forward_batch(batch, Some(&masks))?[0];
                let per_layer = masks.layers.iter().map(|m| m.row(0).to_vec()).collect();
                Ok((y, Some(per_layer)))
            }
        }
    }

    /// Exact gradients of the batch mean squared error under fixed masks.
    pub fn compute_gradients(
        &self,
        x: ArrayView2<'_, f64>,
        y: &[f64],
        masks: Option<&DropoutMasks>,
    ) -> Result<Gradients> {
        self.check_width(x.ncols())?;
        if y.len() != x.nrows() {
            return Err(Error::Length {
                left: x.nrows(),
                right: y.len(),
            });
        }
        if let Some(m) = masks {
            self.check_masks(m, x.nrows())?;
        }
        let n = x.nrows() as f64;
        let cache = self.forward_cache(x, masks);
        let resid = &cache.output - &ArrayView1::from(y);
        let loss = resid.dot(&resid) / n;

        let n_hidden = self.layers.len() - 1;
        let scale = 1.0 / (1.0 - self.config.dropout_p);
        let mut grads: Vec<Layer> = Vec::with_capacity(self.layers.len());

        // d loss / d output, as an n x 1 column.
        let mut delta = (resid * (2.0 / n)).insert_axis(Axis(1));
        for l in (0..=n_hidden).rev() {
            let layer = &self.layers[l];
            let inputs = &cache.inputs[l];
            grads.push(Layer {
                weights: delta.t().dot(inputs),
                bias: delta.sum_axis(Axis(0)),
            });
            if l == 0 {
                break;
            }
            // Back through layer l's weights, then dropout and ReLU of layer l-1.
            let mut upstream = delta.dot(&layer.weights);
            let mask = masks.map(|m| &m.layers[l - 1]);
            Zip::indexed(&mut upstream).for_each(|(i, j), g| {
                let kept = mask.map_or(true, |m| m[(i, j)]);
                let active = cache.pre[l - 1][(i, j)] > 0.0;
                *g = if !kept || !active {
                    0.0
                } else if mask.is_some() {
                    *g * scale
                } else {
                    *g
                };
            });
            delta = upstream;
        }
        grads.reverse();
        Ok(Gradients { layers: grads, loss })
    }

    /// Batch MSE under fixed masks, matching the `loss` of
    /// [`compute_gradients`](Self::compute_gradients).
    pub fn loss(&self, x: ArrayView2<'_, f64>, y: &[f64], masks: Option<&DropoutMasks>) -> Result<f64> {
        let out = self.forward_batch(x, masks)?;
        if y.len() != out.len() {
            return Err(Error::Length {
                left: out.len(),
                right: y.len(),
            });
        }
        let resid = &out - &ArrayView1::from(y);
        Ok(resid.dot(&resid) / out.len() as f64)
    }

    pub(crate) fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }
}
