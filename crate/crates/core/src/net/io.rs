//! Versioned text format for trained networks.
//!
//! ```text
//! dropout-conformal-mlp 1
//! input_dim <d>
//! hidden_sizes <w1> <w2> ...
//! <config key> <value>            (one line per NetConfig scalar)
//! trained_epochs <n>
//! best_val_rmse <x>
//! layer <fan_out> <fan_in>
//! <fan_in weights>                (fan_out lines)
//! <fan_out biases>
//! ...
//! ```
//!
//! Floats use Rust's shortest round-trip formatting, so reading a written
//! model reproduces it bit for bit.

use std::fmt::Write as _;
use std::path::Path;

use ndarray::{Array1, Array2};

use super::{Layer, MlpModel, NetConfig};
use crate::error::{Error, Result};
use crate::textfmt::Lines;

const MAGIC: &str = "dropout-conformal-mlp";
const VERSION: u32 = 1;

fn join<T: std::fmt::Display>(values: impl IntoIterator<Item = T>) -> String {
    values.into_iter().map(|v| v.to_string()).collect::<Vec<_>>().join(" ")
}

pub fn model_to_string(model: &MlpModel) -> String {
    let c = model.config();
    let mut s = String::new();
    let _ = writeln!(s, "{MAGIC} {VERSION}");
    let _ = writeln!(s, "input_dim {}", model.input_dim());
    let _ = writeln!(s, "hidden_sizes {}", join(&c.hidden_sizes));
    let _ = writeln!(s, "dropout_p {}", c.dropout_p);
    let _ = writeln!(s, "lr0 {}", c.lr0);
    let _ = writeln!(s, "decay_factor {}", c.decay_factor);
    let _ = writeln!(s, "decay_every {}", c.decay_every);
    let _ = writeln!(s, "cycle_length {}", c.cycle_length);
    let _ = writeln!(s, "max_epochs {}", c.max_epochs);
    let _ = writeln!(s, "patience {}", c.patience);
    let _ = writeln!(s, "momentum {}", c.momentum);
    let _ = writeln!(s, "batch_fraction {}", c.batch_fraction);
    let _ = writeln!(s, "rmse_gate {}", c.rmse_gate);
    let _ = writeln!(s, "trained_epochs {}", model.trained_epochs);
    let _ = writeln!(s, "best_val_rmse {}", model.best_val_rmse);
    for layer in model.layers() {
        let _ = writeln!(s, "layer {} {}", layer.fan_out(), layer.fan_in());
        for row in layer.weights.rows() {
            let _ = writeln!(s, "{}", join(row));
        }
        let _ = writeln!(s, "{}", join(&layer.bias));
    }
    s
}

fn parse_floats(no: usize, line: &str, expected: usize) -> Result<Vec<f64>> {
    let values: Vec<f64> = line
        .split_whitespace()
        .map(|t| t.parse::<f64>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| Error::Format(format!("line {no}: bad number")))?;
    if values.len() != expected {
        return Err(Error::Format(format!(
            "line {no}: expected {expected} values, found {}",
            values.len()
        )));
    }
    Ok(values)
}

pub fn model_from_str(text: &str) -> Result<MlpModel> {
    let mut lines = Lines::new(text);
    let version: u32 = lines.parse(MAGIC)?;
    if version != VERSION {
        return Err(Error::Format(format!("unsupported version {version}")));
    }
    let input_dim: usize = lines.parse("input_dim")?;
    let (no, hidden) = lines.field("hidden_sizes")?;
    let hidden_sizes = hidden
        .split_whitespace()
        .map(|t| t.parse::<usize>())
        .collect::<std::result::Result<Vec<_>, _>>()
        .map_err(|_| Error::Format(format!("line {no}: bad hidden_sizes")))?;
    let config = NetConfig {
        hidden_sizes,
        dropout_p: lines.parse("dropout_p")?,
        lr0: lines.parse("lr0")?,
        decay_factor: lines.parse("decay_factor")?,
        decay_every: lines.parse("decay_every")?,
        cycle_length: lines.parse("cycle_length")?,
        max_epochs: lines.parse("max_epochs")?,
        patience: lines.parse("patience")?,
        momentum: lines.parse("momentum")?,
        batch_fraction: lines.parse("batch_fraction")?,
        rmse_gate: lines.parse("rmse_gate")?,
    };
    let trained_epochs: usize = lines.parse("trained_epochs")?;
    let best_val_rmse: f64 = lines.parse("best_val_rmse")?;

    let mut layers = Vec::new();
    for _ in 0..=config.hidden_sizes.len() {
        let (no, dims) = lines.field("layer")?;
        let dims: Vec<usize> = dims
            .split_whitespace()
            .map(|t| t.parse())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| Error::Format(format!("line {no}: bad layer header")))?;
        let [fan_out, fan_in] = dims[..] else {
            return Err(Error::Format(format!("line {no}: bad layer header")));
        };
        let mut weights = Vec::with_capacity(fan_out * fan_in);
        for _ in 0..fan_out {
            let (no, line) = lines.next_line()?;
            weights.extend(parse_floats(no, line, fan_in)?);
        }
        let (no, line) = lines.next_line()?;
        let bias = parse_floats(no, line, fan_out)?;
        layers.push(Layer {
            weights: Array2::from_shape_vec((fan_out, fan_in), weights).expect("sized"),
            bias: Array1::from(bias),
        });
    }
    let mut model = MlpModel::from_parts(layers, config, input_dim)?;
    model.trained_epochs = trained_epochs;
    model.best_val_rmse = best_val_rmse;
    Ok(model)
}

pub fn write_model(model: &MlpModel, path: &Path) -> Result<()> {
    std::fs::write(path, model_to_string(model)).map_err(|e| Error::io(path, e))
}

pub fn read_model(path: &Path) -> Result<MlpModel> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    model_from_str(&text)
}
