use ndarray::Axis;
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::{init_mlp, lr_at_epoch, DropoutMasks, Layer, MlpModel, NetConfig};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    EarlyStop,
    MaxEpochs,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub learning_rate: f64,
    /// Mean batch MSE under dropout.
    pub train_loss: f64,
    /// Deterministic (no dropout) RMSE on the validation set.
    pub val_rmse: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingLog {
    pub epochs: Vec<EpochRecord>,
    pub stop_reason: StopReason,
    pub best_epoch: usize,
    pub best_val_rmse: f64,
    pub converged: bool,
}

fn rmse(pred: &[f64], y: &[f64]) -> f64 {
    let sse: f64 = pred.iter().zip(y).map(|(p, t)| (p - t) * (p - t)).sum();
    (sse / y.len() as f64).sqrt()
}

/// Mini-batch SGD with Nesterov momentum, the cyclical step schedule and
/// early stopping on validation RMSE.
///
/// Each epoch reshuffles the training rows and cuts them into batches of
/// `ceil(batch_fraction * n)` (the last one may be shorter). Every row of
/// every batch gets fresh dropout masks. Training stops after `max_epochs`
/// or once `patience` epochs pass without a strict improvement; the
/// returned model carries the best-epoch parameters.
pub fn train(
    train_set: &Dataset,
    val_set: &Dataset,
    config: &NetConfig,
    seed: u64,
) -> Result<(MlpModel, TrainingLog)> {
    config.validate()?;
    let d = train_set.n_features();
    if val_set.n_features() != d {
        return Err(Error::Dimension {
            expected: d,
            actual: val_set.n_features(),
        });
    }
    let mut model = init_mlp(d, config, seed)?;
    let mut rng = seed::stream(seed, &[seed::TRAIN]);

    let n = train_set.n_rows();
    let batch_size = ((config.batch_fraction * n as f64).ceil() as usize).clamp(1, n);
    let mut order: Vec<usize> = (0..n).collect();
    let mut velocity: Vec<Layer> = model
        .layers()
        .iter()
        .map(|l| Layer {
            weights: ndarray::Array2::zeros(l.weights.raw_dim()),
            bias: ndarray::Array1::zeros(l.bias.len()),
        })
        .collect();

    let mut best = (f64::INFINITY, 0usize, model.layers().to_vec());
    let mut epochs = Vec::new();
    let mut stop_reason = StopReason::MaxEpochs;
    let mu = config.momentum;

    for epoch in 0..config.max_epochs {
        let lr = lr_at_epoch(config, epoch);
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        for chunk in order.chunks(batch_size) {
            let x = train_set.features().select(Axis(0), chunk);
            let y: Vec<f64> = chunk.iter().map(|&i| train_set.labels()[i]).collect();
            let masks = DropoutMasks::sample(&config.hidden_sizes, chunk.len(), config.dropout_p, &mut rng);
            let grads = model.compute_gradients(x.view(), &y, Some(&masks))?;
            if !grads.loss.is_finite() {
                return Err(Error::Diverged { epoch });
            }
            loss_sum += grads.loss * chunk.len() as f64;

            // buf = mu * buf + g;  p -= lr * (g + mu * buf)
            for ((layer, vel), g) in model.layers_mut().iter_mut().zip(&mut velocity).zip(&grads.layers) {
                ndarray::Zip::from(&mut layer.weights)
                    .and(&mut vel.weights)
                    .and(&g.weights)
                    .for_each(|p, v, &g| {
                        *v = mu * *v + g;
                        *p -= lr * (g + mu * *v);
                    });
                ndarray::Zip::from(&mut layer.bias)
                    .and(&mut vel.bias)
                    .and(&g.bias)
                    .for_each(|p, v, &g| {
                        *v = mu * *v + g;
                        *p -= lr * (g + mu * *v);
                    });
            }
        }

        let val_rmse = rmse(&model.predict(val_set.features().view())?, val_set.labels());
        if !val_rmse.is_finite() {
            return Err(Error::Diverged { epoch });
        }
        epochs.push(EpochRecord {
            epoch,
            learning_rate: lr,
            train_loss: loss_sum / n as f64,
            val_rmse,
        });
        if val_rmse < best.0 {
            best = (val_rmse, epoch, model.layers().to_vec());
        } else if epoch - best.1 >= config.patience {
            stop_reason = StopReason::EarlyStop;
            break;
        }
    }

    let (best_val_rmse, best_epoch, layers) = best;
    let mut model = MlpModel::from_parts(layers, config.clone(), d)?;
    model.trained_epochs = epochs.len();
    model.best_val_rmse = best_val_rmse;
    let log = TrainingLog {
        epochs,
        stop_reason,
        best_epoch,
        best_val_rmse,
        converged: best_val_rmse < config.rmse_gate,
    };
    Ok((model, log))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{make_synthetic, NoiseModel};
    use ndarray::Array2;
    use rand::Rng;

    fn linear_data(n: usize, seed_: u64) -> Dataset {
        let mut rng = seed::stream(seed_, &[]);
        let x = Array2::from_shape_fn((n, 4), |_| rng.random_range(-1.0..1.0));
        let y = x
            .rows()
            .into_iter()
            .map(|r| 0.5 * r[0] - 0.3 * r[1] + 0.2 * r[2] + 0.1 * r[3] + 0.4)
            .collect();
        Dataset::new((0..n).map(|i| format!("r{i}")).collect(), y, x).unwrap()
    }

    #[test]
    fn learns_noiseless_linear_target() {
        let train_set = linear_data(200, 1);
        let val_set = linear_data(60, 2);
        let cfg = NetConfig {
            hidden_sizes: vec![8],
            dropout_p: 0.0,
            max_epochs: 500,
            ..NetConfig::default()
        };
        let (model, log) = train(&train_set, &val_set, &cfg, 3).unwrap();
        assert!(log.best_val_rmse < 0.05, "rmse {}", log.best_val_rmse);
        assert_eq!(model.best_val_rmse, log.best_val_rmse);
        assert!(log.converged);
    }

    #[test]
    fn zero_learning_rate_stops_after_patience() {
        let ds = make_synthetic(40, 3, NoiseModel::Homoscedastic { scale: 0.1 }, 0).unwrap();
        let tr = ds.subset(&(0..30).collect::<Vec<_>>()).unwrap();
        let va = ds.subset(&(30..40).collect::<Vec<_>>()).unwrap();
        let cfg = NetConfig {
            hidden_sizes: vec![4],
            lr0: 0.0,
            patience: 1,
            ..NetConfig::default()
        };
        let (model, log) = train(&tr, &va, &cfg, 1).unwrap();
        assert_eq!(log.stop_reason, StopReason::EarlyStop);
        assert_eq!(log.epochs.len(), 2);
        assert_eq!(model.trained_epochs, 2);
        assert_eq!(log.best_epoch, 0);
        // Labels sit around 6, an untrained network near 0.
        assert!(!log.converged);
    }

    #[test]
    fn gate_flags_poor_fit() {
        let ds = make_synthetic(40, 3, NoiseModel::Homoscedastic { scale: 1.5 }, 0).unwrap();
        let tr = ds.subset(&(0..30).collect::<Vec<_>>()).unwrap();
        let va = ds.subset(&(30..40).collect::<Vec<_>>()).unwrap();
        let cfg = NetConfig {
            hidden_sizes: vec![4],
            max_epochs: 3,
            ..NetConfig::default()
        };
        let (_, log) = train(&tr, &va, &cfg, 1).unwrap();
        assert_eq!(log.converged, log.best_val_rmse < 1.2);
    }

    #[test]
    fn dimension_mismatch_is_rejected() {
        let a = make_synthetic(20, 3, NoiseModel::Homoscedastic { scale: 0.1 }, 0).unwrap();
        let b = make_synthetic(20, 2, NoiseModel::Homoscedastic { scale: 0.1 }, 0).unwrap();
        assert!(matches!(
            train(&a, &b, &NetConfig::desk_scale(), 0),
            Err(Error::Dimension { .. })
        ));
    }

    #[test]
    fn divergence_is_reported() {
        let a = make_synthetic(30, 3, NoiseModel::Homoscedastic { scale: 0.1 }, 0).unwrap();
        let cfg = NetConfig {
            hidden_sizes: vec![16, 16],
            lr0: 1e6,
            momentum: 0.9,
            ..NetConfig::default()
        };
        assert!(matches!(train(&a, &a, &cfg, 0), Err(Error::Diverged { .. })));
    }
}
