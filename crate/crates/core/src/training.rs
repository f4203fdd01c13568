//! Adam and the mini-batch training loop.

use std::io::Write;
use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{mae_batch_gradient, Example, Regressor};
use crate::rng;
use crate::weights::ModelWeights;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamParams {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamParams {
    fn default() -> Self {
        AdamParams {
            lr: 3e-4,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

#[derive(Debug, Clone)]
pub struct AdamState {
    pub params: AdamParams,
    pub m: ModelWeights,
    pub v: ModelWeights,
    pub t: u64,
}

impl AdamState {
    pub fn new(weights: &ModelWeights, params: AdamParams) -> Self {
        AdamState {
            params,
            m: weights.zeros_like(),
            v: weights.zeros_like(),
            t: 0,
        }
    }

    /// One bias-corrected Adam update of `weights` in place.
    pub fn step(&mut self, weights: &mut ModelWeights, grads: &ModelWeights) -> Result<()> {
        if !grads.is_finite() {
            return Err(Error::NonFinite("gradients passed to adam".into()));
        }
        if !weights.same_layout(grads) || !weights.same_layout(&self.m) {
            return Err(Error::shape(
                "adam",
                "weights, gradients and moments differ in layout",
            ));
        }
        self.t += 1;
        let AdamParams {
            lr,
            beta1,
            beta2,
            epsilon,
        } = self.params;
        let c1 = 1.0 - beta1.powi(self.t as i32);
        let c2 = 1.0 - beta2.powi(self.t as i32);
        let entries = weights
            .iter_mut()
            .zip(grads.iter())
            .zip(self.m.iter_mut().zip(self.v.iter_mut()));
        for ((w, g), (m, v)) in entries {
            let w = w.tensor.data_mut();
            let g = g.tensor.data();
            let m = m.tensor.data_mut();
            let v = v.tensor.data_mut();
            for i in 0..w.len() {
                m[i] = beta1 * m[i] + (1.0 - beta1) * g[i];
                v[i] = beta2 * v[i] + (1.0 - beta2) * g[i] * g[i];
                let m_hat = m[i] / c1;
                let v_hat = v[i] / c2;
                w[i] -= lr * m_hat / (v_hat.sqrt() + epsilon);
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Loss {
    Mae,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainPlan {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    /// Seeds both the per-epoch shuffle and the dropout masks.
    pub shuffle_seed: u64,
    pub loss: Loss,
    /// Worker threads for per-sample gradients. Results are identical
    /// for any value.
    pub threads: usize,
}

impl Default for TrainPlan {
    fn default() -> Self {
        TrainPlan {
            epochs: 30,
            batch_size: 32,
            lr: 3e-4,
            shuffle_seed: 0,
            loss: Loss::Mae,
            threads: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpochStats {
    pub epoch: usize,
    /// Mean absolute error over the epoch's training batches (train mode).
    pub train_mae: f64,
    pub wall_ms: f64,
}

/// A model the training loop can drive.
pub trait Trainable {
    fn params(&self) -> &ModelWeights;
    fn params_mut(&mut self) -> &mut ModelWeights;
    /// Batch loss and its gradient; may update internal statistics.
    fn batch_gradient(
        &mut self,
        batch: &[&Example],
        seed: u64,
        threads: usize,
    ) -> Result<(f64, ModelWeights)>;
}

impl<M: Regressor> Trainable for M {
    fn params(&self) -> &ModelWeights {
        self.weights()
    }

    fn params_mut(&mut self) -> &mut ModelWeights {
        self.weights_mut()
    }

    fn batch_gradient(
        &mut self,
        batch: &[&Example],
        seed: u64,
        threads: usize,
    ) -> Result<(f64, ModelWeights)> {
        mae_batch_gradient(self, batch, seed, threads)
    }
}

const SHUFFLE_STREAM: u64 = 0x5EED_0001;
const BATCH_STREAM: u64 = 0x5EED_0002;

/// Trains with Adam on a constant learning rate and returns the per-epoch
/// training MAE. The last partial batch of each epoch is kept.
pub fn fit<T: Trainable + Send + ?Sized>(
    model: &mut T,
    train: &[Example],
    plan: &TrainPlan,
    on_epoch: &mut dyn FnMut(&EpochStats, &T),
) -> Result<Vec<f64>> {
    if train.is_empty() {
        return Err(Error::InvalidArgument("training set is empty".into()));
    }
    if plan.batch_size == 0 {
        return Err(Error::InvalidArgument("batch size 0".into()));
    }
    let mut adam = AdamState::new(
        model.params(),
        AdamParams {
            lr: plan.lr,
            ..AdamParams::default()
        },
    );
    let pool = if plan.threads > 1 {
        Some(
            rayon::ThreadPoolBuilder::new()
                .num_threads(plan.threads)
                .build()
                .map_err(|e| Error::InvalidArgument(format!("thread pool: {e}")))?,
        )
    } else {
        None
    };
    let mut history = Vec::with_capacity(plan.epochs);
    let mut order: Vec<usize> = (0..train.len()).collect();
    for epoch in 0..plan.epochs {
        let started = Instant::now();
        order.sort_unstable();
        rng::shuffle(
            &mut order,
            &mut rng::seeded(rng::derive_seed(
                plan.shuffle_seed,
                SHUFFLE_STREAM,
                epoch as u64,
            )),
        );
        let mut abs_sum = 0.0;
        for (b, chunk) in order.chunks(plan.batch_size).enumerate() {
            let batch: Vec<&Example> = chunk.iter().map(|&i| &train[i]).collect();
            let seed = rng::derive_seed(
                plan.shuffle_seed,
                BATCH_STREAM,
                ((epoch as u64) << 32) | b as u64,
            );
            let (loss, grads) = match &pool {
                Some(p) => p.install(|| model.batch_gradient(&batch, seed, plan.threads)),
                None => model.batch_gradient(&batch, seed, 1),
            }
            .map_err(|e| match e {
                Error::NonFinite(_) => Error::Diverged {
                    epoch,
                    batch: b,
                    loss: f64::NAN,
                },
                other => other,
            })?;
            if !loss.is_finite() {
                return Err(Error::Diverged {
                    epoch,
                    batch: b,
                    loss,
                });
            }
            adam.step(model.params_mut(), &grads)?;
            abs_sum += loss * batch.len() as f64;
        }
        let stats = EpochStats {
            epoch,
            train_mae: abs_sum / train.len() as f64,
            wall_ms: started.elapsed().as_secs_f64() * 1e3,
        };
        history.push(stats.train_mae);
        on_epoch(&stats, model);
    }
    Ok(history)
}

/// Mean absolute error of a model's inference-mode predictions.
pub fn dataset_mae<M: Regressor + ?Sized>(model: &M, data: &[Example]) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::InvalidArgument("empty dataset".into()));
    }
    let mut sum = 0.0;
    for ex in data {
        sum += (model.predict(&ex.input)? - ex.target).abs();
    }
    Ok(sum / data.len() as f64)
}

/// One row of the training log.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LogRow {
    pub epoch: usize,
    pub train_mae: f64,
    pub val_mae: Option<f64>,
    pub wall_ms: f64,
}

/// Writes `epoch,train_mae,val_mae,wall_ms`; empty `val_mae` when absent.
pub fn write_log_csv(path: &Path, rows: &[LogRow]) -> Result<()> {
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut text = String::from("epoch,train_mae,val_mae,wall_ms\n");
    for r in rows {
        let val = r.val_mae.map(|v| format!("{v:.6}")).unwrap_or_default();
        text.push_str(&format!(
            "{},{:.6},{},{:.1}\n",
            r.epoch, r.train_mae, val, r.wall_ms
        ));
    }
    f.write_all(text.as_bytes()).map_err(|e| Error::io(path, e))
}
