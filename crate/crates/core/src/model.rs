//! The regression-model interface used by training and evaluation.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::rng::{self, Rng};
use crate::weights::ModelWeights;

/// One supervised pair: model input and range-error label (meters).
#[derive(Debug, Clone, PartialEq)]
pub struct Example {
    pub input: Vec<f64>,
    pub target: f64,
}

impl Example {
    pub fn new(input: Vec<f64>, target: f64) -> Self {
        Example { input, target }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Infer,
}

pub trait Regressor: Sync {
    fn weights(&self) -> &ModelWeights;
    fn weights_mut(&mut self) -> &mut ModelWeights;
    fn input_len(&self) -> usize;

    /// Deterministic inference-mode prediction.
    fn predict(&self, input: &[f64]) -> Result<f64>;

    /// Train-mode forward pass followed by backpropagation of
    /// `dloss(prediction)`. Returns the prediction and the parameter
    /// gradient of the loss.
    fn loss_gradient(
        &self,
        input: &[f64],
        rng: &mut Rng,
        dloss: &dyn Fn(f64) -> f64,
    ) -> Result<(f64, ModelWeights)>;
}

const DROPOUT_STREAM: u64 = 0xD80F;

/// Subgradient of `|x|` with the value 0 at the kink.
pub fn abs_subgradient(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Runs `per_sample` over a batch, giving sample `i` a dropout stream
/// derived from `(seed, i)`. Results come back in batch order whatever
/// the thread count.
pub fn batch_map<R, F>(
    batch: &[&Example],
    seed: u64,
    threads: usize,
    per_sample: F,
) -> Result<Vec<R>>
where
    R: Send,
    F: Fn(&Example, &mut Rng) -> Result<R> + Sync,
{
    let one = |(i, ex): (usize, &&Example)| -> Result<R> {
        let mut r = rng::seeded(rng::derive_seed(seed, DROPOUT_STREAM, i as u64));
        per_sample(ex, &mut r)
    };
    if threads > 1 {
        batch.par_iter().enumerate().map(one).collect()
    } else {
        batch.iter().enumerate().map(one).collect()
    }
}

/// Sums `(|error|, gradient)` pairs in order and averages them.
pub fn reduce_mae(
    layout: &ModelWeights,
    per_sample: impl IntoIterator<Item = (f64, ModelWeights)>,
    count: usize,
) -> Result<(f64, ModelWeights)> {
    let mut total = 0.0;
    let mut grads = layout.zeros_like();
    for (err, g) in per_sample {
        total += err;
        grads.add_assign(&g)?;
    }
    let inv = 1.0 / count as f64;
    grads.scale(inv);
    Ok((total * inv, grads))
}

/// Mean absolute error over a batch and its gradient.
///
/// Per-sample gradients are summed in batch order, so the result does
/// not depend on `threads`.
pub fn mae_batch_gradient<M: Regressor + ?Sized>(
    model: &M,
    batch: &[&Example],
    seed: u64,
    threads: usize,
) -> Result<(f64, ModelWeights)> {
    if batch.is_empty() {
        return Err(Error::InvalidArgument("empty batch".into()));
    }
    let per_sample = batch_map(batch, seed, threads, |ex, r| {
        let target = ex.target;
        let (pred, grads) = model.loss_gradient(&ex.input, r, &|p| abs_subgradient(p - target))?;
        Ok(((pred - target).abs(), grads))
    })?;
    reduce_mae(model.weights(), per_sample, batch.len())
}
