//! Quantization-aware training: the float model is trained through
//! fake-quantized weights and activations with straight-through gradients.

use super::params::fake_quant_in_place;
use super::{ActRanges, QuantParams, QuantizedModel};
use crate::error::Result;
use crate::model::Regressor;
use crate::model::{abs_subgradient, batch_map, reduce_mae, Example, Mode};
use crate::remnet::{ActPoint, ForwardHooks, Remnet};
use crate::tensor::Tensor;
use crate::training::{fit, EpochStats, TrainPlan, Trainable};
use crate::weights::ModelWeights;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QatOptions {
    /// With `false` the forward pass is untouched; only ranges are tracked.
    pub fake_quant: bool,
    /// Exponential moving average decay of activation ranges.
    pub ema_decay: f64,
}

impl Default for QatOptions {
    fn default() -> Self {
        QatOptions {
            fake_quant: true,
            ema_decay: 0.99,
        }
    }
}

/// A float REMNet wrapped with activation range tracking.
#[derive(Debug, Clone)]
pub struct QatModel {
    pub model: Remnet,
    pub options: QatOptions,
    /// EMA ranges per activation point; `None` until first observed.
    pub ranges: Vec<Option<(f64, f64)>>,
}

struct FakeQuantHooks<'a> {
    ranges: &'a [Option<(f64, f64)>],
    enabled: bool,
    observed: ActRanges,
}

impl ForwardHooks for FakeQuantHooks<'_> {
    fn weight(&mut self, index: usize, w: &Tensor) -> Option<Tensor> {
        // even indices are kernels, odd ones biases
        if !self.enabled || index % 2 == 1 {
            return None;
        }
        Some(super::fake_quant(
            w,
            &QuantParams::symmetric_i8(w.max_abs()),
        ))
    }

    fn activation(&mut self, point: ActPoint, values: &mut [f64]) -> Option<Vec<bool>> {
        let r = &mut self.observed[point.index()];
        for &v in values.iter() {
            r.0 = r.0.min(v);
            r.1 = r.1.max(v);
        }
        if !self.enabled {
            return None;
        }
        let p = match point {
            ActPoint::Gate(_) => QuantParams::sigmoid_output(),
            _ => {
                let (lo, hi) = self.ranges[point.index()]?;
                QuantParams::asymmetric_i8(lo, hi)
            }
        };
        Some(fake_quant_in_place(values, &p))
    }
}

impl QatModel {
    pub fn new(model: Remnet, options: QatOptions) -> Self {
        let points = ActPoint::count(model.config().modules);
        QatModel {
            model,
            options,
            ranges: vec![None; points],
        }
    }

    fn hooks(&self) -> FakeQuantHooks<'_> {
        FakeQuantHooks {
            ranges: &self.ranges,
            enabled: self.options.fake_quant,
            observed: vec![(f64::INFINITY, f64::NEG_INFINITY); self.ranges.len()],
        }
    }

    fn update_ranges(&mut self, batch: &[(f64, f64)]) {
        let d = self.options.ema_decay;
        for (r, &(lo, hi)) in self.ranges.iter_mut().zip(batch) {
            if lo > hi {
                continue;
            }
            *r = Some(match *r {
                None => (lo, hi),
                Some((a, b)) => (d * a + (1.0 - d) * lo, d * b + (1.0 - d) * hi),
            });
        }
    }

    /// Inference through the fake-quantized graph.
    pub fn predict_fake_quant(&self, input: &[f64]) -> Result<f64> {
        let mut hooks = self.hooks();
        let mut unused = crate::rng::seeded(0);
        Ok(self
            .model
            .forward_traced(input, Mode::Infer, &mut unused, &mut hooks)?
            .output)
    }

    pub fn export(&self) -> Result<QuantizedModel> {
        let ranges: ActRanges = self
            .ranges
            .iter()
            .map(|r| r.unwrap_or((0.0, 0.0)))
            .collect();
        QuantizedModel::from_float(&self.model, &ranges)
    }
}

impl Trainable for QatModel {
    fn params(&self) -> &ModelWeights {
        self.model.weights()
    }

    fn params_mut(&mut self) -> &mut ModelWeights {
        self.model.weights_mut()
    }

    fn batch_gradient(
        &mut self,
        batch: &[&Example],
        seed: u64,
        threads: usize,
    ) -> Result<(f64, ModelWeights)> {
        if batch.is_empty() {
            return Err(crate::error::Error::InvalidArgument("empty batch".into()));
        }
        let this = &*self;
        let per_sample = batch_map(batch, seed, threads, |ex, r| {
            let mut hooks = this.hooks();
            let trace = this
                .model
                .forward_traced(&ex.input, Mode::Train, r, &mut hooks)?;
            let grads = this
                .model
                .backward_traced(&trace, abs_subgradient(trace.output - ex.target))?;
            Ok(((trace.output - ex.target).abs(), grads, hooks.observed))
        })?;
        let mut observed = vec![(f64::INFINITY, f64::NEG_INFINITY); self.ranges.len()];
        let mut pairs = Vec::with_capacity(per_sample.len());
        for (err, g, obs) in per_sample {
            for (a, b) in observed.iter_mut().zip(obs) {
                a.0 = a.0.min(b.0);
                a.1 = a.1.max(b.1);
            }
            pairs.push((err, g));
        }
        let out = reduce_mae(self.model.weights(), pairs, batch.len())?;
        self.update_ranges(&observed);
        Ok(out)
    }
}

/// Fine-tunes `model` with fake quantization and exports the int8 model.
pub fn train_qat(
    model: Remnet,
    train: &[Example],
    plan: &TrainPlan,
    options: QatOptions,
    on_epoch: &mut dyn FnMut(&EpochStats, &QatModel),
) -> Result<(QatModel, QuantizedModel, Vec<f64>)> {
    let mut qat = QatModel::new(model, options);
    let history = fit(&mut qat, train, plan, on_epoch)?;
    let q = qat.export()?;
    Ok((qat, q, history))
}
