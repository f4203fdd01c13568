//! Fully connected baseline on the raw CIR window.

use crate::error::{Error, Result};
use crate::model::Regressor;
use crate::nn::{self, Activation};
use crate::rng::Rng;
use crate::tensor::Tensor;
use crate::weights::ModelWeights;

#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    input_dim: usize,
    weights: ModelWeights,
}

impl Mlp {
    /// `layers` dense layers in total: `layers − 1` hidden ReLU layers of
    /// width `hidden` and a linear scalar output.
    pub fn build(input_dim: usize, hidden: usize, layers: usize, rng: &mut Rng) -> Result<Self> {
        if input_dim == 0 || hidden == 0 || layers == 0 {
            return Err(Error::Config(format!(
                "mlp needs positive sizes (input {input_dim}, hidden {hidden}, layers {layers})"
            )));
        }
        let mut weights = ModelWeights::new();
        let mut fan_in = input_dim;
        for l in 0..layers {
            let fan_out = if l + 1 == layers { 1 } else { hidden };
            let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
            let data = (0..fan_in * fan_out)
                .map(|_| crate::rng::uniform_range(rng, -limit, limit))
                .collect();
            weights.push(
                format!("fc{l}.w"),
                Tensor::from_vec(&[fan_in, fan_out], data)?,
            );
            weights.push(format!("fc{l}.b"), Tensor::zeros(&[fan_out]));
            fan_in = fan_out;
        }
        Ok(Mlp { input_dim, weights })
    }

    pub fn layers(&self) -> usize {
        self.weights.len() / 2
    }

    fn activation(&self, layer: usize) -> Activation {
        if layer + 1 == self.layers() {
            Activation::Linear
        } else {
            Activation::Relu
        }
    }

    /// Returns every layer's input plus the final output.
    fn forward_all(&self, input: &[f64]) -> Result<Vec<Vec<f64>>> {
        if input.len() != self.input_dim {
            return Err(Error::shape(
                "mlp forward",
                format!("input length {} != {}", input.len(), self.input_dim),
            ));
        }
        let mut acts = vec![input.to_vec()];
        for l in 0..self.layers() {
            let next = nn::dense_forward(
                acts.last().expect("non-empty"),
                self.weights.tensor(2 * l),
                self.weights.tensor(2 * l + 1),
                self.activation(l),
            )?;
            acts.push(next);
        }
        Ok(acts)
    }
}

impl Regressor for Mlp {
    fn weights(&self) -> &ModelWeights {
        &self.weights
    }

    fn weights_mut(&mut self) -> &mut ModelWeights {
        &mut self.weights
    }

    fn input_len(&self) -> usize {
        self.input_dim
    }

    fn predict(&self, input: &[f64]) -> Result<f64> {
        let out = self.forward_all(input)?.pop().expect("non-empty")[0];
        if out.is_finite() {
            Ok(out)
        } else {
            Err(Error::NonFinite("mlp output".into()))
        }
    }

    fn loss_gradient(
        &self,
        input: &[f64],
        _rng: &mut Rng,
        dloss: &dyn Fn(f64) -> f64,
    ) -> Result<(f64, ModelWeights)> {
        let acts = self.forward_all(input)?;
        let pred = acts[self.layers()][0];
        let mut grads = self.weights.zeros_like();
        let mut g = vec![dloss(pred)];
        for l in (0..self.layers()).rev() {
            let (gx, gw, gb) = nn::dense_backward(
                &g,
                &acts[l],
                self.weights.tensor(2 * l),
                &acts[l + 1],
                self.activation(l),
            )?;
            *grads.tensor_mut(2 * l) = gw;
            *grads.tensor_mut(2 * l + 1) = gb;
            g = gx;
        }
        Ok((pred, grads))
    }
}
