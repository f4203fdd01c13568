//! Named parameter store shared by every trainable model.

use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Debug, Clone, PartialEq)]
pub struct NamedTensor {
    pub name: String,
    pub tensor: Tensor,
}

/// Ordered list of named parameter tensors. Gradients and optimizer
/// moments use the same type with identical names and shapes.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ModelWeights {
    entries: Vec<NamedTensor>,
}

impl ModelWeights {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, name: impl Into<String>, tensor: Tensor) {
        self.entries.push(NamedTensor {
            name: name.into(),
            tensor,
        });
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn total_params(&self) -> usize {
        self.entries.iter().map(|e| e.tensor.len()).sum()
    }

    pub fn entries(&self) -> &[NamedTensor] {
        &self.entries
    }

    pub fn iter(&self) -> impl Iterator<Item = &NamedTensor> {
        self.entries.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut NamedTensor> {
        self.entries.iter_mut()
    }

    pub fn tensor(&self, index: usize) -> &Tensor {
        &self.entries[index].tensor
    }

    pub fn tensor_mut(&mut self, index: usize) -> &mut Tensor {
        &mut self.entries[index].tensor
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.entries
            .iter()
            .find(|e| e.name == name)
            .map(|e| &e.tensor)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        self.entries
            .iter_mut()
            .find(|e| e.name == name)
            .map(|e| &mut e.tensor)
    }

    /// Same names and shapes, all zeros.
    pub fn zeros_like(&self) -> Self {
        ModelWeights {
            entries: self
                .entries
                .iter()
                .map(|e| NamedTensor {
                    name: e.name.clone(),
                    tensor: Tensor::zeros(e.tensor.shape()),
                })
                .collect(),
        }
    }

    pub fn same_layout(&self, other: &ModelWeights) -> bool {
        self.entries.len() == other.entries.len()
            && self
                .entries
                .iter()
                .zip(&other.entries)
                .all(|(a, b)| a.name == b.name && a.tensor.shape() == b.tensor.shape())
    }

    pub fn add_assign(&mut self, other: &ModelWeights) -> Result<()> {
        if !self.same_layout(other) {
            return Err(Error::shape("weights add", "layouts differ"));
        }
        for (a, b) in self.entries.iter_mut().zip(&other.entries) {
            a.tensor.add_assign(&b.tensor)?;
        }
        Ok(())
    }

    pub fn scale(&mut self, factor: f64) {
        for e in &mut self.entries {
            e.tensor.scale(factor);
        }
    }

    pub fn values(&self) -> impl Iterator<Item = f64> + '_ {
        self.entries
            .iter()
            .flat_map(|e| e.tensor.data().iter().copied())
    }

    pub fn is_finite(&self) -> bool {
        self.entries.iter().all(|e| e.tensor.is_finite())
    }

    /// Rounds every value to the nearest IEEE binary16 and back; the
    /// "float16" storage variant of a trained model.
    pub fn to_f16_precision(&self) -> Self {
        let mut out = self.clone();
        for e in &mut out.entries {
            for v in e.tensor.data_mut() {
                *v = half::f16::from_f64(*v).to_f64();
            }
        }
        out
    }

    /// Rounds every value to f32 precision (what a checkpoint stores).
    pub fn to_f32_precision(&self) -> Self {
        let mut out = self.clone();
        for e in &mut out.entries {
            for v in e.tensor.data_mut() {
                *v = *v as f32 as f64;
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zeros_like_keeps_layout() {
        let mut w = ModelWeights::new();
        w.push("a", Tensor::filled(&[2, 3], 1.0));
        w.push("b", Tensor::filled(&[3], 2.0));
        let z = w.zeros_like();
        assert!(w.same_layout(&z));
        assert_eq!(z.values().sum::<f64>(), 0.0);
        assert_eq!(w.total_params(), 9);
    }

    #[test]
    fn f16_rounding_is_idempotent() {
        let mut w = ModelWeights::new();
        w.push(
            "a",
            Tensor::from_vec(&[3], vec![0.1, -1.0 / 3.0, 1234.567]).unwrap(),
        );
        let once = w.to_f16_precision();
        assert_eq!(once.to_f16_precision(), once);
        assert!((once.tensor(0).data()[0] - 0.1).abs() < 1e-4);
    }
}
