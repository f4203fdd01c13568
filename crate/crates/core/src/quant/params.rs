use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Smallest scale ever produced; keeps constant tensors from dividing by 0.
pub const SCALE_FLOOR: f64 = 1e-8;

/// Affine quantization `r = S · (q − Z)` with `q` clamped to `[qmin, qmax]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuantParams {
    pub scale: f64,
    pub zero_point: i32,
    pub qmin: i32,
    pub qmax: i32,
}

/// Rounds to nearest, ties away from zero.
#[inline]
pub fn round_half_away(x: f64) -> f64 {
    x.round()
}

impl QuantParams {
    pub fn new(scale: f64, zero_point: i32, qmin: i32, qmax: i32) -> Result<Self> {
        if !(scale > 0.0 && scale.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "scale {scale} must be positive and finite"
            )));
        }
        if qmin >= qmax || zero_point < qmin || zero_point > qmax {
            return Err(Error::InvalidArgument(format!(
                "zero point {zero_point} outside [{qmin}, {qmax}]"
            )));
        }
        Ok(QuantParams {
            scale,
            zero_point,
            qmin,
            qmax,
        })
    }

    /// Symmetric int8 weights: `Z = 0`, `q ∈ [−127, 127]`, `S = max|w|/127`.
    pub fn symmetric_i8(max_abs: f64) -> Self {
        QuantParams {
            scale: (max_abs / 127.0).max(SCALE_FLOOR),
            zero_point: 0,
            qmin: -127,
            qmax: 127,
        }
    }

    /// Asymmetric int8 activations covering `[min, max] ∪ {0}` so that real
    /// zero is exactly representable.
    pub fn asymmetric_i8(min: f64, max: f64) -> Self {
        let lo = min.min(0.0);
        let hi = max.max(0.0);
        let scale = ((hi - lo) / 255.0).max(SCALE_FLOOR);
        let zero_point = round_half_away(-128.0 - lo / scale).clamp(-128.0, 127.0) as i32;
        QuantParams {
            scale,
            zero_point,
            qmin: -128,
            qmax: 127,
        }
    }

    /// The fixed gate encoding for sigmoid outputs: `S = 1/256`, `Z = −128`.
    pub fn sigmoid_output() -> Self {
        QuantParams {
            scale: 1.0 / 256.0,
            zero_point: -128,
            qmin: -128,
            qmax: 127,
        }
    }

    /// int32 bias with `Z = 0`.
    pub fn bias_i32(scale: f64) -> Self {
        QuantParams {
            scale: scale.max(SCALE_FLOOR * SCALE_FLOOR),
            zero_point: 0,
            qmin: -(1 << 30),
            qmax: 1 << 30,
        }
    }

    /// Real values representable without clamping.
    pub fn real_range(&self) -> (f64, f64) {
        (self.dequantize(self.qmin), self.dequantize(self.qmax))
    }

    pub fn quantize(&self, r: f64) -> i32 {
        let q = round_half_away(r / self.scale) + self.zero_point as f64;
        q.clamp(self.qmin as f64, self.qmax as f64) as i32
    }

    pub fn dequantize(&self, q: i32) -> f64 {
        self.scale * (q - self.zero_point) as f64
    }

    pub fn fake_quant_value(&self, r: f64) -> f64 {
        self.dequantize(self.quantize(r))
    }
}

pub fn quantize(r: f64, p: &QuantParams) -> i32 {
    p.quantize(r)
}

pub fn dequantize(q: i32, p: &QuantParams) -> f64 {
    p.dequantize(q)
}

/// `dequantize(quantize(x))` elementwise.
pub fn fake_quant(x: &Tensor, p: &QuantParams) -> Tensor {
    let mut out = x.clone();
    out.data_mut()
        .iter_mut()
        .for_each(|v| *v = p.fake_quant_value(*v));
    out
}

/// Straight-through estimator: the upstream gradient where `x` lies in
/// the representable range, zero where it was clamped.
pub fn fake_quant_backward(grad_out: &Tensor, x: &Tensor, p: &QuantParams) -> Tensor {
    let (lo, hi) = p.real_range();
    let mut g = grad_out.clone();
    for (gv, &xv) in g.data_mut().iter_mut().zip(x.data()) {
        if xv < lo || xv > hi {
            *gv = 0.0;
        }
    }
    g
}

/// Pass-through mask used by the STE inside instrumented forward passes.
pub(crate) fn fake_quant_in_place(values: &mut [f64], p: &QuantParams) -> Vec<bool> {
    let (lo, hi) = p.real_range();
    values
        .iter_mut()
        .map(|v| {
            let inside = *v >= lo && *v <= hi;
            *v = p.fake_quant_value(*v);
            inside
        })
        .collect()
}
