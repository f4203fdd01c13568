//! Full-integer quantization of REMNet.
//!
//! Weights are symmetric per-tensor int8, activations asymmetric int8,
//! biases int32 at scale `S_in · S_w`. Every rescale between tensors is a
//! [`Requantizer`]. Sigmoid gates go through a 256-entry table into a
//! fixed `S = 1/256, Z = −128` encoding. The only float operation in
//! [`Int8Engine::forward`] is the final conversion of the head's int32
//! accumulator to meters.

mod file;
mod fixed_point;
mod int8;
mod kernel;
mod params;
mod qat;
mod simulate;

pub use file::{
    decode_qmodel, encode_qmodel, load_qmodel, save_qmodel, QMODEL_MAGIC, QMODEL_VERSION,
};
pub use fixed_point::{
    decompose_multiplier, decompose_scale, fixed_point_mul, rounding_divide_by_pot,
    saturating_rounding_doubling_high_mul, FixedPointMultiplier, Requantizer,
};
pub use int8::{forward_int8, Int8Engine};
pub use params::{
    dequantize, fake_quant, fake_quant_backward, quantize, round_half_away, QuantParams,
    SCALE_FLOOR,
};
pub use qat::{train_qat, QatModel, QatOptions};
pub use simulate::simulate_forward;

use crate::error::{Error, Result};
use crate::model::Mode;
use crate::model::Regressor;
use crate::nn::sigmoid;
use crate::remnet::{ActPoint, ForwardHooks, Remnet, RemnetConfig};
use crate::rng;

/// Shift applied to both operands of an integer add before rescaling.
pub const ADD_SHIFT: u8 = 12;

/// Requantizers per residual reduction module.
pub const REQ_PER_MODULE: usize = 11;

/// Offsets of a module's requantizers.
pub mod req {
    pub const RES: usize = 0;
    pub const POOL: usize = 1;
    pub const SE1: usize = 2;
    pub const SE2: usize = 3;
    pub const SCALE: usize = 4;
    pub const SUM_IN: usize = 5;
    pub const SUM_SCALED: usize = 6;
    pub const BR1: usize = 7;
    pub const BR2: usize = 8;
    pub const OUT_BR1: usize = 9;
    pub const OUT_BR2: usize = 10;

    pub fn module(m: usize, offset: usize) -> usize {
        1 + m * super::REQ_PER_MODULE + offset
    }
}

/// Offsets of a module's weighted layers.
pub mod layer {
    pub const RES: usize = 0;
    pub const SE1: usize = 1;
    pub const SE2: usize = 2;
    pub const BR1: usize = 3;
    pub const BR2: usize = 4;

    pub fn module(m: usize, offset: usize) -> usize {
        1 + m * 5 + offset
    }

    pub fn head(modules: usize) -> usize {
        1 + modules * 5
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QWeight {
    pub shape: Vec<usize>,
    pub params: QuantParams,
    pub data: Vec<i8>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QBias {
    pub params: QuantParams,
    pub data: Vec<i32>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QuantizedModel {
    pub config: RemnetConfig,
    /// One entry per [`ActPoint`], indexed by `ActPoint::index`.
    pub activations: Vec<QuantParams>,
    /// Weighted layers: stem, then per module res/se1/se2/br1/br2, then head.
    pub weights: Vec<QWeight>,
    pub biases: Vec<QBias>,
    /// Stem, then [`REQ_PER_MODULE`] per module.
    pub requantizers: Vec<Requantizer>,
    /// Per module: int8 logit → int8 gate.
    pub gate_luts: Vec<[i8; 256]>,
}

/// Per-point `(min, max)` of observed activations.
pub type ActRanges = Vec<(f64, f64)>;

fn input_point(m: usize) -> ActPoint {
    if m == 0 {
        ActPoint::Stem
    } else {
        ActPoint::Out(m - 1)
    }
}

impl QuantizedModel {
    /// Builds the integer model from float weights and activation ranges.
    pub fn from_float(model: &Remnet, ranges: &[(f64, f64)]) -> Result<Self> {
        let cfg = *model.config();
        let points = ActPoint::count(cfg.modules);
        if ranges.len() != points {
            return Err(Error::shape(
                "quantize",
                format!("{} ranges for {points} activation points", ranges.len()),
            ));
        }
        let mut activations: Vec<QuantParams> = ranges
            .iter()
            .map(|&(lo, hi)| QuantParams::asymmetric_i8(lo, hi))
            .collect();
        for m in 0..cfg.modules {
            activations[ActPoint::Gate(m).index()] = QuantParams::sigmoid_output();
        }
        let act = |p: ActPoint| activations[p.index()];

        let w = model.weights();
        let mut weights = Vec::new();
        let mut biases = Vec::new();
        let mut push_layer = |wi: usize, input: QuantParams| {
            let wt = w.tensor(wi);
            let wp = QuantParams::symmetric_i8(wt.max_abs());
            let data = wt.data().iter().map(|&v| wp.quantize(v) as i8).collect();
            weights.push(QWeight {
                shape: wt.shape().to_vec(),
                params: wp,
                data,
            });
            let bp = QuantParams::bias_i32(input.scale * wp.scale);
            let bdata = w
                .tensor(wi + 1)
                .data()
                .iter()
                .map(|&v| bp.quantize(v))
                .collect();
            biases.push(QBias {
                params: bp,
                data: bdata,
            });
        };
        push_layer(0, act(ActPoint::Input));
        for m in 0..cfg.modules {
            let base = 2 + m * crate::remnet::PARAMS_PER_MODULE;
            push_layer(base, act(input_point(m)));
            push_layer(base + 2, act(ActPoint::Pool(m)));
            push_layer(base + 4, act(ActPoint::Excite(m)));
            push_layer(base + 6, act(ActPoint::Sum(m)));
            push_layer(base + 8, act(ActPoint::Sum(m)));
        }
        let head_in = if cfg.modules == 0 {
            ActPoint::Stem
        } else {
            ActPoint::Out(cfg.modules - 1)
        };
        push_layer(
            2 + cfg.modules * crate::remnet::PARAMS_PER_MODULE,
            act(head_in),
        );

        let conv_m = |l: usize, input: ActPoint, output: ActPoint| {
            decompose_scale(act(input).scale * weights[l].params.scale / act(output).scale)
        };
        let mut requantizers = vec![conv_m(0, ActPoint::Input, ActPoint::Stem)?];
        let mut gate_luts = Vec::with_capacity(cfg.modules);
        for m in 0..cfg.modules {
            let len = cfg.module_len(m);
            let s = |p: ActPoint| act(p).scale;
            let inp = input_point(m);
            requantizers.extend([
                conv_m(layer::module(m, layer::RES), inp, ActPoint::Residual(m))?,
                decompose_scale(s(ActPoint::Residual(m)) / (len as f64 * s(ActPoint::Pool(m))))?,
                conv_m(
                    layer::module(m, layer::SE1),
                    ActPoint::Pool(m),
                    ActPoint::Excite(m),
                )?,
                conv_m(
                    layer::module(m, layer::SE2),
                    ActPoint::Excite(m),
                    ActPoint::Logit(m),
                )?,
                decompose_scale(
                    s(ActPoint::Residual(m)) * s(ActPoint::Gate(m)) / s(ActPoint::Scaled(m)),
                )?,
                decompose_scale(s(inp) / s(ActPoint::Sum(m)))?,
                decompose_scale(s(ActPoint::Scaled(m)) / s(ActPoint::Sum(m)))?,
                conv_m(
                    layer::module(m, layer::BR1),
                    ActPoint::Sum(m),
                    ActPoint::Branch1(m),
                )?,
                conv_m(
                    layer::module(m, layer::BR2),
                    ActPoint::Sum(m),
                    ActPoint::Branch2(m),
                )?,
                decompose_scale(s(ActPoint::Branch1(m)) / s(ActPoint::Out(m)))?,
                decompose_scale(s(ActPoint::Branch2(m)) / s(ActPoint::Out(m)))?,
            ]);
            let logit = act(ActPoint::Logit(m));
            let gate = act(ActPoint::Gate(m));
            let mut lut = [0i8; 256];
            for (i, e) in lut.iter_mut().enumerate() {
                *e = gate.quantize(sigmoid(logit.dequantize(i as i32 - 128))) as i8;
            }
            gate_luts.push(lut);
        }
        Ok(QuantizedModel {
            config: cfg,
            activations,
            weights,
            biases,
            requantizers,
            gate_luts,
        })
    }

    pub fn input_params(&self) -> QuantParams {
        self.activations[ActPoint::Input.index()]
    }

    pub fn act(&self, p: ActPoint) -> QuantParams {
        self.activations[p.index()]
    }

    pub fn quantize_input(&self, cir: &[f64]) -> Vec<i8> {
        let p = self.input_params();
        cir.iter().map(|&v| p.quantize(v) as i8).collect()
    }

    /// Scale converting the head accumulator to meters.
    pub fn output_scale(&self) -> f64 {
        let head = layer::head(self.config.modules);
        self.biases[head].params.scale
    }

    /// Dequantized copy of the weights as a float model (biases included).
    pub fn dequantized_weights(&self) -> Result<Remnet> {
        let mut w = crate::weights::ModelWeights::new();
        for ((name, shape), i) in crate::remnet::param_layout(&self.config)
            .into_iter()
            .zip(0..)
        {
            let l = i / 2;
            let data: Vec<f64> = if i % 2 == 0 {
                self.weights[l]
                    .data
                    .iter()
                    .map(|&q| self.weights[l].params.dequantize(q as i32))
                    .collect()
            } else {
                self.biases[l]
                    .data
                    .iter()
                    .map(|&q| self.biases[l].params.dequantize(q))
                    .collect()
            };
            w.push(name, crate::tensor::Tensor::from_vec(&shape, data)?);
        }
        Remnet::from_weights(self.config, w)
    }
}

/// Records per-point activation minima and maxima.
pub struct RangeObserver {
    pub ranges: ActRanges,
}

impl RangeObserver {
    pub fn new(modules: usize) -> Self {
        RangeObserver {
            ranges: vec![(f64::INFINITY, f64::NEG_INFINITY); ActPoint::count(modules)],
        }
    }

    pub fn merge(&mut self, other: &RangeObserver) {
        for (a, b) in self.ranges.iter_mut().zip(&other.ranges) {
            a.0 = a.0.min(b.0);
            a.1 = a.1.max(b.1);
        }
    }

    /// Ranges with unobserved points collapsed to `(0, 0)`.
    pub fn finished(&self) -> ActRanges {
        self.ranges
            .iter()
            .map(|&(lo, hi)| if lo <= hi { (lo, hi) } else { (0.0, 0.0) })
            .collect()
    }
}

impl ForwardHooks for RangeObserver {
    fn activation(&mut self, point: ActPoint, values: &mut [f64]) -> Option<Vec<bool>> {
        let r = &mut self.ranges[point.index()];
        for &v in values.iter() {
            r.0 = r.0.min(v);
            r.1 = r.1.max(v);
        }
        None
    }
}

/// Post-training quantization: activation ranges are the min/max seen
/// over `calib` in inference mode.
pub fn calibrate_ptq(model: &Remnet, calib: &[Vec<f64>]) -> Result<QuantizedModel> {
    if calib.is_empty() {
        return Err(Error::InvalidArgument("empty calibration set".into()));
    }
    let mut obs = RangeObserver::new(model.config().modules);
    let mut unused = rng::seeded(0);
    for x in calib {
        if x.len() != model.input_len() {
            return Err(Error::shape(
                "calibrate",
                format!("sample length {} != {}", x.len(), model.input_len()),
            ));
        }
        model.forward_traced(x, Mode::Infer, &mut unused, &mut obs)?;
    }
    QuantizedModel::from_float(model, &obs.finished())
}

#[cfg(test)]
mod tests;
