//! REMNet: a 1D convolutional regressor that maps a CIR window to a
//! range-error estimate.
//!
//! Graph for an input of `K` samples and `F` filters:
//!
//! ```text
//! conv(k_first, 1→F) + ReLU
//! N × residual reduction module:
//!     h = ReLU(conv(k_body, F→F))
//!     s = sigmoid(dense(ReLU(dense(GAP(h), F→F/r)), F/r→F))
//!     u = x + h ⊙ s
//!     x = ReLU(conv(k_body, stride 2)(u)) + ReLU(conv(k_branch2, stride 2)(u))
//! flatten → dropout → dense(K/2^N·F → 1)
//! ```
//!
//! Forward passes can be instrumented through [`ForwardHooks`], which is
//! how calibration observes activation ranges and how quantization-aware
//! training injects fake-quantization.

pub(crate) mod checkpoint;
mod config;
pub mod infer32;
pub mod mlp;

pub use checkpoint::{
    decode as decode_checkpoint, encode as encode_checkpoint, load_checkpoint, save_checkpoint,
    CHECKPOINT_MAGIC, CHECKPOINT_VERSION,
};
pub use config::RemnetConfig;
pub use mlp::Mlp;

use crate::error::{Error, Result};
use crate::model::{Mode, Regressor};
use crate::nn::{self, Activation};
use crate::rng::{self, Rng};
use crate::tensor::Tensor;
use crate::weights::ModelWeights;

/// Parameter tensors per residual reduction module.
pub const PARAMS_PER_MODULE: usize = 10;
/// Activation points per residual reduction module.
pub const POINTS_PER_MODULE: usize = 10;

/// Named activation tensors of the graph, in execution order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ActPoint {
    Input,
    Stem,
    /// Residual-branch convolution output.
    Residual(usize),
    /// Squeeze: pooled channel statistics.
    Pool(usize),
    /// Bottleneck dense output.
    Excite(usize),
    /// Pre-sigmoid gate logits.
    Logit(usize),
    /// Sigmoid gate in (0, 1).
    Gate(usize),
    /// Residual branch after channel gating.
    Scaled(usize),
    /// Residual sum.
    Sum(usize),
    Branch1(usize),
    Branch2(usize),
    /// Module output (sum of both reduction branches).
    Out(usize),
}

impl ActPoint {
    pub fn index(self) -> usize {
        let module = |m: usize, off: usize| 2 + m * POINTS_PER_MODULE + off;
        match self {
            ActPoint::Input => 0,
            ActPoint::Stem => 1,
            ActPoint::Residual(m) => module(m, 0),
            ActPoint::Pool(m) => module(m, 1),
            ActPoint::Excite(m) => module(m, 2),
            ActPoint::Logit(m) => module(m, 3),
            ActPoint::Gate(m) => module(m, 4),
            ActPoint::Scaled(m) => module(m, 5),
            ActPoint::Sum(m) => module(m, 6),
            ActPoint::Branch1(m) => module(m, 7),
            ActPoint::Branch2(m) => module(m, 8),
            ActPoint::Out(m) => module(m, 9),
        }
    }

    pub fn count(modules: usize) -> usize {
        2 + modules * POINTS_PER_MODULE
    }

    pub fn all(modules: usize) -> Vec<ActPoint> {
        let mut v = vec![ActPoint::Input, ActPoint::Stem];
        for m in 0..modules {
            v.extend([
                ActPoint::Residual(m),
                ActPoint::Pool(m),
                ActPoint::Excite(m),
                ActPoint::Logit(m),
                ActPoint::Gate(m),
                ActPoint::Scaled(m),
                ActPoint::Sum(m),
                ActPoint::Branch1(m),
                ActPoint::Branch2(m),
                ActPoint::Out(m),
            ]);
        }
        v
    }
}

/// Parameter indices inside [`ModelWeights`].
pub(crate) mod param {
    use super::PARAMS_PER_MODULE;
    pub const STEM_W: usize = 0;
    pub const STEM_B: usize = 1;
    pub const RES_W: usize = 0;
    pub const RES_B: usize = 1;
    pub const SE1_W: usize = 2;
    pub const SE1_B: usize = 3;
    pub const SE2_W: usize = 4;
    pub const SE2_B: usize = 5;
    pub const BR1_W: usize = 6;
    pub const BR1_B: usize = 7;
    pub const BR2_W: usize = 8;
    pub const BR2_B: usize = 9;

    pub fn module(m: usize, offset: usize) -> usize {
        2 + m * PARAMS_PER_MODULE + offset
    }

    pub fn head_w(modules: usize) -> usize {
        2 + modules * PARAMS_PER_MODULE
    }

    pub fn head_b(modules: usize) -> usize {
        head_w(modules) + 1
    }
}

/// Observation and rewriting points inside a forward pass.
///
/// `activation` may modify the freshly computed tensor in place and
/// return a pass-through mask for the backward pass (straight-through
/// estimation): gradient flows where the mask is `true`.
pub trait ForwardHooks {
    fn weight(&mut self, _index: usize, _w: &Tensor) -> Option<Tensor> {
        None
    }

    fn activation(&mut self, _point: ActPoint, _values: &mut [f64]) -> Option<Vec<bool>> {
        None
    }
}

/// Hooks that do nothing.
pub struct NoHooks;

impl ForwardHooks for NoHooks {}

/// Glorot-uniform limit `sqrt(6 / (fan_in + fan_out))`.
fn glorot(shape: &[usize], fan_in: usize, fan_out: usize, rng: &mut Rng) -> Tensor {
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    let n: usize = shape.iter().product();
    let data = (0..n)
        .map(|_| rng::uniform_range(rng, -limit, limit))
        .collect();
    Tensor::from_vec(shape, data).expect("shape by construction")
}

fn conv_param(
    weights: &mut ModelWeights,
    name: &str,
    k: usize,
    cin: usize,
    cout: usize,
    rng: &mut Rng,
) {
    weights.push(
        format!("{name}.w"),
        glorot(&[k, cin, cout], k * cin, k * cout, rng),
    );
    weights.push(format!("{name}.b"), Tensor::zeros(&[cout]));
}

fn dense_param(weights: &mut ModelWeights, name: &str, n: usize, m: usize, rng: &mut Rng) {
    weights.push(format!("{name}.w"), glorot(&[n, m], n, m, rng));
    weights.push(format!("{name}.b"), Tensor::zeros(&[m]));
}

/// Names and shapes of every parameter tensor, in storage order.
pub fn param_layout(config: &RemnetConfig) -> Vec<(String, Vec<usize>)> {
    let f = config.filters;
    let b = config.bottleneck();
    let mut v = vec![
        ("stem.w".to_string(), vec![config.kernel_first, 1, f]),
        ("stem.b".to_string(), vec![f]),
    ];
    for m in 0..config.modules {
        let p = format!("rrm{m}");
        v.extend([
            (format!("{p}.res.w"), vec![config.kernel_body, f, f]),
            (format!("{p}.res.b"), vec![f]),
            (format!("{p}.se1.w"), vec![f, b]),
            (format!("{p}.se1.b"), vec![b]),
            (format!("{p}.se2.w"), vec![b, f]),
            (format!("{p}.se2.b"), vec![f]),
            (format!("{p}.br1.w"), vec![config.kernel_body, f, f]),
            (format!("{p}.br1.b"), vec![f]),
            (format!("{p}.br2.w"), vec![config.kernel_branch2, f, f]),
            (format!("{p}.br2.b"), vec![f]),
        ]);
    }
    v.push(("head.w".to_string(), vec![config.final_len() * f, 1]));
    v.push(("head.b".to_string(), vec![1]));
    v
}

#[derive(Debug, Clone, PartialEq)]
pub struct Remnet {
    config: RemnetConfig,
    weights: ModelWeights,
}

/// Intermediate values of one residual reduction module.
#[derive(Debug, Clone)]
pub struct ModuleTrace {
    pub input: Tensor,
    pub residual: Tensor,
    residual_mask: Vec<bool>,
    pub pooled: Vec<f64>,
    pool_mask: Option<Vec<bool>>,
    pub excite: Vec<f64>,
    excite_mask: Vec<bool>,
    logit_mask: Option<Vec<bool>>,
    /// Sigmoid output before any hook.
    gate_raw: Vec<f64>,
    /// Gate actually applied to the residual branch.
    pub gate: Vec<f64>,
    gate_mask: Option<Vec<bool>>,
    scaled_mask: Option<Vec<bool>>,
    pub sum: Tensor,
    sum_mask: Option<Vec<bool>>,
    branch1_mask: Vec<bool>,
    branch2_mask: Vec<bool>,
    out_mask: Option<Vec<bool>>,
}

/// Everything the backward pass needs from a forward pass.
#[derive(Debug, Clone)]
pub struct Trace {
    pub input: Tensor,
    stem_mask: Vec<bool>,
    pub modules: Vec<ModuleTrace>,
    pub flat: Vec<f64>,
    dropout_mask: Vec<f64>,
    dropped: Vec<f64>,
    /// Effective (possibly hook-rewritten) weights used by the pass.
    used: Vec<Option<Tensor>>,
    pub output: f64,
}

fn apply_mask(grad: &mut [f64], mask: &Option<Vec<bool>>) {
    if let Some(m) = mask {
        for (g, &keep) in grad.iter_mut().zip(m) {
            if !keep {
                *g = 0.0;
            }
        }
    }
}

fn apply_bool_mask(grad: &mut [f64], mask: &[bool]) {
    for (g, &keep) in grad.iter_mut().zip(mask) {
        if !keep {
            *g = 0.0;
        }
    }
}

/// ReLU in place; returns the derivative mask (pre-activation > 0).
fn relu_in_place(values: &mut [f64]) -> Vec<bool> {
    values
        .iter_mut()
        .map(|v| {
            let pos = *v > 0.0;
            if !pos {
                *v = 0.0;
            }
            pos
        })
        .collect()
}

fn and_mask(a: Vec<bool>, b: Option<Vec<bool>>) -> Vec<bool> {
    match b {
        None => a,
        Some(b) => a.into_iter().zip(b).map(|(x, y)| x && y).collect(),
    }
}

impl Remnet {
    pub fn build(config: RemnetConfig, rng: &mut Rng) -> Result<Self> {
        config.validate()?;
        let f = config.filters;
        let b = config.bottleneck();
        let mut w = ModelWeights::new();
        conv_param(&mut w, "stem", config.kernel_first, 1, f, rng);
        for m in 0..config.modules {
            let p = format!("rrm{m}");
            conv_param(&mut w, &format!("{p}.res"), config.kernel_body, f, f, rng);
            dense_param(&mut w, &format!("{p}.se1"), f, b, rng);
            dense_param(&mut w, &format!("{p}.se2"), b, f, rng);
            conv_param(&mut w, &format!("{p}.br1"), config.kernel_body, f, f, rng);
            conv_param(
                &mut w,
                &format!("{p}.br2"),
                config.kernel_branch2,
                f,
                f,
                rng,
            );
        }
        dense_param(&mut w, "head", config.final_len() * f, 1, rng);
        Ok(Remnet { config, weights: w })
    }

    /// Wraps existing weights after checking them against the config.
    pub fn from_weights(config: RemnetConfig, weights: ModelWeights) -> Result<Self> {
        config.validate()?;
        let layout = param_layout(&config);
        if layout.len() != weights.len() {
            return Err(Error::shape(
                "remnet weights",
                format!("expected {} tensors, got {}", layout.len(), weights.len()),
            ));
        }
        for ((name, shape), e) in layout.iter().zip(weights.iter()) {
            if *name != e.name || shape.as_slice() != e.tensor.shape() {
                return Err(Error::shape(
                    "remnet weights",
                    format!(
                        "expected {name} {shape:?}, got {} {:?}",
                        e.name,
                        e.tensor.shape()
                    ),
                ));
            }
        }
        Ok(Remnet { config, weights })
    }

    pub fn config(&self) -> &RemnetConfig {
        &self.config
    }

    pub fn total_params(&self) -> usize {
        self.weights.total_params()
    }

    pub fn into_parts(self) -> (RemnetConfig, ModelWeights) {
        (self.config, self.weights)
    }

    fn used<'a>(&'a self, trace_used: &'a [Option<Tensor>], index: usize) -> &'a Tensor {
        trace_used[index]
            .as_ref()
            .unwrap_or_else(|| self.weights.tensor(index))
    }

    /// Scalar range-error estimate in meters.
    pub fn forward(&self, cir: &[f64], mode: Mode, rng: &mut Rng) -> Result<f64> {
        Ok(self.forward_traced(cir, mode, rng, &mut NoHooks)?.output)
    }

    pub fn forward_traced(
        &self,
        cir: &[f64],
        mode: Mode,
        rng: &mut Rng,
        hooks: &mut dyn ForwardHooks,
    ) -> Result<Trace> {
        let cfg = &self.config;
        if cir.len() != cfg.input_len {
            return Err(Error::shape(
                "remnet forward",
                format!("input length {} != K {}", cir.len(), cfg.input_len),
            ));
        }
        let used: Vec<Option<Tensor>> = self
            .weights
            .iter()
            .enumerate()
            .map(|(i, e)| hooks.weight(i, &e.tensor))
            .collect();
        let w = |i: usize| used[i].as_ref().unwrap_or_else(|| self.weights.tensor(i));

        let mut input = Tensor::column(cir);
        hooks.activation(ActPoint::Input, input.data_mut());

        let mut x = nn::conv1d_forward(&input, w(param::STEM_W), w(param::STEM_B), 1)?;
        let relu_mask = relu_in_place(x.data_mut());
        let stem_mask = and_mask(relu_mask, hooks.activation(ActPoint::Stem, x.data_mut()));

        let mut modules = Vec::with_capacity(cfg.modules);
        for m in 0..cfg.modules {
            let p = |off| param::module(m, off);
            let module_input = x;

            let mut residual =
                nn::conv1d_forward(&module_input, w(p(param::RES_W)), w(p(param::RES_B)), 1)?;
            let relu_mask = relu_in_place(residual.data_mut());
            let residual_mask = and_mask(
                relu_mask,
                hooks.activation(ActPoint::Residual(m), residual.data_mut()),
            );

            let mut pooled = nn::global_avg_pool(&residual)?;
            let pool_mask = hooks.activation(ActPoint::Pool(m), &mut pooled);

            let mut excite = nn::dense_forward(
                &pooled,
                w(p(param::SE1_W)),
                w(p(param::SE1_B)),
                Activation::Linear,
            )?;
            let relu_mask = relu_in_place(&mut excite);
            let excite_mask = and_mask(
                relu_mask,
                hooks.activation(ActPoint::Excite(m), &mut excite),
            );

            let mut logit = nn::dense_forward(
                &excite,
                w(p(param::SE2_W)),
                w(p(param::SE2_B)),
                Activation::Linear,
            )?;
            let logit_mask = hooks.activation(ActPoint::Logit(m), &mut logit);

            let gate_raw: Vec<f64> = logit.iter().map(|&v| nn::sigmoid(v)).collect();
            let mut gate = gate_raw.clone();
            let gate_mask = hooks.activation(ActPoint::Gate(m), &mut gate);

            let mut scaled = nn::channel_scale(&residual, &gate)?;
            let scaled_mask = hooks.activation(ActPoint::Scaled(m), scaled.data_mut());

            let mut sum = module_input.clone();
            sum.add_assign(&scaled)?;
            let sum_mask = hooks.activation(ActPoint::Sum(m), sum.data_mut());

            let mut b1 = nn::conv1d_forward(&sum, w(p(param::BR1_W)), w(p(param::BR1_B)), 2)?;
            let relu_mask = relu_in_place(b1.data_mut());
            let branch1_mask = and_mask(
                relu_mask,
                hooks.activation(ActPoint::Branch1(m), b1.data_mut()),
            );

            let mut b2 = nn::conv1d_forward(&sum, w(p(param::BR2_W)), w(p(param::BR2_B)), 2)?;
            let relu_mask = relu_in_place(b2.data_mut());
            let branch2_mask = and_mask(
                relu_mask,
                hooks.activation(ActPoint::Branch2(m), b2.data_mut()),
            );

            let mut out = b1;
            out.add_assign(&b2)?;
            let out_mask = hooks.activation(ActPoint::Out(m), out.data_mut());
            out.check_finite("residual reduction module output")?;

            modules.push(ModuleTrace {
                input: module_input,
                residual,
                residual_mask,
                pooled,
                pool_mask,
                excite,
                excite_mask,
                logit_mask,
                gate_raw,
                gate,
                gate_mask,
                scaled_mask,
                sum,
                sum_mask,
                branch1_mask,
                branch2_mask,
                out_mask,
            });
            x = out;
        }

        let flat = x.into_data();
        let training = mode == Mode::Train;
        let (dropped, dropout_mask) =
            nn::dropout_forward(&Tensor::column(&flat), cfg.dropout_rate, rng, training)?;
        let dropped = dropped.into_data();
        let head = nn::dense_forward(
            &dropped,
            w(param::head_w(cfg.modules)),
            w(param::head_b(cfg.modules)),
            Activation::Linear,
        )?;
        let output = head[0];
        if !output.is_finite() {
            return Err(Error::NonFinite("remnet output".into()));
        }
        Ok(Trace {
            input,
            stem_mask,
            modules,
            flat,
            dropout_mask,
            dropped,
            used,
            output,
        })
    }

    /// Gradient of `grad_out · output` with respect to every parameter.
    /// Gradients reaching rewritten (fake-quantized) weights pass straight
    /// through to the underlying float weights.
    pub fn backward_traced(&self, trace: &Trace, grad_out: f64) -> Result<ModelWeights> {
        let cfg = &self.config;
        let mut grads = self.weights.zeros_like();
        let w = |i: usize| self.used(&trace.used, i);
        let hw = param::head_w(cfg.modules);
        let hb = param::head_b(cfg.modules);

        let (g_dropped, g_hw, g_hb) = nn::dense_backward(
            &[grad_out],
            &trace.dropped,
            w(hw),
            &[trace.output],
            Activation::Linear,
        )?;
        *grads.tensor_mut(hw) = g_hw;
        *grads.tensor_mut(hb) = g_hb;
        let g_flat: Vec<f64> = g_dropped
            .iter()
            .zip(&trace.dropout_mask)
            .map(|(g, m)| g * m)
            .collect();
        let mut g_x = Tensor::from_vec(&[cfg.final_len(), cfg.filters], g_flat)?;

        for m in (0..cfg.modules).rev() {
            let t = &trace.modules[m];
            let p = |off| param::module(m, off);
            apply_mask(g_x.data_mut(), &t.out_mask);

            let mut g_b1 = g_x.clone();
            apply_bool_mask(g_b1.data_mut(), &t.branch1_mask);
            let mut g_b2 = g_x;
            apply_bool_mask(g_b2.data_mut(), &t.branch2_mask);
            let (mut g_sum, gw, gb) = nn::conv1d_backward(&g_b1, &t.sum, w(p(param::BR1_W)), 2)?;
            *grads.tensor_mut(p(param::BR1_W)) = gw;
            *grads.tensor_mut(p(param::BR1_B)) = gb;
            let (g_sum2, gw, gb) = nn::conv1d_backward(&g_b2, &t.sum, w(p(param::BR2_W)), 2)?;
            *grads.tensor_mut(p(param::BR2_W)) = gw;
            *grads.tensor_mut(p(param::BR2_B)) = gb;
            g_sum.add_assign(&g_sum2)?;
            apply_mask(g_sum.data_mut(), &t.sum_mask);

            // identity branch
            let mut g_in = g_sum.clone();
            let mut g_scaled = g_sum;
            apply_mask(g_scaled.data_mut(), &t.scaled_mask);
            let (mut g_res, mut g_gate) =
                nn::channel_scale_backward(&g_scaled, &t.residual, &t.gate);

            apply_mask(&mut g_gate, &t.gate_mask);
            let mut g_logit: Vec<f64> = g_gate
                .iter()
                .zip(&t.gate_raw)
                .map(|(g, s)| g * s * (1.0 - s))
                .collect();
            apply_mask(&mut g_logit, &t.logit_mask);
            let logit_out = vec![0.0; g_logit.len()];
            let (mut g_excite, gw, gb) = nn::dense_backward(
                &g_logit,
                &t.excite,
                w(p(param::SE2_W)),
                &logit_out,
                Activation::Linear,
            )?;
            *grads.tensor_mut(p(param::SE2_W)) = gw;
            *grads.tensor_mut(p(param::SE2_B)) = gb;

            apply_bool_mask(&mut g_excite, &t.excite_mask);
            let excite_out = vec![0.0; g_excite.len()];
            let (mut g_pooled, gw, gb) = nn::dense_backward(
                &g_excite,
                &t.pooled,
                w(p(param::SE1_W)),
                &excite_out,
                Activation::Linear,
            )?;
            *grads.tensor_mut(p(param::SE1_W)) = gw;
            *grads.tensor_mut(p(param::SE1_B)) = gb;
            apply_mask(&mut g_pooled, &t.pool_mask);
            g_res.add_assign(&nn::global_avg_pool_backward(&g_pooled, t.residual.rows()))?;

            apply_bool_mask(g_res.data_mut(), &t.residual_mask);
            let (g_in_res, gw, gb) = nn::conv1d_backward(&g_res, &t.input, w(p(param::RES_W)), 1)?;
            *grads.tensor_mut(p(param::RES_W)) = gw;
            *grads.tensor_mut(p(param::RES_B)) = gb;
            g_in.add_assign(&g_in_res)?;
            g_x = g_in;
        }

        apply_bool_mask(g_x.data_mut(), &trace.stem_mask);
        let (_, gw, gb) = nn::conv1d_backward(&g_x, &trace.input, w(param::STEM_W), 1)?;
        *grads.tensor_mut(param::STEM_W) = gw;
        *grads.tensor_mut(param::STEM_B) = gb;
        if !grads.is_finite() {
            return Err(Error::NonFinite("remnet gradients".into()));
        }
        Ok(grads)
    }

    /// Mean absolute error of a batch and its gradient (train mode).
    pub fn backward(
        &self,
        batch: &[crate::model::Example],
        seed: u64,
    ) -> Result<(f64, ModelWeights)> {
        let refs: Vec<&crate::model::Example> = batch.iter().collect();
        crate::model::mae_batch_gradient(self, &refs, seed, 1)
    }
}

impl Regressor for Remnet {
    fn weights(&self) -> &ModelWeights {
        &self.weights
    }

    fn weights_mut(&mut self) -> &mut ModelWeights {
        &mut self.weights
    }

    fn input_len(&self) -> usize {
        self.config.input_len
    }

    fn predict(&self, input: &[f64]) -> Result<f64> {
        // inference never touches the RNG
        let mut unused = rng::seeded(0);
        self.forward(input, Mode::Infer, &mut unused)
    }

    fn loss_gradient(
        &self,
        input: &[f64],
        rng: &mut Rng,
        dloss: &dyn Fn(f64) -> f64,
    ) -> Result<(f64, ModelWeights)> {
        let trace = self.forward_traced(input, Mode::Train, rng, &mut NoHooks)?;
        let grads = self.backward_traced(&trace, dloss(trace.output))?;
        Ok((trace.output, grads))
    }
}
