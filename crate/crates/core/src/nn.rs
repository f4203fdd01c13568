//! Layer kernels: forward and backward passes for the handful of layer
//! kinds REMNet is built from, plus finite-difference gradient checking.
//!
//! All kernels are pure functions of their arguments (dropout takes the
//! caller's RNG), so they can run concurrently on disjoint tensors.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{self, Rng, RngCore};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Activation {
    Linear,
    Relu,
    Sigmoid,
}

impl Activation {
    #[inline]
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Linear => x,
            Activation::Relu => x.max(0.0),
            Activation::Sigmoid => sigmoid(x),
        }
    }

    /// Derivative expressed through the activation's output.
    #[inline]
    pub fn derivative_from_output(self, y: f64) -> f64 {
        match self {
            Activation::Linear => 1.0,
            Activation::Relu => {
                if y > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Sigmoid => y * (1.0 - y),
        }
    }
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Output length of a `same`-padded convolution.
pub fn conv_out_len(len: usize, stride: usize) -> usize {
    len.div_ceil(stride)
}

fn check_conv(
    input: &Tensor,
    weights: &Tensor,
    bias: &Tensor,
    stride: usize,
) -> Result<(usize, usize, usize, usize)> {
    if input.shape().len() != 2 {
        return Err(Error::shape(
            "conv1d",
            format!("input must be [L, Cin], got {:?}", input.shape()),
        ));
    }
    if weights.shape().len() != 3 {
        return Err(Error::shape(
            "conv1d",
            format!("weights must be [k, Cin, Cout], got {:?}", weights.shape()),
        ));
    }
    let (k, cin, cout) = (weights.shape()[0], weights.shape()[1], weights.shape()[2]);
    if input.shape()[1] != cin {
        return Err(Error::shape(
            "conv1d",
            format!(
                "input channels {} != kernel in_channels {cin}",
                input.shape()[1]
            ),
        ));
    }
    if bias.shape() != [cout] {
        return Err(Error::shape(
            "conv1d",
            format!("bias {:?} != [{cout}]", bias.shape()),
        ));
    }
    if k % 2 == 0 {
        return Err(Error::shape(
            "conv1d",
            format!("kernel size {k} must be odd"),
        ));
    }
    if stride == 0 {
        return Err(Error::shape("conv1d", "stride 0"));
    }
    Ok((input.shape()[0], k, cin, cout))
}

/// `out[t, o] = bias[o] + Σ_{j,c} input[s·t + j − ⌊k/2⌋, c] · w[j, c, o]`,
/// out-of-range input positions read as zero.
pub fn conv1d_forward(
    input: &Tensor,
    weights: &Tensor,
    bias: &Tensor,
    stride: usize,
) -> Result<Tensor> {
    let (len, k, cin, cout) = check_conv(input, weights, bias, stride)?;
    let out_len = conv_out_len(len, stride);
    let half = (k / 2) as isize;
    let x = input.data();
    let w = weights.data();
    let mut out = Vec::with_capacity(out_len * cout);
    for t in 0..out_len {
        let row_start = out.len();
        out.extend_from_slice(bias.data());
        let acc = &mut out[row_start..];
        for j in 0..k {
            let pos = (stride * t) as isize + j as isize - half;
            if pos < 0 || pos >= len as isize {
                continue;
            }
            let xrow = &x[pos as usize * cin..(pos as usize + 1) * cin];
            for (c, &xv) in xrow.iter().enumerate() {
                let wrow = &w[(j * cin + c) * cout..(j * cin + c + 1) * cout];
                for (a, &wv) in acc.iter_mut().zip(wrow) {
                    *a += xv * wv;
                }
            }
        }
    }
    Tensor::from_vec(&[out_len, cout], out)
}

/// Gradients of [`conv1d_forward`] with respect to input, kernel and bias.
pub fn conv1d_backward(
    grad_out: &Tensor,
    input: &Tensor,
    weights: &Tensor,
    stride: usize,
) -> Result<(Tensor, Tensor, Tensor)> {
    let cout = weights.shape().get(2).copied().unwrap_or(0);
    let (len, k, cin, cout) = check_conv(input, weights, &Tensor::zeros(&[cout]), stride)?;
    let out_len = conv_out_len(len, stride);
    if grad_out.shape() != [out_len, cout] {
        return Err(Error::shape(
            "conv1d_backward",
            format!("grad_out {:?} != [{out_len}, {cout}]", grad_out.shape()),
        ));
    }
    let half = (k / 2) as isize;
    let x = input.data();
    let w = weights.data();
    let g = grad_out.data();
    let mut gx = vec![0.0; len * cin];
    let mut gw = vec![0.0; k * cin * cout];
    let mut gb = vec![0.0; cout];
    for t in 0..out_len {
        let grow = &g[t * cout..(t + 1) * cout];
        for (b, &gv) in gb.iter_mut().zip(grow) {
            *b += gv;
        }
        for j in 0..k {
            let pos = (stride * t) as isize + j as isize - half;
            if pos < 0 || pos >= len as isize {
                continue;
            }
            let p = pos as usize;
            for c in 0..cin {
                let base = (j * cin + c) * cout;
                let xv = x[p * cin + c];
                let mut acc = 0.0;
                for o in 0..cout {
                    gw[base + o] += xv * grow[o];
                    acc += w[base + o] * grow[o];
                }
                gx[p * cin + c] += acc;
            }
        }
    }
    Ok((
        Tensor::from_vec(&[len, cin], gx)?,
        Tensor::from_vec(&[k, cin, cout], gw)?,
        Tensor::from_vec(&[cout], gb)?,
    ))
}

fn check_dense(input: &[f64], weights: &Tensor, bias: &Tensor) -> Result<(usize, usize)> {
    if weights.shape().len() != 2 {
        return Err(Error::shape(
            "dense",
            format!("weights must be [n, m], got {:?}", weights.shape()),
        ));
    }
    let (n, m) = (weights.shape()[0], weights.shape()[1]);
    if input.len() != n {
        return Err(Error::shape(
            "dense",
            format!("input length {} != weight rows {n}", input.len()),
        ));
    }
    if bias.shape() != [m] {
        return Err(Error::shape(
            "dense",
            format!("bias {:?} != [{m}]", bias.shape()),
        ));
    }
    Ok((n, m))
}

pub fn dense_forward(
    input: &[f64],
    weights: &Tensor,
    bias: &Tensor,
    activation: Activation,
) -> Result<Vec<f64>> {
    let (n, m) = check_dense(input, weights, bias)?;
    let w = weights.data();
    let mut out = bias.data().to_vec();
    for i in 0..n {
        let xv = input[i];
        for (o, &wv) in out.iter_mut().zip(&w[i * m..(i + 1) * m]) {
            *o += xv * wv;
        }
    }
    for o in &mut out {
        *o = activation.apply(*o);
    }
    Ok(out)
}

/// Backward through a dense layer; `output` is the post-activation value
/// produced by [`dense_forward`].
pub fn dense_backward(
    grad_out: &[f64],
    input: &[f64],
    weights: &Tensor,
    output: &[f64],
    activation: Activation,
) -> Result<(Vec<f64>, Tensor, Tensor)> {
    let m = weights.shape().get(1).copied().unwrap_or(0);
    let (n, m) = check_dense(input, weights, &Tensor::zeros(&[m]))?;
    if grad_out.len() != m || output.len() != m {
        return Err(Error::shape(
            "dense_backward",
            format!(
                "grad_out {} / output {} != {m}",
                grad_out.len(),
                output.len()
            ),
        ));
    }
    let delta: Vec<f64> = grad_out
        .iter()
        .zip(output)
        .map(|(g, &y)| g * activation.derivative_from_output(y))
        .collect();
    let w = weights.data();
    let mut gx = vec![0.0; n];
    let mut gw = vec![0.0; n * m];
    for i in 0..n {
        let wrow = &w[i * m..(i + 1) * m];
        gx[i] = wrow.iter().zip(&delta).map(|(a, b)| a * b).sum();
        for (gwv, &d) in gw[i * m..(i + 1) * m].iter_mut().zip(&delta) {
            *gwv = input[i] * d;
        }
    }
    Ok((
        gx,
        Tensor::from_vec(&[n, m], gw)?,
        Tensor::from_vec(&[m], delta)?,
    ))
}

pub fn relu_forward(input: &Tensor) -> Tensor {
    let mut out = input.clone();
    out.data_mut().iter_mut().for_each(|x| *x = x.max(0.0));
    out
}

/// ReLU backward from the forward output.
pub fn relu_backward(grad_out: &Tensor, output: &Tensor) -> Tensor {
    let mut g = grad_out.clone();
    for (gv, &y) in g.data_mut().iter_mut().zip(output.data()) {
        if y <= 0.0 {
            *gv = 0.0;
        }
    }
    g
}

pub fn sigmoid_forward(input: &Tensor) -> Tensor {
    let mut out = input.clone();
    out.data_mut().iter_mut().for_each(|x| *x = sigmoid(*x));
    out
}

pub fn sigmoid_backward(grad_out: &Tensor, output: &Tensor) -> Tensor {
    let mut g = grad_out.clone();
    for (gv, &y) in g.data_mut().iter_mut().zip(output.data()) {
        *gv *= y * (1.0 - y);
    }
    g
}

/// Mean over the temporal axis of a `[L, C]` map.
pub fn global_avg_pool(input: &Tensor) -> Result<Vec<f64>> {
    if input.shape().len() != 2 || input.rows() == 0 {
        return Err(Error::shape(
            "global_avg_pool",
            format!("input {:?}", input.shape()),
        ));
    }
    let (len, ch) = (input.rows(), input.cols());
    let mut out = vec![0.0; ch];
    for row in input.data().chunks_exact(ch) {
        for (o, &v) in out.iter_mut().zip(row) {
            *o += v;
        }
    }
    let inv = 1.0 / len as f64;
    out.iter_mut().for_each(|o| *o *= inv);
    Ok(out)
}

pub fn global_avg_pool_backward(grad_out: &[f64], len: usize) -> Tensor {
    let ch = grad_out.len();
    let inv = 1.0 / len as f64;
    let row: Vec<f64> = grad_out.iter().map(|g| g * inv).collect();
    let mut data = Vec::with_capacity(len * ch);
    for _ in 0..len {
        data.extend_from_slice(&row);
    }
    Tensor::from_vec(&[len, ch], data).expect("shape by construction")
}

/// Channel-wise rescale `out[t, c] = input[t, c] · scale[c]`.
pub fn channel_scale(input: &Tensor, scale: &[f64]) -> Result<Tensor> {
    if input.cols() != scale.len() {
        return Err(Error::shape(
            "channel_scale",
            format!("{} channels vs {} scales", input.cols(), scale.len()),
        ));
    }
    let mut out = input.clone();
    for row in out.data_mut().chunks_exact_mut(scale.len()) {
        for (v, s) in row.iter_mut().zip(scale) {
            *v *= s;
        }
    }
    Ok(out)
}

/// Returns `(grad_input, grad_scale)`.
pub fn channel_scale_backward(
    grad_out: &Tensor,
    input: &Tensor,
    scale: &[f64],
) -> (Tensor, Vec<f64>) {
    let ch = scale.len();
    let mut gx = grad_out.clone();
    let mut gs = vec![0.0; ch];
    for (grow, xrow) in gx
        .data_mut()
        .chunks_exact_mut(ch)
        .zip(input.data().chunks_exact(ch))
    {
        for c in 0..ch {
            gs[c] += grow[c] * xrow[c];
            grow[c] *= scale[c];
        }
    }
    (gx, gs)
}

/// Inverted dropout. Returns the output and the keep-mask scale per
/// element (0 or `1/(1-rate)`); in inference mode the input is returned
/// unchanged and the mask is all ones.
pub fn dropout_forward(
    input: &Tensor,
    rate: f64,
    rng: &mut Rng,
    training: bool,
) -> Result<(Tensor, Vec<f64>)> {
    if !(0.0..1.0).contains(&rate) {
        return Err(Error::InvalidArgument(format!(
            "dropout rate {rate} outside [0, 1)"
        )));
    }
    if !training || rate == 0.0 {
        return Ok((input.clone(), vec![1.0; input.len()]));
    }
    let keep = 1.0 / (1.0 - rate);
    let mask: Vec<f64> = (0..input.len())
        .map(|_| if rng::uniform(rng) < rate { 0.0 } else { keep })
        .collect();
    let mut out = input.clone();
    for (v, m) in out.data_mut().iter_mut().zip(&mask) {
        *v *= m;
    }
    Ok((out, mask))
}

pub fn dropout_backward(grad_out: &Tensor, mask: &[f64]) -> Tensor {
    let mut g = grad_out.clone();
    for (v, m) in g.data_mut().iter_mut().zip(mask) {
        *v *= m;
    }
    g
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LayerKind {
    Conv1d,
    Dense,
    Gap,
    Relu,
    Sigmoid,
    Dropout,
    Add,
    Flatten,
}

/// Static description of one layer, used by [`gradient_check`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerSpec {
    pub kind: LayerKind,
    pub kernel: usize,
    pub stride: usize,
    pub in_channels: usize,
    pub out_channels: usize,
    pub activation: Activation,
    pub dropout_rate: f64,
}

impl LayerSpec {
    fn base(kind: LayerKind) -> Self {
        LayerSpec {
            kind,
            kernel: 1,
            stride: 1,
            in_channels: 1,
            out_channels: 1,
            activation: Activation::Linear,
            dropout_rate: 0.0,
        }
    }

    pub fn conv1d(kernel: usize, stride: usize, in_channels: usize, out_channels: usize) -> Self {
        LayerSpec {
            kernel,
            stride,
            in_channels,
            out_channels,
            ..Self::base(LayerKind::Conv1d)
        }
    }

    pub fn dense(inputs: usize, outputs: usize, activation: Activation) -> Self {
        LayerSpec {
            in_channels: inputs,
            out_channels: outputs,
            activation,
            ..Self::base(LayerKind::Dense)
        }
    }

    pub fn dropout(rate: f64) -> Self {
        LayerSpec {
            dropout_rate: rate,
            ..Self::base(LayerKind::Dropout)
        }
    }

    pub fn simple(kind: LayerKind) -> Self {
        Self::base(kind)
    }

    /// Output length for an input of `len` time steps.
    pub fn output_len(&self, len: usize) -> usize {
        match self.kind {
            LayerKind::Conv1d => conv_out_len(len, self.stride),
            _ => len,
        }
    }
}

fn random_tensor(shape: &[usize], rng: &mut Rng) -> Tensor {
    let n: usize = shape.iter().product();
    let data = (0..n).map(|_| rng::uniform_range(rng, -1.0, 1.0)).collect();
    Tensor::from_vec(shape, data).expect("shape by construction")
}

struct Probe {
    params: Vec<Tensor>,
    extra_input: Option<Tensor>,
    dropout_seed: u64,
}

impl Probe {
    fn forward(&self, layer: &LayerSpec, input: &Tensor) -> Result<Tensor> {
        match layer.kind {
            LayerKind::Conv1d => {
                conv1d_forward(input, &self.params[0], &self.params[1], layer.stride)
            }
            LayerKind::Dense => {
                let out = dense_forward(
                    input.data(),
                    &self.params[0],
                    &self.params[1],
                    layer.activation,
                )?;
                Ok(Tensor::column(&out))
            }
            LayerKind::Gap => Ok(Tensor::column(&global_avg_pool(input)?)),
            LayerKind::Relu => Ok(relu_forward(input)),
            LayerKind::Sigmoid => Ok(sigmoid_forward(input)),
            LayerKind::Dropout => {
                let mut rng = rng::seeded(self.dropout_seed);
                Ok(dropout_forward(input, layer.dropout_rate, &mut rng, true)?.0)
            }
            LayerKind::Add => {
                let mut out = input.clone();
                out.add_assign(
                    self.extra_input
                        .as_ref()
                        .expect("add probe has a second operand"),
                )?;
                Ok(out)
            }
            LayerKind::Flatten => input.clone().reshape(&[input.len()]),
        }
    }

    /// Analytic gradients: input first, then each parameter.
    fn backward(
        &self,
        layer: &LayerSpec,
        input: &Tensor,
        output: &Tensor,
        grad_out: &Tensor,
    ) -> Result<Vec<Tensor>> {
        Ok(match layer.kind {
            LayerKind::Conv1d => {
                let (gx, gw, gb) = conv1d_backward(grad_out, input, &self.params[0], layer.stride)?;
                vec![gx, gw, gb]
            }
            LayerKind::Dense => {
                let (gx, gw, gb) = dense_backward(
                    grad_out.data(),
                    input.data(),
                    &self.params[0],
                    output.data(),
                    layer.activation,
                )?;
                vec![Tensor::from_vec(input.shape(), gx)?, gw, gb]
            }
            LayerKind::Gap => vec![global_avg_pool_backward(grad_out.data(), input.rows())],
            LayerKind::Relu => vec![relu_backward(grad_out, output)],
            LayerKind::Sigmoid => vec![sigmoid_backward(grad_out, output)],
            LayerKind::Dropout => {
                let mut rng = rng::seeded(self.dropout_seed);
                let (_, mask) = dropout_forward(input, layer.dropout_rate, &mut rng, true)?;
                vec![dropout_backward(grad_out, &mask)]
            }
            LayerKind::Add => vec![grad_out.clone()],
            LayerKind::Flatten => vec![grad_out.clone().reshape(input.shape())?],
        })
    }
}

/// Relative error used by the gradient checks:
/// `|a − n| / max(|a|, |n|, 1e-3)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-3)
}

/// Compares analytic gradients against central finite differences for
/// every input element and every parameter of a randomly initialised
/// instance of `layer`, under the scalar loss `Σ out ⊙ R` with a random
/// projection `R`. Returns the largest relative error.
pub fn gradient_check(
    layer: &LayerSpec,
    input: &Tensor,
    rng: &mut Rng,
    epsilon: f64,
) -> Result<f64> {
    input.check_finite("gradient_check input")?;
    let params = match layer.kind {
        LayerKind::Conv1d => vec![
            random_tensor(&[layer.kernel, layer.in_channels, layer.out_channels], rng),
            random_tensor(&[layer.out_channels], rng),
        ],
        LayerKind::Dense => vec![
            random_tensor(&[layer.in_channels, layer.out_channels], rng),
            random_tensor(&[layer.out_channels], rng),
        ],
        _ => Vec::new(),
    };
    let extra_input = (layer.kind == LayerKind::Add).then(|| random_tensor(input.shape(), rng));
    let probe = Probe {
        params,
        extra_input,
        dropout_seed: rng.next_u64(),
    };

    let output = probe.forward(layer, input)?;
    output.check_finite("gradient_check output")?;
    let projection = random_tensor(output.shape(), rng);
    let loss = |out: &Tensor| -> f64 {
        out.data()
            .iter()
            .zip(projection.data())
            .map(|(a, b)| a * b)
            .sum()
    };

    let analytic = probe.backward(layer, input, &output, &projection)?;
    for g in &analytic {
        g.check_finite("gradient_check analytic gradient")?;
    }

    let mut worst: f64 = 0.0;
    // input
    let mut x = input.clone();
    for i in 0..x.len() {
        let orig = x.data()[i];
        x.data_mut()[i] = orig + epsilon;
        let up = loss(&probe.forward(layer, &x)?);
        x.data_mut()[i] = orig - epsilon;
        let down = loss(&probe.forward(layer, &x)?);
        x.data_mut()[i] = orig;
        let numeric = (up - down) / (2.0 * epsilon);
        if !numeric.is_finite() {
            return Err(Error::NonFinite("finite-difference gradient".into()));
        }
        worst = worst.max(relative_error(analytic[0].data()[i], numeric));
    }
    // parameters
    let mut probe = probe;
    for p in 0..probe.params.len() {
        for i in 0..probe.params[p].len() {
            let orig = probe.params[p].data()[i];
            probe.params[p].data_mut()[i] = orig + epsilon;
            let up = loss(&probe.forward(layer, input)?);
            probe.params[p].data_mut()[i] = orig - epsilon;
            let down = loss(&probe.forward(layer, input)?);
            probe.params[p].data_mut()[i] = orig;
            let numeric = (up - down) / (2.0 * epsilon);
            worst = worst.max(relative_error(analytic[p + 1].data()[i], numeric));
        }
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn rand_map(len: usize, ch: usize, seed: u64) -> Tensor {
        random_tensor(&[len, ch], &mut rng::seeded(seed))
    }

    #[test]
    fn conv_same_padding_shapes() {
        let x = rand_map(128, 1, 1);
        let w = Tensor::zeros(&[7, 1, 16]);
        let b = Tensor::zeros(&[16]);
        assert_eq!(conv1d_forward(&x, &w, &b, 1).unwrap().shape(), &[128, 16]);

        let x = rand_map(128, 16, 2);
        let w = Tensor::zeros(&[3, 16, 16]);
        assert_eq!(conv1d_forward(&x, &w, &b, 2).unwrap().shape(), &[64, 16]);
    }

    #[test]
    fn conv_zero_input_gives_bias() {
        let x = Tensor::zeros(&[20, 3]);
        let w = random_tensor(&[5, 3, 4], &mut rng::seeded(3));
        let b = Tensor::from_vec(&[4], vec![0.5, -1.0, 2.0, 0.0]).unwrap();
        let out = conv1d_forward(&x, &w, &b, 1).unwrap();
        for row in out.data().chunks(4) {
            assert_eq!(row, b.data());
        }
    }

    #[test]
    fn conv_matches_definition() {
        let x = rand_map(9, 2, 4);
        let w = random_tensor(&[3, 2, 3], &mut rng::seeded(5));
        let b = random_tensor(&[3], &mut rng::seeded(6));
        let out = conv1d_forward(&x, &w, &b, 2).unwrap();
        assert_eq!(out.shape(), &[5, 3]);
        for t in 0..5 {
            for o in 0..3 {
                let mut want = b.data()[o];
                for j in 0..3 {
                    let pos = 2 * t as isize + j as isize - 1;
                    if (0..9).contains(&pos) {
                        for c in 0..2 {
                            want += x.at(pos as usize, c) * w.data()[(j * 2 + c) * 3 + o];
                        }
                    }
                }
                assert!((out.at(t, o) - want).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn conv_shape_errors_name_dims() {
        let x = rand_map(10, 2, 1);
        let w = Tensor::zeros(&[3, 4, 5]);
        let err = conv1d_forward(&x, &w, &Tensor::zeros(&[5]), 1)
            .unwrap_err()
            .to_string();
        assert!(
            err.contains("input channels 2") && err.contains("in_channels 4"),
            "{err}"
        );
    }

    #[test]
    fn conv_backward_scalar_chain_rule() {
        let x = Tensor::from_vec(&[1, 1], vec![1.7]).unwrap();
        let w = Tensor::from_vec(&[1, 1, 1], vec![-0.3]).unwrap();
        let g = Tensor::from_vec(&[1, 1], vec![2.5]).unwrap();
        let (gx, gw, gb) = conv1d_backward(&g, &x, &w, 1).unwrap();
        assert!((gw.data()[0] - 2.5 * 1.7).abs() < 1e-15);
        assert!((gx.data()[0] - 2.5 * -0.3).abs() < 1e-15);
        assert_eq!(gb.data()[0], 2.5);
    }

    #[test]
    fn conv_backward_zero_grad() {
        let x = rand_map(16, 2, 8);
        let w = random_tensor(&[3, 2, 4], &mut rng::seeded(9));
        let g = Tensor::zeros(&[16, 4]);
        let (gx, gw, gb) = conv1d_backward(&g, &x, &w, 1).unwrap();
        assert!(gx
            .data()
            .iter()
            .chain(gw.data())
            .chain(gb.data())
            .all(|&v| v == 0.0));
    }

    #[test]
    fn conv_gradient_check_16x2_k3() {
        let x = rand_map(16, 2, 11);
        let err = gradient_check(
            &LayerSpec::conv1d(3, 1, 2, 4),
            &x,
            &mut rng::seeded(12),
            1e-6,
        )
        .unwrap();
        assert!(err <= 1e-5, "{err}");
    }

    #[test]
    fn dense_trivial_cases() {
        let w = Tensor::zeros(&[3, 2]);
        let b = Tensor::zeros(&[2]);
        assert_eq!(
            dense_forward(&[1.0, -2.0, 3.0], &w, &b, Activation::Sigmoid).unwrap(),
            vec![0.5, 0.5]
        );

        let mut eye = Tensor::zeros(&[3, 3]);
        for i in 0..3 {
            eye.data_mut()[i * 3 + i] = 1.0;
        }
        let x = [0.3, -4.0, 9.5];
        assert_eq!(
            dense_forward(&x, &eye, &Tensor::zeros(&[3]), Activation::Linear).unwrap(),
            x.to_vec()
        );
    }

    #[test]
    fn dense_gradient_check_8_to_4() {
        let x = Tensor::column(&random_tensor(&[8], &mut rng::seeded(13)).into_data());
        for act in [Activation::Linear, Activation::Relu, Activation::Sigmoid] {
            let err = gradient_check(&LayerSpec::dense(8, 4, act), &x, &mut rng::seeded(14), 1e-6)
                .unwrap();
            assert!(err <= 1e-5, "{act:?}: {err}");
        }
    }

    #[test]
    fn sigmoid_strictly_inside_unit_interval() {
        for x in [-700.0, -30.0, -1.0, 0.0, 1.0, 30.0] {
            let y = sigmoid(x);
            assert!(y > 0.0 && y < 1.0, "{x} -> {y}");
        }
    }

    #[test]
    fn gap_examples() {
        let t = Tensor::filled(&[7, 3], 2.5);
        assert_eq!(global_avg_pool(&t).unwrap(), vec![2.5; 3]);
        let t = Tensor::from_vec(&[2, 1], vec![0.0, 1.0]).unwrap();
        assert_eq!(global_avg_pool(&t).unwrap(), vec![0.5]);
        let g = global_avg_pool_backward(&[4.0, 8.0], 4);
        assert_eq!(g.data(), &[1.0, 2.0, 1.0, 2.0, 1.0, 2.0, 1.0, 2.0]);
    }

    #[test]
    fn dropout_identity_cases() {
        let x = rand_map(50, 2, 1);
        let mut r = rng::seeded(0);
        assert_eq!(dropout_forward(&x, 0.0, &mut r, true).unwrap().0, x);
        assert_eq!(dropout_forward(&x, 0.7, &mut r, false).unwrap().0, x);
        assert!(dropout_forward(&x, 1.0, &mut r, true).is_err());
    }

    #[test]
    fn dropout_preserves_mean() {
        let x = Tensor::filled(&[100_000, 1], 1.0);
        let (out, _) = dropout_forward(&x, 0.5, &mut rng::seeded(2024), true).unwrap();
        let mean = out.data().iter().sum::<f64>() / out.len() as f64;
        assert!((0.98..=1.02).contains(&mean), "{mean}");
    }

    #[test]
    fn simple_layer_gradient_checks() {
        for (i, kind) in [
            LayerKind::Gap,
            LayerKind::Relu,
            LayerKind::Sigmoid,
            LayerKind::Add,
            LayerKind::Flatten,
        ]
        .into_iter()
        .enumerate()
        {
            let x = rand_map(12, 3, 100 + i as u64);
            let err = gradient_check(
                &LayerSpec::simple(kind),
                &x,
                &mut rng::seeded(i as u64),
                1e-6,
            )
            .unwrap();
            assert!(err <= 1e-5, "{kind:?}: {err}");
        }
        let x = rand_map(12, 3, 7);
        let err = gradient_check(&LayerSpec::dropout(0.3), &x, &mut rng::seeded(1), 1e-6).unwrap();
        assert!(err <= 1e-5);
    }

    #[test]
    fn gradient_check_rejects_non_finite_input() {
        let mut x = rand_map(4, 1, 1);
        x.data_mut()[0] = f64::INFINITY;
        assert!(gradient_check(
            &LayerSpec::simple(LayerKind::Relu),
            &x,
            &mut rng::seeded(0),
            1e-6
        )
        .is_err());
    }

    #[test]
    fn channel_scale_roundtrip() {
        let x = rand_map(5, 3, 1);
        let s = [0.5, 1.0, 2.0];
        let out = channel_scale(&x, &s).unwrap();
        assert_eq!(out.at(2, 2), x.at(2, 2) * 2.0);
        let (gx, gs) = channel_scale_backward(&Tensor::filled(&[5, 3], 1.0), &x, &s);
        assert_eq!(gx.at(0, 0), 0.5);
        let col0: f64 = (0..5).map(|t| x.at(t, 0)).sum();
        assert!((gs[0] - col0).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn stride2_output_length(len in 1usize..=256) {
            let x = Tensor::zeros(&[len, 1]);
            let w = Tensor::zeros(&[3, 1, 1]);
            let out = conv1d_forward(&x, &w, &Tensor::zeros(&[1]), 2).unwrap();
            prop_assert_eq!(out.rows(), len.div_ceil(2));
            prop_assert_eq!(LayerSpec::conv1d(3, 2, 1, 1).output_len(len), len.div_ceil(2));
        }

        #[test]
        fn relu_idempotent(values in proptest::collection::vec(-10.0f64..10.0, 1..64)) {
            let t = Tensor::column(&values);
            let once = relu_forward(&t);
            prop_assert_eq!(relu_forward(&once), once);
        }

        #[test]
        fn forward_is_pure(seed in 0u64..1000) {
            let x = rand_map(10, 2, seed);
            let w = random_tensor(&[3, 2, 2], &mut rng::seeded(seed + 1));
            let b = random_tensor(&[2], &mut rng::seeded(seed + 2));
            prop_assert_eq!(conv1d_forward(&x, &w, &b, 1).unwrap(), conv1d_forward(&x, &w, &b, 1).unwrap());
            let (a, _) = dropout_forward(&x, 0.4, &mut rng::seeded(seed), true).unwrap();
            let (c, _) = dropout_forward(&x, 0.4, &mut rng::seeded(seed), true).unwrap();
            prop_assert_eq!(a, c);
        }
    }
}
