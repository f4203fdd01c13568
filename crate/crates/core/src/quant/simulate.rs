//! Reference integer pipeline in f64 arithmetic.
//!
//! Every value is an integer held exactly in an f64; the fixed-point
//! multiply is evaluated by splitting `m0 = hi · 2^16 + lo` so that no
//! intermediate exceeds 2^53. Layouts follow the stored tensors directly
//! (`[k][cin][cout]`), sharing nothing with [`super::Int8Engine`] beyond
//! the model itself.

use super::{layer, req, QuantizedModel, Requantizer, ADD_SHIFT};
use crate::error::{Error, Result};
use crate::remnet::ActPoint;

const I32_MIN: f64 = -2147483648.0;
const I32_MAX: f64 = 2147483647.0;

fn sign(x: f64) -> f64 {
    if x < 0.0 {
        -1.0
    } else {
        1.0
    }
}

/// `round_half_away(x / 2^shift)`.
fn div_pot(x: f64, shift: u32) -> f64 {
    if shift == 0 {
        return x;
    }
    let d = 2f64.powi(shift as i32);
    sign(x) * ((x.abs() + d / 2.0) / d).floor()
}

fn requant(x: f64, r: &Requantizer) -> f64 {
    let shifted = (x * 2f64.powi(r.left_shift as i32)).clamp(I32_MIN, I32_MAX);
    let a = shifted.abs();
    let m0 = r.multiplier.m0 as f64;
    let hi = (m0 / 65536.0).floor();
    let lo = m0 - hi * 65536.0;
    // floor((a·m0 + 2^30) / 2^31) without leaving exact integer range
    let q1 = ((a * lo + 1073741824.0) / 65536.0).floor();
    let mag = ((a * hi + q1) / 32768.0).floor();
    let high = (sign(shifted) * mag).clamp(I32_MIN, I32_MAX);
    div_pot(high, r.multiplier.right_shift as u32)
}

fn to_q(acc: f64, r: &Requantizer, z_out: i32, lo: f64) -> f64 {
    (requant(acc, r) + z_out as f64).clamp(lo, 127.0)
}

fn relu_lo(z: i32) -> f64 {
    (z as f64).max(-128.0)
}

fn add(qa: f64, ra: &Requantizer, qb: f64, rb: &Requantizer, z_out: i32) -> f64 {
    let s = 2f64.powi(ADD_SHIFT as i32);
    let sum = (requant(qa * s, ra) + requant(qb * s, rb)).clamp(I32_MIN, I32_MAX);
    (div_pot(sum, ADD_SHIFT as u32) + z_out as f64).clamp(-128.0, 127.0)
}

/// `[len][cin]` activations → `[ceil(len/stride)][cout]` int32 accumulators.
fn conv_acc(
    q: &QuantizedModel,
    l: usize,
    x: &[f64],
    len: usize,
    z_in: i32,
    stride: usize,
) -> (Vec<f64>, usize) {
    let wt = &q.weights[l];
    let (k, cin, cout) = (wt.shape[0], wt.shape[1], wt.shape[2]);
    let out_len = len.div_ceil(stride);
    let mut out = vec![0.0; out_len * cout];
    for t in 0..out_len {
        for o in 0..cout {
            let mut acc = q.biases[l].data[o] as f64;
            for j in 0..k {
                let s = (stride * t + j) as isize - (k / 2) as isize;
                if s < 0 || s as usize >= len {
                    continue;
                }
                for c in 0..cin {
                    let xv = x[s as usize * cin + c] - z_in as f64;
                    acc += xv * wt.data[(j * cin + c) * cout + o] as f64;
                }
            }
            out[t * cout + o] = acc;
        }
    }
    (out, out_len)
}

fn dense_acc(q: &QuantizedModel, l: usize, x: &[f64], z_in: i32) -> Vec<f64> {
    let wt = &q.weights[l];
    let (n, m) = (wt.shape[0], wt.shape[1]);
    (0..m)
        .map(|o| {
            let mut acc = q.biases[l].data[o] as f64;
            for (i, &xv) in x[..n].iter().enumerate() {
                acc += (xv - z_in as f64) * wt.data[i * m + o] as f64;
            }
            acc
        })
        .collect()
}

/// The head accumulator computed by the reference pipeline.
pub fn simulate_forward(q: &QuantizedModel, input: &[i8]) -> Result<i64> {
    let cfg = q.config;
    if input.len() != cfg.input_len {
        return Err(Error::shape(
            "simulate",
            format!("input length {} != K {}", input.len(), cfg.input_len),
        ));
    }
    let f = cfg.filters;
    let z = |p: ActPoint| q.act(p).zero_point;
    let x0: Vec<f64> = input.iter().map(|&v| v as f64).collect();
    let (acc, mut len) = conv_acc(q, 0, &x0, cfg.input_len, z(ActPoint::Input), 1);
    let mut x: Vec<f64> = acc
        .iter()
        .map(|&a| {
            to_q(
                a,
                &q.requantizers[0],
                z(ActPoint::Stem),
                relu_lo(z(ActPoint::Stem)),
            )
        })
        .collect();
    let mut x_point = ActPoint::Stem;

    for m in 0..cfg.modules {
        let r = |off| &q.requantizers[req::module(m, off)];
        let (acc, _) = conv_acc(q, layer::module(m, layer::RES), &x, len, z(x_point), 1);
        let zr = z(ActPoint::Residual(m));
        let res: Vec<f64> = acc
            .iter()
            .map(|&a| to_q(a, r(req::RES), zr, relu_lo(zr)))
            .collect();

        let pooled: Vec<f64> = (0..f)
            .map(|c| {
                let s: f64 = (0..len).map(|t| res[t * f + c] - zr as f64).sum();
                to_q(s, r(req::POOL), z(ActPoint::Pool(m)), -128.0)
            })
            .collect();
        let ze = z(ActPoint::Excite(m));
        let excite: Vec<f64> = dense_acc(
            q,
            layer::module(m, layer::SE1),
            &pooled,
            z(ActPoint::Pool(m)),
        )
        .iter()
        .map(|&a| to_q(a, r(req::SE1), ze, relu_lo(ze)))
        .collect();
        let gate: Vec<f64> = dense_acc(q, layer::module(m, layer::SE2), &excite, ze)
            .iter()
            .map(|&a| {
                let logit = to_q(a, r(req::SE2), z(ActPoint::Logit(m)), -128.0);
                q.gate_luts[m][(logit + 128.0) as usize] as f64 - z(ActPoint::Gate(m)) as f64
            })
            .collect();

        let zs = z(ActPoint::Scaled(m));
        let mut sum = vec![0.0; len * f];
        for t in 0..len {
            for c in 0..f {
                let scaled = to_q(
                    (res[t * f + c] - zr as f64) * gate[c],
                    r(req::SCALE),
                    zs,
                    -128.0,
                );
                sum[t * f + c] = add(
                    x[t * f + c] - z(x_point) as f64,
                    r(req::SUM_IN),
                    scaled - zs as f64,
                    r(req::SUM_SCALED),
                    z(ActPoint::Sum(m)),
                );
            }
        }

        let zsum = z(ActPoint::Sum(m));
        let (a1, out_len) = conv_acc(q, layer::module(m, layer::BR1), &sum, len, zsum, 2);
        let (a2, _) = conv_acc(q, layer::module(m, layer::BR2), &sum, len, zsum, 2);
        let (z1, z2) = (z(ActPoint::Branch1(m)), z(ActPoint::Branch2(m)));
        x = a1
            .iter()
            .zip(&a2)
            .map(|(&p, &s)| {
                let b1 = to_q(p, r(req::BR1), z1, relu_lo(z1));
                let b2 = to_q(s, r(req::BR2), z2, relu_lo(z2));
                add(
                    b1 - z1 as f64,
                    r(req::OUT_BR1),
                    b2 - z2 as f64,
                    r(req::OUT_BR2),
                    z(ActPoint::Out(m)),
                )
            })
            .collect();
        len = out_len;
        x_point = ActPoint::Out(m);
    }
    let acc = dense_acc(q, layer::head(cfg.modules), &x, z(x_point))[0];
    Ok(acc as i64)
}
