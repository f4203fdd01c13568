//! Allocation-light float32 inference for a trained [`Remnet`]; the
//! float baseline the int8 engine is benchmarked against.

use super::{param, Remnet};
use crate::error::{Error, Result};
use crate::model::Regressor;

#[derive(Debug, Clone)]
struct Conv {
    k: usize,
    cin: usize,
    cout: usize,
    stride: usize,
    /// `[k][cin][cout]`
    w: Vec<f32>,
    b: Vec<f32>,
}

impl Conv {
    fn run(&self, x: &[f32], len: usize, relu: bool) -> Vec<f32> {
        let out_len = len.div_ceil(self.stride);
        let half = self.k / 2;
        let mut out = Vec::with_capacity(out_len * self.cout);
        for t in 0..out_len {
            let start = out.len();
            out.extend_from_slice(&self.b);
            let acc = &mut out[start..];
            let center = self.stride * t;
            let j_lo = half.saturating_sub(center);
            let j_hi = self.k.min(len + half - center);
            for j in j_lo..j_hi {
                let pos = center + j - half;
                let xrow = &x[pos * self.cin..(pos + 1) * self.cin];
                let wblock = &self.w[j * self.cin * self.cout..(j + 1) * self.cin * self.cout];
                for (c, &xv) in xrow.iter().enumerate() {
                    for (a, &wv) in acc
                        .iter_mut()
                        .zip(&wblock[c * self.cout..(c + 1) * self.cout])
                    {
                        *a += xv * wv;
                    }
                }
            }
            if relu {
                acc.iter_mut().for_each(|v| *v = v.max(0.0));
            }
        }
        out
    }
}

#[derive(Debug, Clone)]
struct Dense {
    n: usize,
    m: usize,
    /// `[n][m]`
    w: Vec<f32>,
    b: Vec<f32>,
}

impl Dense {
    fn run(&self, x: &[f32]) -> Vec<f32> {
        let mut out = self.b.clone();
        for (&xv, row) in x[..self.n].iter().zip(self.w.chunks_exact(self.m)) {
            for (o, &wv) in out.iter_mut().zip(row) {
                *o += xv * wv;
            }
        }
        out
    }
}

#[derive(Debug, Clone)]
struct Module {
    res: Conv,
    se1: Dense,
    se2: Dense,
    br1: Conv,
    br2: Conv,
}

#[derive(Debug, Clone)]
pub struct Float32Remnet {
    input_len: usize,
    filters: usize,
    stem: Conv,
    modules: Vec<Module>,
    head: Dense,
}

fn f32s(values: &[f64]) -> Vec<f32> {
    values.iter().map(|&v| v as f32).collect()
}

impl Float32Remnet {
    pub fn new(model: &Remnet) -> Self {
        let cfg = model.config();
        let w = model.weights();
        let conv = |wi: usize, stride: usize| {
            let s = w.tensor(wi).shape();
            Conv {
                k: s[0],
                cin: s[1],
                cout: s[2],
                stride,
                w: f32s(w.tensor(wi).data()),
                b: f32s(w.tensor(wi + 1).data()),
            }
        };
        let dense = |wi: usize| {
            let s = w.tensor(wi).shape();
            Dense {
                n: s[0],
                m: s[1],
                w: f32s(w.tensor(wi).data()),
                b: f32s(w.tensor(wi + 1).data()),
            }
        };
        let modules = (0..cfg.modules)
            .map(|m| Module {
                res: conv(param::module(m, param::RES_W), 1),
                se1: dense(param::module(m, param::SE1_W)),
                se2: dense(param::module(m, param::SE2_W)),
                br1: conv(param::module(m, param::BR1_W), 2),
                br2: conv(param::module(m, param::BR2_W), 2),
            })
            .collect();
        Float32Remnet {
            input_len: cfg.input_len,
            filters: cfg.filters,
            stem: conv(param::STEM_W, 1),
            modules,
            head: dense(param::head_w(cfg.modules)),
        }
    }

    pub fn input_len(&self) -> usize {
        self.input_len
    }

    pub fn predict(&self, cir: &[f32]) -> Result<f32> {
        if cir.len() != self.input_len {
            return Err(Error::shape(
                "float32 forward",
                format!("input length {} != {}", cir.len(), self.input_len),
            ));
        }
        let f = self.filters;
        let mut len = self.input_len;
        let mut x = self.stem.run(cir, len, true);
        for m in &self.modules {
            let mut h = m.res.run(&x, len, true);
            let mut pooled = vec![0.0f32; f];
            for row in h.chunks_exact(f) {
                for (p, &v) in pooled.iter_mut().zip(row) {
                    *p += v;
                }
            }
            let inv = 1.0 / len as f32;
            pooled.iter_mut().for_each(|p| *p *= inv);
            let mut z = m.se1.run(&pooled);
            z.iter_mut().for_each(|v| *v = v.max(0.0));
            let gate: Vec<f32> = m
                .se2
                .run(&z)
                .iter()
                .map(|&v| 1.0 / (1.0 + (-v).exp()))
                .collect();
            for (row, xrow) in h.chunks_exact_mut(f).zip(x.chunks_exact(f)) {
                for c in 0..f {
                    row[c] = xrow[c] + row[c] * gate[c];
                }
            }
            let mut b1 = m.br1.run(&h, len, true);
            let b2 = m.br2.run(&h, len, true);
            for (a, b) in b1.iter_mut().zip(&b2) {
                *a += b;
            }
            x = b1;
            len = len.div_ceil(2);
        }
        Ok(self.head.run(&x)[0])
    }
}
