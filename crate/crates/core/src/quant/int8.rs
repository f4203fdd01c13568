//! Integer inference engine. Activations are int8, accumulators int32;
//! convolutions run as i16 multiply-adds over a zero-padded, zero-point
//! centred copy of the input.

use super::kernel::{self, Isa};
use super::{layer, req, QuantizedModel, Requantizer, ADD_SHIFT};
use crate::error::{Error, Result};
use crate::remnet::ActPoint;

#[derive(Debug, Clone)]
struct ConvI8 {
    k: usize,
    cin: usize,
    cout: usize,
    stride: usize,
    /// taps consumed two at a time
    pairs: usize,
    /// packed, see [`kernel::pack`]
    w: Vec<i16>,
    /// bias padded to whole kernel blocks
    b: Vec<i32>,
    req: Requantizer,
    z_in: i32,
    z_out: i32,
    lo: i32,
}

impl ConvI8 {
    fn forward(&self, isa: Isa, x: &[i8], len: usize, s: &mut Scratch, out: &mut Vec<i8>) -> usize {
        let pad = self.k / 2;
        let (cin, cout) = (self.cin, self.cout);
        let out_len = len.div_ceil(self.stride);
        // every window plus the odd-tap overhang, which meets a zero weight
        let padded = (out_len - 1) * self.stride + self.k;
        let centred = &mut s.centred;
        centred.clear();
        centred.resize(padded * cin + 1, 0);
        // strided layers may never read the last inputs
        let used = len.min(padded - pad) * cin;
        kernel::centre(
            isa,
            &x[..used],
            self.z_in,
            &mut centred[pad * cin..pad * cin + used],
        );
        kernel::pair_up(isa, centred, &mut s.pairs);
        let width = self.b.len();
        let acc = &mut s.acc;
        acc.clear();
        for _ in 0..out_len {
            acc.extend_from_slice(&self.b);
        }
        kernel::accumulate(
            isa,
            &s.pairs,
            self.stride * cin,
            out_len,
            &self.w,
            self.pairs,
            acc,
        );
        kernel::requantize(isa, &self.req, acc);
        kernel::finish(isa, acc, width, cout, self.z_out, self.lo, out);
        out_len
    }
}

/// Reused buffers for one forward pass.
#[derive(Debug, Default)]
struct Scratch {
    centred: Vec<i16>,
    pairs: Vec<i32>,
    acc: Vec<i32>,
    a: Vec<i32>,
    b: Vec<i32>,
}

/// `out[i] = (a[i] − za)·2^ADD_SHIFT ⊗ ra + (b[i] − zb)·2^ADD_SHIFT ⊗ rb`,
/// rescaled back down and offset to `z_out`.
#[allow(clippy::too_many_arguments)]
fn add_into(
    isa: Isa,
    s: &mut Scratch,
    a: &[i8],
    za: i32,
    ra: &Requantizer,
    b: &[i8],
    zb: i32,
    rb: &Requantizer,
    z_out: i32,
    out: &mut Vec<i8>,
) {
    kernel::widen(isa, a, za, ADD_SHIFT, &mut s.a);
    kernel::widen(isa, b, zb, ADD_SHIFT, &mut s.b);
    kernel::requantize(isa, ra, &mut s.a);
    kernel::requantize(isa, rb, &mut s.b);
    kernel::add_shift_down(isa, &mut s.a, &s.b, ADD_SHIFT);
    // |sum| ≤ 2^19 after the shift, so finish's pre-clamp is inert
    kernel::finish(isa, &s.a, s.a.len(), s.a.len(), z_out, -128, out);
}

#[derive(Debug, Clone)]
struct DenseI8 {
    n: usize,
    m: usize,
    /// `[m][n]`
    w: Vec<i16>,
    b: Vec<i32>,
    z_in: i32,
}

impl DenseI8 {
    fn accumulate(&self, x: &[i8], centred: &mut Vec<i16>, acc: &mut Vec<i32>) {
        centred.clear();
        centred.extend(x.iter().map(|&q| (q as i32 - self.z_in) as i16));
        acc.clear();
        for o in 0..self.m {
            acc.push(self.b[o] + dot(centred, &self.w[o * self.n..(o + 1) * self.n]));
        }
    }
}

#[inline]
fn dot(a: &[i16], b: &[i16]) -> i32 {
    a.iter().zip(b).map(|(&x, &y)| x as i32 * y as i32).sum()
}

#[inline]
fn requant_out(r: &Requantizer, acc: i32, z_out: i32, lo: i32) -> i8 {
    (r.apply(acc).saturating_add(z_out)).clamp(lo, 127) as i8
}

#[derive(Debug, Clone)]
struct ModuleI8 {
    len: usize,
    res: ConvI8,
    z_res: i32,
    pool: Requantizer,
    z_pool: i32,
    se1: DenseI8,
    se1_req: Requantizer,
    z_excite: i32,
    se2: DenseI8,
    se2_req: Requantizer,
    z_logit: i32,
    lut: [i8; 256],
    z_gate: i32,
    scale: Requantizer,
    z_scaled: i32,
    z_in: i32,
    sum_in: Requantizer,
    sum_scaled: Requantizer,
    z_sum: i32,
    br1: ConvI8,
    br2: ConvI8,
    z_b1: i32,
    z_b2: i32,
    out_b1: Requantizer,
    out_b2: Requantizer,
    z_out: i32,
}

/// Integer-only REMNet forward pass compiled from a [`QuantizedModel`].
#[derive(Debug, Clone)]
pub struct Int8Engine {
    input_len: usize,
    filters: usize,
    stem: ConvI8,
    modules: Vec<ModuleI8>,
    head: DenseI8,
    head_scale: f64,
    isa: Isa,
}

fn relu_floor(z: i32) -> i32 {
    z.max(-128)
}

impl Int8Engine {
    pub fn new(q: &QuantizedModel) -> Result<Self> {
        let cfg = q.config;
        cfg.validate()?;
        let f = cfg.filters;
        let z = |p: ActPoint| q.act(p).zero_point;
        let conv = |l: usize,
                    r: usize,
                    stride: usize,
                    z_in: i32,
                    z_out: i32,
                    relu: bool|
         -> Result<ConvI8> {
            let wt = &q.weights[l];
            let (k, cin, cout) = match wt.shape[..] {
                [k, cin, cout] => (k, cin, cout),
                _ => {
                    return Err(Error::shape(
                        "int8 engine",
                        format!("layer {l} is not a convolution"),
                    ))
                }
            };
            let w = kernel::pack(|p, o| wt.data[p * cout + o] as i16, k * cin, cout);
            let mut b = q.biases[l].data.clone();
            b.resize(cout.div_ceil(kernel::LANES) * kernel::LANES, 0);
            Ok(ConvI8 {
                k,
                cin,
                cout,
                stride,
                pairs: (k * cin).div_ceil(2),
                w,
                b,
                req: q.requantizers[r],
                z_in,
                z_out,
                lo: if relu { relu_floor(z_out) } else { -128 },
            })
        };
        let dense = |l: usize, z_in: i32| -> Result<DenseI8> {
            let wt = &q.weights[l];
            let (n, m) = match wt.shape[..] {
                [n, m] => (n, m),
                _ => {
                    return Err(Error::shape(
                        "int8 engine",
                        format!("layer {l} is not dense"),
                    ))
                }
            };
            let mut w = vec![0i16; n * m];
            for i in 0..n {
                for o in 0..m {
                    w[o * n + i] = wt.data[i * m + o] as i16;
                }
            }
            Ok(DenseI8 {
                n,
                m,
                w,
                b: q.biases[l].data.clone(),
                z_in,
            })
        };

        let stem = conv(0, 0, 1, z(ActPoint::Input), z(ActPoint::Stem), true)?;
        let mut modules = Vec::with_capacity(cfg.modules);
        for m in 0..cfg.modules {
            let inp = if m == 0 {
                ActPoint::Stem
            } else {
                ActPoint::Out(m - 1)
            };
            let r = |off| q.requantizers[req::module(m, off)];
            modules.push(ModuleI8 {
                len: cfg.module_len(m),
                res: conv(
                    layer::module(m, layer::RES),
                    req::module(m, req::RES),
                    1,
                    z(inp),
                    z(ActPoint::Residual(m)),
                    true,
                )?,
                z_res: z(ActPoint::Residual(m)),
                pool: r(req::POOL),
                z_pool: z(ActPoint::Pool(m)),
                se1: dense(layer::module(m, layer::SE1), z(ActPoint::Pool(m)))?,
                se1_req: r(req::SE1),
                z_excite: z(ActPoint::Excite(m)),
                se2: dense(layer::module(m, layer::SE2), z(ActPoint::Excite(m)))?,
                se2_req: r(req::SE2),
                z_logit: z(ActPoint::Logit(m)),
                lut: q.gate_luts[m],
                z_gate: z(ActPoint::Gate(m)),
                scale: r(req::SCALE),
                z_scaled: z(ActPoint::Scaled(m)),
                z_in: z(inp),
                sum_in: r(req::SUM_IN),
                sum_scaled: r(req::SUM_SCALED),
                z_sum: z(ActPoint::Sum(m)),
                br1: conv(
                    layer::module(m, layer::BR1),
                    req::module(m, req::BR1),
                    2,
                    z(ActPoint::Sum(m)),
                    z(ActPoint::Branch1(m)),
                    true,
                )?,
                br2: conv(
                    layer::module(m, layer::BR2),
                    req::module(m, req::BR2),
                    2,
                    z(ActPoint::Sum(m)),
                    z(ActPoint::Branch2(m)),
                    true,
                )?,
                z_b1: z(ActPoint::Branch1(m)),
                z_b2: z(ActPoint::Branch2(m)),
                out_b1: r(req::OUT_BR1),
                out_b2: r(req::OUT_BR2),
                z_out: z(ActPoint::Out(m)),
            });
        }
        let last = if cfg.modules == 0 {
            ActPoint::Stem
        } else {
            ActPoint::Out(cfg.modules - 1)
        };
        let head = dense(layer::head(cfg.modules), z(last))?;
        Ok(Int8Engine {
            input_len: cfg.input_len,
            filters: f,
            stem,
            modules,
            head,
            head_scale: q.output_scale(),
            isa: Isa::detect(),
        })
    }

    /// Range error in meters from a quantized input window.
    pub fn forward(&self, input: &[i8]) -> Result<f64> {
        Ok(self.forward_acc(input)? as f64 * self.head_scale)
    }

    /// The head's int32 accumulator; meters = acc · output scale.
    pub fn forward_acc(&self, input: &[i8]) -> Result<i32> {
        if input.len() != self.input_len {
            return Err(Error::shape(
                "int8 forward",
                format!("input length {} != K {}", input.len(), self.input_len),
            ));
        }
        let f = self.filters;
        let isa = self.isa;
        let mut s = Scratch::default();
        let mut centred = Vec::new();
        let mut x = Vec::new();
        let mut len = self
            .stem
            .forward(isa, input, self.input_len, &mut s, &mut x);
        let mut residual = Vec::new();
        let mut tmp = Vec::new();
        let mut acc = Vec::new();
        let mut b1 = Vec::new();
        let mut b2 = Vec::new();
        for md in &self.modules {
            debug_assert_eq!(len, md.len);
            md.res.forward(isa, &x, len, &mut s, &mut residual);

            // squeeze
            let mut sums = vec![0i32; f];
            for row in residual.chunks_exact(f) {
                for (s, &q) in sums.iter_mut().zip(row) {
                    *s += q as i32 - md.z_res;
                }
            }
            tmp.clear();
            tmp.extend(
                sums.iter()
                    .map(|&s| requant_out(&md.pool, s, md.z_pool, -128)),
            );

            md.se1.accumulate(&tmp, &mut centred, &mut acc);
            let lo = relu_floor(md.z_excite);
            let excite: Vec<i8> = acc
                .iter()
                .map(|&a| requant_out(&md.se1_req, a, md.z_excite, lo))
                .collect();
            md.se2.accumulate(&excite, &mut centred, &mut acc);
            let gate: Vec<i32> = acc
                .iter()
                .map(|&a| {
                    let logit = requant_out(&md.se2_req, a, md.z_logit, -128) as i32;
                    md.lut[(logit + 128) as usize] as i32 - md.z_gate
                })
                .collect();

            // excite, then the residual add
            s.acc.clear();
            s.acc.resize(residual.len(), 0);
            for (dst, row) in s.acc.chunks_exact_mut(f).zip(residual.chunks_exact(f)) {
                for ((d, &q), &g) in dst.iter_mut().zip(row).zip(&gate) {
                    *d = (q as i32 - md.z_res) * g;
                }
            }
            kernel::requantize(isa, &md.scale, &mut s.acc);
            kernel::finish(isa, &s.acc, f, f, md.z_scaled, -128, &mut tmp);
            let mut sum = Vec::new();
            add_into(
                isa,
                &mut s,
                &x,
                md.z_in,
                &md.sum_in,
                &tmp,
                md.z_scaled,
                &md.sum_scaled,
                md.z_sum,
                &mut sum,
            );
            x = sum;

            md.br1.forward(isa, &x, len, &mut s, &mut b1);
            let out_len = md.br2.forward(isa, &x, len, &mut s, &mut b2);
            add_into(
                isa, &mut s, &b1, md.z_b1, &md.out_b1, &b2, md.z_b2, &md.out_b2, md.z_out, &mut x,
            );
            len = out_len;
        }
        self.head.accumulate(&x, &mut centred, &mut acc);
        Ok(acc[0])
    }

    pub fn input_len(&self) -> usize {
        self.input_len
    }
}

/// One-shot integer forward pass; compile an [`Int8Engine`] to reuse.
pub fn forward_int8(q: &QuantizedModel, input: &[i8]) -> Result<f64> {
    Int8Engine::new(q)?.forward(input)
}
