//! Integer model file.
//!
//! Little-endian layout:
//!
//! ```text
//! magic          4 bytes  "REMQ"
//! version        u16      1
//! config         8 × u32  as in the float checkpoint
//! activations    per point (2 + 10·modules): scale f64 | zero_point i32
//! layers         per weighted layer (stem, 5 per module, head):
//!                  weight scale f64 | weights i8 × n |
//!                  bias scale f64 | biases i32 × cout
//! requantizers   per rescale (1 + 11·modules):
//!                  m0 i32 | right_shift u8 | left_shift u8
//! gate tables    per module: 256 × i8, indexed by logit + 128
//! ```
//!
//! Tensor shapes, zero points of weights and biases (0) and clamp ranges
//! follow from the config and are not stored.

use std::path::Path;

use super::{
    FixedPointMultiplier, QBias, QWeight, QuantParams, QuantizedModel, Requantizer, REQ_PER_MODULE,
};
use crate::error::{Error, Result};
use crate::remnet::checkpoint::{config_block, config_from_block, Reader};
use crate::remnet::{param_layout, ActPoint};

pub const QMODEL_MAGIC: &[u8; 4] = b"REMQ";
pub const QMODEL_VERSION: u16 = 1;

pub fn encode_qmodel(q: &QuantizedModel) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(QMODEL_MAGIC);
    out.extend_from_slice(&QMODEL_VERSION.to_le_bytes());
    for v in config_block(&q.config) {
        out.extend_from_slice(&v.to_le_bytes());
    }
    for p in &q.activations {
        out.extend_from_slice(&p.scale.to_le_bytes());
        out.extend_from_slice(&p.zero_point.to_le_bytes());
    }
    for (w, b) in q.weights.iter().zip(&q.biases) {
        out.extend_from_slice(&w.params.scale.to_le_bytes());
        out.extend(w.data.iter().map(|&v| v as u8));
        out.extend_from_slice(&b.params.scale.to_le_bytes());
        for v in &b.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    for r in &q.requantizers {
        out.extend_from_slice(&r.multiplier.m0.to_le_bytes());
        out.push(r.multiplier.right_shift);
        out.push(r.left_shift);
    }
    for lut in &q.gate_luts {
        out.extend(lut.iter().map(|&v| v as u8));
    }
    out
}

fn positive_scale(s: f64, what: &str) -> Result<f64> {
    if s > 0.0 && s.is_finite() {
        Ok(s)
    } else {
        Err(Error::Data(format!("{what}: invalid scale {s}")))
    }
}

pub fn decode_qmodel(bytes: &[u8], source: &str) -> Result<QuantizedModel> {
    let mut r = Reader::new(bytes);
    if r.take(4, "magic")? != QMODEL_MAGIC {
        return Err(Error::BadMagic(source.to_string()));
    }
    let version = r.u16("version")?;
    if version != QMODEL_VERSION {
        return Err(Error::Version {
            found: version,
            expected: QMODEL_VERSION,
        });
    }
    let mut block = [0u32; 8];
    for (i, v) in block.iter_mut().enumerate() {
        *v = r.u32(&format!("config field {i}"))?;
    }
    let config = config_from_block(block);
    config.validate()?;

    let mut activations = Vec::new();
    for p in ActPoint::all(config.modules) {
        let scale = positive_scale(r.f64("activation scale")?, "activation")?;
        let z = r.i32("activation zero point")?;
        let params = match p {
            ActPoint::Gate(_) => QuantParams::sigmoid_output(),
            _ => QuantParams::new(scale, z, -128, 127)?,
        };
        if params.scale != scale || params.zero_point != z {
            return Err(Error::Data(format!(
                "{source}: gate encoding must be fixed"
            )));
        }
        activations.push(params);
    }

    let layout = param_layout(&config);
    let mut weights = Vec::new();
    let mut biases = Vec::new();
    for pair in layout.chunks(2) {
        let (wname, wshape) = &pair[0];
        let n: usize = wshape.iter().product();
        let ws = positive_scale(r.f64(wname)?, wname)?;
        let data: Vec<i8> = r.take(n, wname)?.iter().map(|&b| b as i8).collect();
        if data.contains(&i8::MIN) {
            return Err(Error::Data(format!("{source}: weight -128 in {wname}")));
        }
        weights.push(QWeight {
            shape: wshape.clone(),
            params: QuantParams::new(ws, 0, -127, 127)?,
            data,
        });
        let (bname, bshape) = &pair[1];
        let bs = positive_scale(r.f64(bname)?, bname)?;
        let bp = QuantParams::bias_i32(bs);
        let mut bdata = Vec::with_capacity(bshape[0]);
        for _ in 0..bshape[0] {
            let v = r.i32(bname)?;
            if v < bp.qmin || v > bp.qmax {
                return Err(Error::Data(format!(
                    "{source}: bias {v} out of range in {bname}"
                )));
            }
            bdata.push(v);
        }
        biases.push(QBias {
            params: bp,
            data: bdata,
        });
    }

    let mut requantizers = Vec::new();
    for _ in 0..1 + REQ_PER_MODULE * config.modules {
        let m0 = r.i32("multiplier")?;
        let right_shift = r.u8("right shift")?;
        let left_shift = r.u8("left shift")?;
        if m0 < (1 << 30) || left_shift > 31 {
            return Err(Error::Data(format!(
                "{source}: malformed requantizer (m0 {m0}, left shift {left_shift})"
            )));
        }
        requantizers.push(Requantizer {
            left_shift,
            multiplier: FixedPointMultiplier { m0, right_shift },
        });
    }
    let mut gate_luts = Vec::new();
    for _ in 0..config.modules {
        let mut lut = [0i8; 256];
        for (d, &s) in lut.iter_mut().zip(r.take(256, "gate table")?) {
            *d = s as i8;
        }
        gate_luts.push(lut);
    }
    if !r.is_empty() {
        return Err(Error::Data(format!(
            "{source}: trailing bytes after gate tables"
        )));
    }
    Ok(QuantizedModel {
        config,
        activations,
        weights,
        biases,
        requantizers,
        gate_luts,
    })
}

pub fn save_qmodel(q: &QuantizedModel, path: &Path) -> Result<()> {
    std::fs::write(path, encode_qmodel(q)).map_err(|e| Error::io(path, e))
}

pub fn load_qmodel(path: &Path) -> Result<QuantizedModel> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_qmodel(&bytes, &path.display().to_string())
}
