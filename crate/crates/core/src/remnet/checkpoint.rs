//! Float checkpoint file.
//!
//! Little-endian layout:
//!
//! ```text
//! magic        4 bytes  "REMN"
//! version      u16      1
//! config       8 × u32  input_len, filters, modules, se_reduction,
//!                       kernel_first, kernel_body, kernel_branch2,
//!                       dropout_rate in millionths
//! tensor_count u32
//! per tensor:  name_len u16 | name (UTF-8) | rank u8 | dims u32 × rank |
//!              payload f32 × Π dims
//! ```

use std::io::{Read, Write};
use std::path::Path;

use super::{param_layout, Remnet, RemnetConfig};
use crate::error::{Error, Result};
use crate::model::Regressor;
use crate::tensor::Tensor;
use crate::weights::ModelWeights;

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"REMN";
pub const CHECKPOINT_VERSION: u16 = 1;

pub(crate) fn config_block(config: &RemnetConfig) -> [u32; 8] {
    [
        config.input_len as u32,
        config.filters as u32,
        config.modules as u32,
        config.se_reduction as u32,
        config.kernel_first as u32,
        config.kernel_body as u32,
        config.kernel_branch2 as u32,
        (config.dropout_rate * 1e6).round() as u32,
    ]
}

pub(crate) fn config_from_block(b: [u32; 8]) -> RemnetConfig {
    RemnetConfig {
        input_len: b[0] as usize,
        filters: b[1] as usize,
        modules: b[2] as usize,
        se_reduction: b[3] as usize,
        kernel_first: b[4] as usize,
        kernel_body: b[5] as usize,
        kernel_branch2: b[6] as usize,
        dropout_rate: b[7] as f64 / 1e6,
    }
}

pub fn encode(model: &Remnet) -> Vec<u8> {
    let mut out = Vec::with_capacity(model.total_params() * 4 + 1024);
    out.extend_from_slice(CHECKPOINT_MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    for v in config_block(model.config()) {
        out.extend_from_slice(&v.to_le_bytes());
    }
    let weights = model.weights();
    out.extend_from_slice(&(weights.len() as u32).to_le_bytes());
    for e in weights.iter() {
        out.extend_from_slice(&(e.name.len() as u16).to_le_bytes());
        out.extend_from_slice(e.name.as_bytes());
        out.push(e.tensor.shape().len() as u8);
        for &d in e.tensor.shape() {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for &v in e.tensor.data() {
            out.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    out
}

/// Cursor over a byte slice that reports truncation.
pub(crate) struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    pub(crate) fn new(bytes: &'a [u8]) -> Self {
        Reader { bytes, pos: 0 }
    }

    pub(crate) fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        match end {
            Some(end) => {
                let s = &self.bytes[self.pos..end];
                self.pos = end;
                Ok(s)
            }
            None => Err(Error::Truncated(format!(
                "reading {what} at byte {}",
                self.pos
            ))),
        }
    }

    pub(crate) fn u8(&mut self, what: &str) -> Result<u8> {
        Ok(self.take(1, what)?[0])
    }

    pub(crate) fn u16(&mut self, what: &str) -> Result<u16> {
        Ok(u16::from_le_bytes(
            self.take(2, what)?.try_into().expect("2 bytes"),
        ))
    }

    pub(crate) fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(
            self.take(4, what)?.try_into().expect("4 bytes"),
        ))
    }

    pub(crate) fn i32(&mut self, what: &str) -> Result<i32> {
        Ok(i32::from_le_bytes(
            self.take(4, what)?.try_into().expect("4 bytes"),
        ))
    }

    pub(crate) fn f32(&mut self, what: &str) -> Result<f32> {
        Ok(f32::from_le_bytes(
            self.take(4, what)?.try_into().expect("4 bytes"),
        ))
    }

    pub(crate) fn f64(&mut self, what: &str) -> Result<f64> {
        Ok(f64::from_le_bytes(
            self.take(8, what)?.try_into().expect("8 bytes"),
        ))
    }

    pub(crate) fn is_empty(&self) -> bool {
        self.pos == self.bytes.len()
    }
}

pub fn decode(bytes: &[u8], source: &str) -> Result<Remnet> {
    let mut r = Reader::new(bytes);
    if r.take(4, "magic")? != CHECKPOINT_MAGIC {
        return Err(Error::BadMagic(source.to_string()));
    }
    let version = r.u16("version")?;
    if version != CHECKPOINT_VERSION {
        return Err(Error::Version {
            found: version,
            expected: CHECKPOINT_VERSION,
        });
    }
    let mut block = [0u32; 8];
    for (i, v) in block.iter_mut().enumerate() {
        *v = r.u32(&format!("config field {i}"))?;
    }
    let config = config_from_block(block);
    config.validate()?;
    let layout = param_layout(&config);
    let count = r.u32("tensor count")? as usize;
    if count != layout.len() {
        return Err(Error::shape(
            "checkpoint",
            format!("{count} tensors, config implies {}", layout.len()),
        ));
    }
    let mut weights = ModelWeights::new();
    for (name, shape) in layout {
        let len = r.u16("name length")? as usize;
        let got = String::from_utf8_lossy(r.take(len, "tensor name")?).into_owned();
        let rank = r.u8("rank")? as usize;
        let mut dims = Vec::with_capacity(rank);
        for _ in 0..rank {
            dims.push(r.u32("dimension")? as usize);
        }
        if got != name || dims != shape {
            return Err(Error::shape(
                "checkpoint",
                format!("tensor {got} {dims:?} does not match config ({name} {shape:?})"),
            ));
        }
        let n: usize = dims.iter().product();
        let mut data = Vec::with_capacity(n);
        for _ in 0..n {
            data.push(r.f32(&name)? as f64);
        }
        weights.push(name, Tensor::from_vec(&dims, data)?);
    }
    if !r.is_empty() {
        return Err(Error::shape(
            "checkpoint",
            "trailing bytes after last tensor",
        ));
    }
    Remnet::from_weights(config, weights)
}

pub fn save_checkpoint(model: &Remnet, path: &Path) -> Result<()> {
    let bytes = encode(model);
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&bytes).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<Remnet> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| Error::io(path, e))?;
    decode(&bytes, &path.display().to_string())
}
