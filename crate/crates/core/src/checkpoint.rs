//! Binary checkpoint format.
//!
//! All integers are little-endian `u32` unless noted; parameters are raw
//! little-endian IEEE-754 `f32`.
//!
//! ```text
//! "QSYN1"                     5 bytes
//! layer count L
//! input rank R, then R dims
//! seed                        u64
//! L layer records:
//!   kind                      u8: 0 dense, 1 conv, 2 maxpool, 3 relu, 4 softmax
//!   dense:   inputs, outputs
//!   conv:    in_channels, filters, kernel, stride, pad
//!   maxpool: size
//!   for dense and conv, weight then bias, each as:
//!     rank, dims, product(dims) f32 values
//! ```
//!
//! An `f32` network round-trips bit-exactly. Other precisions are rounded
//! to `f32` on save.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::nn::{LayerSpec, Network, Params};
use crate::tensor::{Real, Tensor};

pub const MAGIC: &[u8; 5] = b"QSYN1";

fn put_u32(out: &mut Vec<u8>, v: usize) {
    out.extend_from_slice(&u32::try_from(v).expect("dimension fits in u32").to_le_bytes());
}

fn put_tensor<T: Real>(out: &mut Vec<u8>, t: &Tensor<T>) {
    put_u32(out, t.shape().len());
    for &d in t.shape() {
        put_u32(out, d);
    }
    for v in t.data() {
        out.extend_from_slice(&v.to_f32().unwrap_or(f32::NAN).to_le_bytes());
    }
}

/// Serializes `net` to checkpoint bytes.
pub fn to_bytes<T: Real>(net: &Network<T>) -> Vec<u8> {
    let mut out = MAGIC.to_vec();
    put_u32(&mut out, net.layers().len());
    put_u32(&mut out, net.input_shape().len());
    for &d in net.input_shape() {
        put_u32(&mut out, d);
    }
    out.extend_from_slice(&net.seed().to_le_bytes());
    for (i, layer) in net.layers().iter().enumerate() {
        match *layer {
            LayerSpec::Dense { inputs, outputs } => {
                out.push(0);
                put_u32(&mut out, inputs);
                put_u32(&mut out, outputs);
            }
            LayerSpec::Conv2D { in_channels, filters, kernel, stride, pad } => {
                out.push(1);
                for v in [in_channels, filters, kernel, stride, pad] {
                    put_u32(&mut out, v);
                }
            }
            LayerSpec::MaxPool { size } => {
                out.push(2);
                put_u32(&mut out, size);
            }
            LayerSpec::ReLU => out.push(3),
            LayerSpec::Softmax => out.push(4),
        }
        if let Some(p) = net.param(i) {
            put_tensor(&mut out, &p.weight);
            put_tensor(&mut out, &p.bias);
        }
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Reader<'_> {
    fn take(&mut self, n: usize) -> std::result::Result<&[u8], String> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len()).ok_or_else(|| {
            format!("truncated: needed {n} bytes at offset {}, file has {}", self.pos, self.bytes.len())
        })?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self) -> std::result::Result<u8, String> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> std::result::Result<usize, String> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()) as usize)
    }

    fn u64(&mut self) -> std::result::Result<u64, String> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn tensor(&mut self) -> std::result::Result<Tensor<f32>, String> {
        let rank = self.u32()?;
        if rank > 8 {
            return Err(format!("implausible tensor rank {rank}"));
        }
        let shape = (0..rank).map(|_| self.u32()).collect::<std::result::Result<Vec<_>, _>>()?;
        let count = shape.iter().try_fold(1usize, |a, &d| a.checked_mul(d)).ok_or("tensor size overflows")?;
        let raw = self.take(count.checked_mul(4).ok_or("tensor size overflows")?)?;
        let data = raw.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect();
        Tensor::new(shape, data).map_err(|e| e.to_string())
    }
}

fn parse(bytes: &[u8]) -> std::result::Result<Network<f32>, String> {
    let mut r = Reader { bytes, pos: 0 };
    let magic = r.take(MAGIC.len())?;
    if magic != MAGIC {
        return Err(format!("bad magic {:?}, expected {:?}", String::from_utf8_lossy(magic), "QSYN1"));
    }
    let count = r.u32()?;
    let rank = r.u32()?;
    if rank > 8 {
        return Err(format!("implausible input rank {rank}"));
    }
    let input_shape = (0..rank).map(|_| r.u32()).collect::<std::result::Result<Vec<_>, _>>()?;
    let seed = r.u64()?;
    let mut layers = Vec::new();
    let mut params = Vec::new();
    for i in 0..count {
        let layer = match r.u8()? {
            0 => LayerSpec::Dense { inputs: r.u32()?, outputs: r.u32()? },
            1 => LayerSpec::Conv2D {
                in_channels: r.u32()?,
                filters: r.u32()?,
                kernel: r.u32()?,
                stride: r.u32()?,
                pad: r.u32()?,
            },
            2 => LayerSpec::MaxPool { size: r.u32()? },
            3 => LayerSpec::ReLU,
            4 => LayerSpec::Softmax,
            k => return Err(format!("layer {i}: unknown kind {k}")),
        };
        params.push(if layer.has_params() { Some(Params { weight: r.tensor()?, bias: r.tensor()? }) } else { None });
        layers.push(layer);
    }
    if r.pos != bytes.len() {
        return Err(format!("{} trailing bytes", bytes.len() - r.pos));
    }
    Network::new(input_shape, layers, seed).and_then(|n| n.with_params(params)).map_err(|e| e.to_string())
}

/// Parses checkpoint bytes; `origin` names the source in errors.
pub fn from_bytes(bytes: &[u8], origin: impl AsRef<Path>) -> Result<Network<f32>> {
    parse(bytes).map_err(|message| Error::Checkpoint { path: origin.as_ref().into(), message })
}

pub fn save<T: Real>(net: &Network<T>, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, to_bytes(net)).map_err(|e| Error::io(path, e))
}

pub fn load(path: impl AsRef<Path>) -> Result<Network<f32>> {
    let path = path.as_ref();
    from_bytes(&fs::read(path).map_err(|e| Error::io(path, e))?, path)
}
