//! The MDNN weight container.
//!
//! All integers and floats are little-endian.
//!
//! ```text
//! "MDNN" | version u32 | channels u32 | height u32 | width u32 | layer count u32
//! per layer: tag u32 | payload length u64 | payload
//!   1 conv2d   in_channels kernels kernel_h kernel_w stride padding activation (u32 each),
//!              weights f32[kernels][in_channels][kernel_h][kernel_w], biases f32[kernels]
//!   2 maxpool  window stride (u32 each)
//!   3 flatten  (empty)
//!   4 dense    inputs outputs activation (u32 each), weights f32[outputs][inputs], biases f32[outputs]
//!   5 dropout  rate f32
//! ```
//!
//! Activation tags: 0 identity, 1 relu.

use std::path::{Path, PathBuf};

use serde_json::json;
use thiserror::Error;

use super::network::{Activation, Conv2d, Dense, Layer, MaxPool, NetworkError, NetworkSpec, Shape};

pub const MAGIC: &[u8; 4] = b"MDNN";
pub const VERSION: u32 = 1;

const TAG_CONV: u32 = 1;
const TAG_POOL: u32 = 2;
const TAG_FLATTEN: u32 = 3;
const TAG_DENSE: u32 = 4;
const TAG_DROPOUT: u32 = 5;

#[derive(Debug, Error)]
pub enum FormatError {
    #[error("not an MDNN file (bad magic)")]
    BadMagic,
    #[error("unsupported MDNN version {found} (expected {VERSION})")]
    Version { found: u32 },
    #[error("file truncated while reading {what}")]
    Truncated { what: String },
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("layer {index}: unknown layer tag {tag}")]
    UnknownLayer { index: usize, tag: u32 },
    #[error("layer {index}: unknown activation tag {tag}")]
    UnknownActivation { index: usize, tag: u32 },
    #[error("{0} unexpected bytes after the last layer")]
    TrailingBytes(usize),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl From<NetworkError> for FormatError {
    fn from(e: NetworkError) -> Self {
        FormatError::ShapeMismatch(e.to_string())
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8], FormatError> {
        if self.buf.len() - self.pos < n {
            return Err(FormatError::Truncated { what: what.into() });
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self, what: &str) -> Result<u32, FormatError> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn u64(&mut self, what: &str) -> Result<u64, FormatError> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }

    fn usize(&mut self, what: &str) -> Result<usize, FormatError> {
        Ok(self.u32(what)? as usize)
    }

    fn f32s(&mut self, n: usize, what: &str) -> Result<Vec<f32>, FormatError> {
        let bytes = n
            .checked_mul(4)
            .ok_or_else(|| FormatError::ShapeMismatch(format!("{what}: count overflows")))?;
        Ok(self
            .take(bytes, what)?
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }
}

pub fn decode(bytes: &[u8]) -> Result<NetworkSpec, FormatError> {
    let mut r = Reader { buf: bytes, pos: 0 };
    if r.take(4, "magic").map_err(|_| FormatError::BadMagic)? != MAGIC {
        return Err(FormatError::BadMagic);
    }
    let version = r.u32("version")?;
    if version != VERSION {
        return Err(FormatError::Version { found: version });
    }
    let input = Shape::new(
        r.usize("input channels")?,
        r.usize("input height")?,
        r.usize("input width")?,
    );
    let count = r.usize("layer count")?;
    let mut layers = Vec::with_capacity(count.min(1024));
    for index in 0..count {
        let tag = r.u32(&format!("layer {index} tag"))?;
        let len = r.u64(&format!("layer {index} length"))?;
        let len = usize::try_from(len).map_err(|_| FormatError::Truncated {
            what: format!("layer {index} payload"),
        })?;
        let payload = r.take(len, &format!("layer {index} payload"))?;
        let mut p = Reader { buf: payload, pos: 0 };
        let what = |s: &str| format!("layer {index} {s}");
        let act = |tag: u32| {
            Activation::from_tag(tag).ok_or(FormatError::UnknownActivation { index, tag })
        };
        let layer = match tag {
            TAG_CONV => {
                let in_channels = p.usize(&what("in_channels"))?;
                let kernels = p.usize(&what("kernels"))?;
                let kernel_h = p.usize(&what("kernel_h"))?;
                let kernel_w = p.usize(&what("kernel_w"))?;
                let stride = p.usize(&what("stride"))?;
                let padding = p.usize(&what("padding"))?;
                let activation = act(p.u32(&what("activation"))?)?;
                let nw = kernels * in_channels * kernel_h * kernel_w;
                Layer::Conv2d(Conv2d {
                    in_channels,
                    kernels,
                    kernel_h,
                    kernel_w,
                    stride,
                    padding,
                    activation,
                    weights: p.f32s(nw, &what("weights"))?,
                    biases: p.f32s(kernels, &what("biases"))?,
                })
            }
            TAG_POOL => Layer::MaxPool(MaxPool {
                window: p.usize(&what("window"))?,
                stride: p.usize(&what("stride"))?,
            }),
            TAG_FLATTEN => Layer::Flatten,
            TAG_DENSE => {
                let inputs = p.usize(&what("inputs"))?;
                let outputs = p.usize(&what("outputs"))?;
                let activation = act(p.u32(&what("activation"))?)?;
                Layer::Dense(Dense {
                    inputs,
                    outputs,
                    activation,
                    weights: p.f32s(inputs * outputs, &what("weights"))?,
                    biases: p.f32s(outputs, &what("biases"))?,
                })
            }
            TAG_DROPOUT => {
                Layer::Dropout(f32::from_le_bytes(p.take(4, &what("rate"))?.try_into().unwrap()))
            }
            tag => return Err(FormatError::UnknownLayer { index, tag }),
        };
        if p.pos != payload.len() {
            return Err(FormatError::ShapeMismatch(format!(
                "layer {index}: payload is {} bytes but its shape needs {}",
                payload.len(),
                p.pos
            )));
        }
        layers.push(layer);
    }
    if r.pos != bytes.len() {
        return Err(FormatError::TrailingBytes(bytes.len() - r.pos));
    }
    Ok(NetworkSpec::new(input, layers)?)
}

pub fn encode(net: &NetworkSpec) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    let s = net.input_shape();
    for v in [VERSION, s.channels as u32, s.height as u32, s.width as u32, net.layers().len() as u32] {
        out.extend_from_slice(&v.to_le_bytes());
    }
    for layer in net.layers() {
        let mut p = Vec::new();
        let put = |p: &mut Vec<u8>, vals: &[u32]| {
            for v in vals {
                p.extend_from_slice(&v.to_le_bytes());
            }
        };
        let putf = |p: &mut Vec<u8>, vals: &[f32]| {
            for v in vals {
                p.extend_from_slice(&v.to_le_bytes());
            }
        };
        let tag = match layer {
            Layer::Conv2d(c) => {
                put(
                    &mut p,
                    &[
                        c.in_channels as u32,
                        c.kernels as u32,
                        c.kernel_h as u32,
                        c.kernel_w as u32,
                        c.stride as u32,
                        c.padding as u32,
                        c.activation.tag(),
                    ],
                );
                putf(&mut p, &c.weights);
                putf(&mut p, &c.biases);
                TAG_CONV
            }
            Layer::MaxPool(m) => {
                put(&mut p, &[m.window as u32, m.stride as u32]);
                TAG_POOL
            }
            Layer::Flatten => TAG_FLATTEN,
            Layer::Dense(d) => {
                put(&mut p, &[d.inputs as u32, d.outputs as u32, d.activation.tag()]);
                putf(&mut p, &d.weights);
                putf(&mut p, &d.biases);
                TAG_DENSE
            }
            Layer::Dropout(rate) => {
                putf(&mut p, &[*rate]);
                TAG_DROPOUT
            }
        };
        out.extend_from_slice(&tag.to_le_bytes());
        out.extend_from_slice(&(p.len() as u64).to_le_bytes());
        out.extend_from_slice(&p);
    }
    out
}

pub fn load_network(path: &Path) -> Result<NetworkSpec, FormatError> {
    decode(&std::fs::read(path)?)
}

/// Human-readable summary of the layer shapes.
pub fn sidecar(net: &NetworkSpec) -> serde_json::Value {
    let shape = |s: Shape| json!([s.channels, s.height, s.width]);
    let layers: Vec<serde_json::Value> = net
        .layers()
        .iter()
        .zip(net.shapes())
        .map(|(layer, &out)| {
            let mut v = match layer {
                Layer::Conv2d(c) => json!({
                    "kernels": c.kernels,
                    "kernel": [c.kernel_h, c.kernel_w],
                    "stride": c.stride,
                    "padding": c.padding,
                    "activation": c.activation,
                }),
                Layer::MaxPool(m) => json!({"window": m.window, "stride": m.stride}),
                Layer::Flatten => json!({}),
                Layer::Dense(d) => json!({
                    "inputs": d.inputs,
                    "outputs": d.outputs,
                    "activation": d.activation,
                }),
                Layer::Dropout(rate) => json!({"rate": rate}),
            };
            v["type"] = json!(layer.name());
            v["output"] = shape(out);
            v
        })
        .collect();
    json!({
        "format": "MDNN",
        "version": VERSION,
        "input": shape(net.input_shape()),
        "layers": layers,
    })
}

pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

/// Writes the weights and the `.json` sidecar next to them.
pub fn save_network(net: &NetworkSpec, path: &Path) -> Result<(), FormatError> {
    std::fs::write(path, encode(net))?;
    let text = serde_json::to_string_pretty(&sidecar(net)).expect("sidecar serializes");
    std::fs::write(sidecar_path(path), text + "\n")?;
    Ok(())
}
