//! Feed-forward classifier: convolution, max pooling, flattening, dense and
//! dropout layers, evaluated in `f64` from `f32` weights.
//!
//! Activations are laid out channel-major (`[channel][row][col]`) and flatten
//! keeps that order.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Identity,
    Relu,
}

impl Activation {
    pub fn tag(self) -> u32 {
        match self {
            Activation::Identity => 0,
            Activation::Relu => 1,
        }
    }

    pub fn from_tag(tag: u32) -> Option<Self> {
        match tag {
            0 => Some(Activation::Identity),
            1 => Some(Activation::Relu),
            _ => None,
        }
    }

    fn apply(self, v: f64) -> f64 {
        match self {
            Activation::Identity => v,
            Activation::Relu => v.max(0.0),
        }
    }
}

/// Shape of an activation tensor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Shape {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
}

impl Shape {
    pub fn new(channels: usize, height: usize, width: usize) -> Self {
        Shape {
            channels,
            height,
            width,
        }
    }

    pub fn flat(len: usize) -> Self {
        Shape::new(len, 1, 1)
    }

    pub fn len(&self) -> usize {
        self.channels * self.height * self.width
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Conv2d {
    pub in_channels: usize,
    pub kernels: usize,
    pub kernel_h: usize,
    pub kernel_w: usize,
    pub stride: usize,
    pub padding: usize,
    pub activation: Activation,
    /// `[kernel][in_channel][row][col]`
    pub weights: Vec<f32>,
    pub biases: Vec<f32>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MaxPool {
    pub window: usize,
    pub stride: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub inputs: usize,
    pub outputs: usize,
    pub activation: Activation,
    /// `[output][input]`
    pub weights: Vec<f32>,
    pub biases: Vec<f32>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Layer {
    Conv2d(Conv2d),
    MaxPool(MaxPool),
    Flatten,
    Dense(Dense),
    /// Rate kept for provenance; inference ignores it.
    Dropout(f32),
}

impl Layer {
    pub fn name(&self) -> &'static str {
        match self {
            Layer::Conv2d(_) => "conv2d",
            Layer::MaxPool(_) => "maxpool",
            Layer::Flatten => "flatten",
            Layer::Dense(_) => "dense",
            Layer::Dropout(_) => "dropout",
        }
    }

    /// Output shape for input shape `s`, or a description of the mismatch.
    pub fn output_shape(&self, s: Shape) -> Result<Shape, String> {
        match self {
            Layer::Conv2d(c) => {
                if c.in_channels != s.channels {
                    return Err(format!(
                        "expects {} input channels, got {}",
                        c.in_channels, s.channels
                    ));
                }
                if c.stride == 0 || c.kernels == 0 || c.kernel_h == 0 || c.kernel_w == 0 {
                    return Err("zero kernel size, count or stride".into());
                }
                let h = s.height + 2 * c.padding;
                let w = s.width + 2 * c.padding;
                if h < c.kernel_h || w < c.kernel_w {
                    return Err(format!("kernel larger than {h}x{w} input"));
                }
                if c.weights.len() != c.kernels * c.in_channels * c.kernel_h * c.kernel_w
                    || c.biases.len() != c.kernels
                {
                    return Err("weight or bias count does not match shape".into());
                }
                Ok(Shape::new(
                    c.kernels,
                    (h - c.kernel_h) / c.stride + 1,
                    (w - c.kernel_w) / c.stride + 1,
                ))
            }
            Layer::MaxPool(p) => {
                if p.window == 0 || p.stride == 0 {
                    return Err("zero pool window or stride".into());
                }
                if s.height < p.window || s.width < p.window {
                    return Err(format!("window {} larger than input", p.window));
                }
                Ok(Shape::new(
                    s.channels,
                    (s.height - p.window) / p.stride + 1,
                    (s.width - p.window) / p.stride + 1,
                ))
            }
            Layer::Flatten | Layer::Dropout(_) => Ok(match self {
                Layer::Flatten => Shape::flat(s.len()),
                _ => s,
            }),
            Layer::Dense(d) => {
                if s.len() != d.inputs {
                    return Err(format!("expects {} inputs, got {}", d.inputs, s.len()));
                }
                if d.weights.len() != d.inputs * d.outputs || d.biases.len() != d.outputs {
                    return Err("weight or bias count does not match shape".into());
                }
                Ok(Shape::flat(d.outputs))
            }
        }
    }

    fn forward(&self, s: Shape, x: &[f64]) -> Vec<f64> {
        match self {
            Layer::Conv2d(c) => conv(c, s, x),
            Layer::MaxPool(p) => pool(p, s, x),
            Layer::Flatten | Layer::Dropout(_) => x.to_vec(),
            Layer::Dense(d) => (0..d.outputs)
                .map(|o| {
                    let row = &d.weights[o * d.inputs..(o + 1) * d.inputs];
                    d.activation.apply(dot(row, x) + d.biases[o] as f64)
                })
                .collect(),
        }
    }
}

/// Four interleaved partial sums, combined pairwise at the end.
fn dot(w: &[f32], x: &[f64]) -> f64 {
    let mut acc = [0.0f64; 4];
    let wc = w.chunks_exact(4);
    let xc = x.chunks_exact(4);
    let tail: f64 = wc
        .remainder()
        .iter()
        .zip(xc.remainder())
        .map(|(&a, &b)| a as f64 * b)
        .sum();
    for (a, b) in wc.zip(xc) {
        for l in 0..4 {
            acc[l] += a[l] as f64 * b[l];
        }
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

fn conv(c: &Conv2d, s: Shape, x: &[f64]) -> Vec<f64> {
    let oh = (s.height + 2 * c.padding - c.kernel_h) / c.stride + 1;
    let ow = (s.width + 2 * c.padding - c.kernel_w) / c.stride + 1;
    let mut out = vec![0.0; c.kernels * oh * ow];
    // Output range along one axis whose input index `o * stride + tap - pad`
    // lies inside `0..len`.
    let valid = |tap: usize, len: usize, outs: usize| {
        let lo = c.padding.saturating_sub(tap).div_ceil(c.stride);
        let hi = ((len + c.padding).saturating_sub(tap)).div_ceil(c.stride).min(outs);
        (lo, hi.max(lo))
    };
    for k in 0..c.kernels {
        let plane = &mut out[k * oh * ow..(k + 1) * oh * ow];
        plane.fill(c.biases[k] as f64);
        for ch in 0..c.in_channels {
            let input = &x[ch * s.height * s.width..(ch + 1) * s.height * s.width];
            for u in 0..c.kernel_h {
                let (r0, r1) = valid(u, s.height, oh);
                for v in 0..c.kernel_w {
                    let w = c.weights[((k * c.in_channels + ch) * c.kernel_h + u) * c.kernel_w + v] as f64;
                    let (q0, q1) = valid(v, s.width, ow);
                    for r in r0..r1 {
                        let row = r * c.stride + u - c.padding;
                        let src = &input[row * s.width..(row + 1) * s.width];
                        let dst = &mut plane[r * ow + q0..r * ow + q1];
                        if c.stride == 1 {
                            let src = &src[q0 + v - c.padding..q1 + v - c.padding];
                            for (o, &xv) in dst.iter_mut().zip(src) {
                                *o += w * xv;
                            }
                        } else {
                            for (i, o) in dst.iter_mut().enumerate() {
                                *o += w * src[(q0 + i) * c.stride + v - c.padding];
                            }
                        }
                    }
                }
            }
        }
        for o in plane.iter_mut() {
            *o = c.activation.apply(*o);
        }
    }
    out
}

fn pool(p: &MaxPool, s: Shape, x: &[f64]) -> Vec<f64> {
    let oh = (s.height - p.window) / p.stride + 1;
    let ow = (s.width - p.window) / p.stride + 1;
    let mut out = vec![f64::NEG_INFINITY; s.channels * oh * ow];
    for ch in 0..s.channels {
        let input = &x[ch * s.height * s.width..(ch + 1) * s.height * s.width];
        for r in 0..oh {
            let dst = &mut out[(ch * oh + r) * ow..(ch * oh + r + 1) * ow];
            for u in 0..p.window {
                let row = &input[(r * p.stride + u) * s.width..(r * p.stride + u + 1) * s.width];
                for (q, m) in dst.iter_mut().enumerate() {
                    for &v in &row[q * p.stride..q * p.stride + p.window] {
                        if v > *m {
                            *m = v;
                        }
                    }
                }
            }
        }
    }
    out
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NetworkError {
    #[error("layer {index} ({name}): {message}")]
    Shape {
        index: usize,
        name: &'static str,
        message: String,
    },
    #[error("input has {got} values, network expects {expected}")]
    InputLength { expected: usize, got: usize },
    #[error("layer {index} ({name}) produced a non-finite value")]
    NonFinite { index: usize, name: &'static str },
    #[error("network has no layers")]
    Empty,
}

/// A validated network.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkSpec {
    input: Shape,
    layers: Vec<Layer>,
    shapes: Vec<Shape>,
}

/// Pre-softmax scores `g` and softmax probabilities `f`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Forward {
    pub g: Vec<f64>,
    pub f: Vec<f64>,
}

impl NetworkSpec {
    pub fn new(input: Shape, layers: Vec<Layer>) -> Result<Self, NetworkError> {
        if layers.is_empty() {
            return Err(NetworkError::Empty);
        }
        let mut shapes = Vec::with_capacity(layers.len());
        let mut s = input;
        for (index, layer) in layers.iter().enumerate() {
            s = layer.output_shape(s).map_err(|message| NetworkError::Shape {
                index,
                name: layer.name(),
                message,
            })?;
            shapes.push(s);
        }
        Ok(NetworkSpec {
            input,
            layers,
            shapes,
        })
    }

    pub fn input_shape(&self) -> Shape {
        self.input
    }

    pub fn input_len(&self) -> usize {
        self.input.len()
    }

    pub fn output_len(&self) -> usize {
        self.shapes.last().map_or(0, Shape::len)
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    /// Output shape of each layer.
    pub fn shapes(&self) -> &[Shape] {
        &self.shapes
    }

    /// Pre-softmax outputs.
    pub fn logits(&self, x: &[f64]) -> Result<Vec<f64>, NetworkError> {
        if x.len() != self.input_len() {
            return Err(NetworkError::InputLength {
                expected: self.input_len(),
                got: x.len(),
            });
        }
        let mut s = self.input;
        let mut cur = x.to_vec();
        for (index, (layer, &next)) in self.layers.iter().zip(&self.shapes).enumerate() {
            cur = layer.forward(s, &cur);
            if cur.iter().any(|v| !v.is_finite()) {
                return Err(NetworkError::NonFinite {
                    index,
                    name: layer.name(),
                });
            }
            s = next;
        }
        Ok(cur)
    }

    pub fn forward(&self, x: &[f64]) -> Result<Forward, NetworkError> {
        let g = self.logits(x)?;
        let f = softmax(&g);
        Ok(Forward { g, f })
    }
}

/// `exp(g_y) / sum_l exp(g_l)` with the maximum subtracted first.
pub fn softmax(g: &[f64]) -> Vec<f64> {
    let m = g.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = g.iter().map(|v| (v - m).exp()).collect();
    let total: f64 = e.iter().sum();
    e.into_iter().map(|v| v / total).collect()
}
