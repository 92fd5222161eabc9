//! A minimal CNN engine: forward pass, exact backpropagation and plain SGD.
//!
//! Feature maps are laid out channel-major (`[c, h, w]`); images arrive as
//! `[h, w, c]` and are transposed on entry. All arithmetic is `f64`.

mod data;
pub mod io;
mod train;

pub use data::{synthetic_dataset, Dataset, SyntheticConfig};
pub use io::{DatasetManifest, ModelManifest, ParamFiles};
pub use train::{train, TrainConfig, TrainOutcome};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corruptions::Image;
use crate::rng::Prng;
use crate::tensor::{Tensor, TensorError};

#[derive(Debug, Error)]
pub enum NetError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("empty batch")]
    EmptyBatch,
    #[error("loss became non-finite at epoch {epoch}, step {step}")]
    NonFiniteLoss { epoch: usize, step: usize },
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed manifest {path}: {source}")]
    Manifest {
        path: String,
        #[source]
        source: serde_json::Error,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum LayerSpec {
    Conv2d {
        filters: usize,
        kernel: usize,
        stride: usize,
        relu: bool,
    },
    MaxPool {
        size: usize,
    },
    Flatten,
    Dense {
        units: usize,
        relu: bool,
    },
}

impl LayerSpec {
    pub fn has_params(&self) -> bool {
        matches!(self, LayerSpec::Conv2d { .. } | LayerSpec::Dense { .. })
    }
}

/// Activation shape between layers.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ActShape {
    Map { c: usize, h: usize, w: usize },
    Flat(usize),
}

impl ActShape {
    pub fn len(&self) -> usize {
        match *self {
            ActShape::Map { c, h, w } => c * h * w,
            ActShape::Flat(n) => n,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dims(&self) -> Vec<usize> {
        match *self {
            ActShape::Map { c, h, w } => vec![c, h, w],
            ActShape::Flat(n) => vec![n],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelSpec {
    /// `[h, w, channels]`
    pub input: [usize; 3],
    pub classes: usize,
    pub layers: Vec<LayerSpec>,
}

impl ModelSpec {
    /// Two 3x3 conv layers and a dense head, sized for small images.
    pub fn desk_cnn(input: [usize; 3], classes: usize) -> Self {
        Self {
            input,
            classes,
            layers: vec![
                LayerSpec::Conv2d {
                    filters: 6,
                    kernel: 3,
                    stride: 1,
                    relu: true,
                },
                LayerSpec::Conv2d {
                    filters: 8,
                    kernel: 3,
                    stride: 1,
                    relu: true,
                },
                LayerSpec::Flatten,
                LayerSpec::Dense {
                    units: classes,
                    relu: false,
                },
            ],
        }
    }

    /// Output shape of every layer, validating that consecutive layers compose.
    pub fn shapes(&self) -> Result<Vec<ActShape>, NetError> {
        let [h, w, ch] = self.input;
        if h == 0 || w == 0 || ch == 0 || self.classes == 0 {
            return Err(NetError::ShapeMismatch("empty input or zero classes".into()));
        }
        let mut cur = ActShape::Map { c: ch, h, w };
        let mut out = Vec::with_capacity(self.layers.len());
        for (idx, layer) in self.layers.iter().enumerate() {
            cur = match (*layer, cur) {
                (
                    LayerSpec::Conv2d {
                        filters,
                        kernel,
                        stride,
                        ..
                    },
                    ActShape::Map { h, w, .. },
                ) => {
                    if filters == 0 || kernel == 0 || stride == 0 || kernel > h || kernel > w {
                        return Err(NetError::ShapeMismatch(format!(
                            "layer {idx}: conv kernel {kernel} does not fit {h}x{w}"
                        )));
                    }
                    ActShape::Map {
                        c: filters,
                        h: (h - kernel) / stride + 1,
                        w: (w - kernel) / stride + 1,
                    }
                }
                (LayerSpec::MaxPool { size }, ActShape::Map { c, h, w }) => {
                    if size == 0 || size > h || size > w {
                        return Err(NetError::ShapeMismatch(format!(
                            "layer {idx}: pool {size} does not fit {h}x{w}"
                        )));
                    }
                    ActShape::Map {
                        c,
                        h: h / size,
                        w: w / size,
                    }
                }
                (LayerSpec::Flatten, s) => ActShape::Flat(s.len()),
                (LayerSpec::Dense { units, .. }, ActShape::Flat(_)) if units > 0 => ActShape::Flat(units),
                (l, s) => {
                    return Err(NetError::ShapeMismatch(format!(
                        "layer {idx}: {l:?} cannot follow {s:?}"
                    )))
                }
            };
            out.push(cur);
        }
        match out.last() {
            Some(ActShape::Flat(n)) if *n == self.classes => Ok(out),
            other => Err(NetError::ShapeMismatch(format!(
                "final layer must be flat with {} units, got {other:?}",
                self.classes
            ))),
        }
    }

    /// Index of the last conv layer, the default clustering representation.
    pub fn last_conv_layer(&self) -> Option<usize> {
        self.layers.iter().rposition(|l| matches!(l, LayerSpec::Conv2d { .. }))
    }

    /// Indices of layers carrying trainable parameters (conv and dense).
    pub fn param_layers(&self) -> Vec<usize> {
        self.layers
            .iter()
            .enumerate()
            .filter(|(_, l)| l.has_params())
            .map(|(i, _)| i)
            .collect()
    }

    fn input_shapes(&self) -> Result<Vec<ActShape>, NetError> {
        let [h, w, c] = self.input;
        let outs = self.shapes()?;
        let mut ins = vec![ActShape::Map { c, h, w }];
        ins.extend_from_slice(&outs[..outs.len() - 1]);
        Ok(ins)
    }
}

/// Parameters of one layer; empty for pooling and flatten.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct LayerParams {
    pub weight: Vec<f64>,
    pub weight_shape: Vec<usize>,
    pub bias: Vec<f64>,
}

impl LayerParams {
    pub fn is_empty(&self) -> bool {
        self.weight.is_empty() && self.bias.is_empty()
    }

    pub fn len(&self) -> usize {
        self.weight.len() + self.bias.len()
    }

    /// Weight then bias, as one flat vector.
    pub fn flattened(&self) -> Vec<f64> {
        let mut v = self.weight.clone();
        v.extend_from_slice(&self.bias);
        v
    }

    fn zeros_like(&self) -> Self {
        Self {
            weight: vec![0.0; self.weight.len()],
            weight_shape: self.weight_shape.clone(),
            bias: vec![0.0; self.bias.len()],
        }
    }
}

/// Per-layer parameters, aligned index-for-index with `ModelSpec::layers`.
#[derive(Debug, Clone, PartialEq)]
pub struct Weights {
    pub layers: Vec<LayerParams>,
}

impl Weights {
    /// Uniform He-style init, `U(-b, b)` with `b = sqrt(6 / fan_in)`, zero biases.
    pub fn init(spec: &ModelSpec, seed: u64) -> Result<Self, NetError> {
        let ins = spec.input_shapes()?;
        let mut rng = Prng::with_stream(seed, 1);
        let layers = spec
            .layers
            .iter()
            .zip(&ins)
            .map(|(layer, input)| match (*layer, *input) {
                (LayerSpec::Conv2d { filters, kernel, .. }, ActShape::Map { c, .. }) => {
                    let fan_in = c * kernel * kernel;
                    let bound = (6.0 / fan_in as f64).sqrt();
                    LayerParams {
                        weight: (0..filters * fan_in)
                            .map(|_| rng.uniform_range(-bound, bound))
                            .collect(),
                        weight_shape: vec![filters, c, kernel, kernel],
                        bias: vec![0.0; filters],
                    }
                }
                (LayerSpec::Dense { units, .. }, ActShape::Flat(n)) => {
                    let bound = (6.0 / n as f64).sqrt();
                    LayerParams {
                        weight: (0..units * n).map(|_| rng.uniform_range(-bound, bound)).collect(),
                        weight_shape: vec![units, n],
                        bias: vec![0.0; units],
                    }
                }
                _ => LayerParams::default(),
            })
            .collect();
        Ok(Self { layers })
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            layers: self.layers.iter().map(LayerParams::zeros_like).collect(),
        }
    }

    pub fn num_params(&self) -> usize {
        self.layers.iter().map(LayerParams::len).sum()
    }

    pub fn l2_norm(&self) -> f64 {
        self.layers
            .iter()
            .flat_map(|l| l.weight.iter().chain(&l.bias))
            .map(|v| v * v)
            .sum::<f64>()
            .sqrt()
    }

    /// `self += alpha * other`
    pub fn axpy(&mut self, alpha: f64, other: &Weights) {
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            a.weight.iter_mut().zip(&b.weight).for_each(|(x, y)| *x += alpha * y);
            a.bias.iter_mut().zip(&b.bias).for_each(|(x, y)| *x += alpha * y);
        }
    }

    pub fn scale(&mut self, alpha: f64) {
        for l in &mut self.layers {
            l.weight.iter_mut().chain(l.bias.iter_mut()).for_each(|x| *x *= alpha);
        }
    }

    /// Parameter layers only, each flattened (weight then bias).
    pub fn param_vectors(&self) -> Vec<Vec<f64>> {
        self.layers
            .iter()
            .filter(|l| !l.is_empty())
            .map(LayerParams::flattened)
            .collect()
    }

    /// Rounds every value through `f32`, i.e. what a save/load cycle yields.
    pub fn quantized(&self) -> Self {
        let q = |v: &Vec<f64>| v.iter().map(|&x| f64::from(x as f32)).collect();
        Self {
            layers: self
                .layers
                .iter()
                .map(|l| LayerParams {
                    weight: q(&l.weight),
                    weight_shape: l.weight_shape.clone(),
                    bias: q(&l.bias),
                })
                .collect(),
        }
    }

    fn check(&self, spec: &ModelSpec) -> Result<(), NetError> {
        let reference = Weights::init(spec, 0)?;
        if self.layers.len() != reference.layers.len() {
            return Err(NetError::ShapeMismatch(format!(
                "weights have {} layers, spec has {}",
                self.layers.len(),
                reference.layers.len()
            )));
        }
        for (idx, (a, b)) in self.layers.iter().zip(&reference.layers).enumerate() {
            if a.weight.len() != b.weight.len() || a.bias.len() != b.bias.len() || a.weight_shape != b.weight_shape {
                return Err(NetError::ShapeMismatch(format!(
                    "layer {idx}: weight shape {:?} / bias {} vs expected {:?} / {}",
                    a.weight_shape,
                    a.bias.len(),
                    b.weight_shape,
                    b.bias.len()
                )));
            }
        }
        Ok(())
    }
}

/// One layer's output for a single sample.
#[derive(Debug, Clone, PartialEq)]
pub struct Activation {
    pub shape: ActShape,
    pub data: Vec<f64>,
}

impl Activation {
    pub fn to_tensor(&self) -> Result<Tensor, TensorError> {
        Tensor::from_f64(self.shape.dims(), &self.data)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForwardPass {
    pub logits: Vec<f64>,
    /// Output of every layer, post-activation.
    pub activations: Vec<Activation>,
}

impl ForwardPass {
    pub fn predicted(&self) -> usize {
        argmax(&self.logits)
    }
}

/// Model architecture plus its parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    spec: ModelSpec,
    weights: Weights,
    shapes: Vec<ActShape>,
}

impl Model {
    pub fn new(spec: ModelSpec, weights: Weights) -> Result<Self, NetError> {
        let shapes = spec.shapes()?;
        weights.check(&spec)?;
        Ok(Self { spec, weights, shapes })
    }

    pub fn init(spec: ModelSpec, seed: u64) -> Result<Self, NetError> {
        let weights = Weights::init(&spec, seed)?;
        Self::new(spec, weights)
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn weights(&self) -> &Weights {
        &self.weights
    }

    pub fn weights_mut(&mut self) -> &mut Weights {
        &mut self.weights
    }

    pub fn into_weights(self) -> Weights {
        self.weights
    }

    pub fn layer_shapes(&self) -> &[ActShape] {
        &self.shapes
    }

    fn input_map(&self, img: &Image) -> Result<Vec<f64>, NetError> {
        if img.shape() != self.spec.input {
            return Err(NetError::ShapeMismatch(format!(
                "image {:?} vs model input {:?}",
                img.shape(),
                self.spec.input
            )));
        }
        let [h, w, c] = self.spec.input;
        let src = img.tensor().data();
        let mut out = vec![0.0; h * w * c];
        for y in 0..h {
            for x in 0..w {
                for ch in 0..c {
                    out[(ch * h + y) * w + x] = f64::from(src[(y * w + x) * c + ch]);
                }
            }
        }
        Ok(out)
    }

    pub fn forward(&self, img: &Image) -> Result<ForwardPass, NetError> {
        let input = self.input_map(img)?;
        let acts = self.forward_raw(&input);
        let activations: Vec<Activation> = acts
            .into_iter()
            .zip(&self.shapes)
            .map(|(data, &shape)| Activation { shape, data })
            .collect();
        let logits = activations.last().map(|a| a.data.clone()).unwrap_or_default();
        Ok(ForwardPass { logits, activations })
    }

    pub fn predict(&self, img: &Image) -> Result<usize, NetError> {
        Ok(self.forward(img)?.predicted())
    }

    /// Percentage of correctly classified samples, in `[0, 100]`.
    pub fn accuracy(&self, data: &Dataset) -> Result<f64, NetError> {
        if data.is_empty() {
            return Err(NetError::EmptyBatch);
        }
        let hits = crate::par::try_map_range(data.len(), |i| {
            self.predict(&data.images()[i])
                .map(|p| usize::from(p == data.labels()[i]))
        })?;
        Ok(100.0 * hits.iter().sum::<usize>() as f64 / data.len() as f64)
    }

    fn forward_raw(&self, input: &[f64]) -> Vec<Vec<f64>> {
        let mut outs: Vec<Vec<f64>> = Vec::with_capacity(self.spec.layers.len());
        let [h0, w0, c0] = self.spec.input;
        let mut in_shape = ActShape::Map { c: c0, h: h0, w: w0 };
        for (idx, layer) in self.spec.layers.iter().enumerate() {
            let x: &[f64] = outs.last().map(Vec::as_slice).unwrap_or(input);
            let params = &self.weights.layers[idx];
            let out_shape = self.shapes[idx];
            let y = match *layer {
                LayerSpec::Conv2d {
                    kernel, stride, relu, ..
                } => {
                    let mut y = conv_forward(x, in_shape, out_shape, params, kernel, stride);
                    if relu {
                        y.iter_mut().for_each(|v| *v = v.max(0.0));
                    }
                    y
                }
                LayerSpec::MaxPool { size } => maxpool_forward(x, in_shape, out_shape, size).0,
                LayerSpec::Flatten => x.to_vec(),
                LayerSpec::Dense { relu, .. } => {
                    let mut y = dense_forward(x, params);
                    if relu {
                        y.iter_mut().for_each(|v| *v = v.max(0.0));
                    }
                    y
                }
            };
            outs.push(y);
            in_shape = out_shape;
        }
        outs
    }

    /// Mean cross-entropy over `indices` of `data` and its exact gradient.
    pub fn grad(&self, data: &Dataset, indices: &[usize]) -> Result<(f64, Weights), NetError> {
        if indices.is_empty() {
            return Err(NetError::EmptyBatch);
        }
        let per_sample = crate::par::try_map_range(indices.len(), |k| {
            let i = indices[k];
            let img = data
                .images()
                .get(i)
                .ok_or_else(|| NetError::ShapeMismatch(format!("sample index {i} out of range")))?;
            self.sample_grad(img, data.labels()[i])
        })?;
        let mut total = self.weights.zeros_like();
        let mut loss = 0.0;
        for (l, g) in &per_sample {
            loss += l;
            total.axpy(1.0, g);
        }
        let scale = 1.0 / indices.len() as f64;
        total.scale(scale);
        Ok((loss * scale, total))
    }

    /// Cross-entropy of a single sample and its gradient.
    pub fn sample_grad(&self, img: &Image, label: usize) -> Result<(f64, Weights), NetError> {
        if label >= self.spec.classes {
            return Err(NetError::ShapeMismatch(format!(
                "label {label} >= classes {}",
                self.spec.classes
            )));
        }
        let input = self.input_map(img)?;
        let acts = self.forward_raw(&input);
        let logits = acts.last().expect("at least one layer");
        let probs = softmax(logits);
        let loss = -probs[label].max(f64::MIN_POSITIVE).ln();

        let mut grads = self.weights.zeros_like();
        let mut delta: Vec<f64> = probs;
        delta[label] -= 1.0;

        let [h0, w0, c0] = self.spec.input;
        for idx in (0..self.spec.layers.len()).rev() {
            let x: &[f64] = if idx == 0 { &input } else { &acts[idx - 1] };
            let y = &acts[idx];
            let in_shape = if idx == 0 {
                ActShape::Map { c: c0, h: h0, w: w0 }
            } else {
                self.shapes[idx - 1]
            };
            let out_shape = self.shapes[idx];
            let params = &self.weights.layers[idx];
            delta = match self.spec.layers[idx] {
                LayerSpec::Conv2d {
                    kernel, stride, relu, ..
                } => {
                    if relu {
                        relu_mask(&mut delta, y);
                    }
                    conv_backward(
                        x,
                        &delta,
                        in_shape,
                        out_shape,
                        params,
                        kernel,
                        stride,
                        &mut grads.layers[idx],
                    )
                }
                LayerSpec::MaxPool { size } => {
                    let (_, arg) = maxpool_forward(x, in_shape, out_shape, size);
                    let mut dx = vec![0.0; x.len()];
                    for (o, &src) in arg.iter().enumerate() {
                        dx[src] += delta[o];
                    }
                    dx
                }
                LayerSpec::Flatten => delta,
                LayerSpec::Dense { relu, .. } => {
                    if relu {
                        relu_mask(&mut delta, y);
                    }
                    dense_backward(x, &delta, params, &mut grads.layers[idx])
                }
            };
        }
        Ok((loss, grads))
    }
}

fn relu_mask(delta: &mut [f64], out: &[f64]) {
    delta
        .iter_mut()
        .zip(out)
        .filter(|(_, &o)| o <= 0.0)
        .for_each(|(d, _)| *d = 0.0);
}

fn conv_forward(
    x: &[f64],
    in_shape: ActShape,
    out_shape: ActShape,
    p: &LayerParams,
    kernel: usize,
    stride: usize,
) -> Vec<f64> {
    let (ActShape::Map { c: ci, h: hi, w: wi }, ActShape::Map { c: co, h: ho, w: wo }) = (in_shape, out_shape) else {
        unreachable!("conv shapes validated by ModelSpec::shapes")
    };
    let mut y = vec![0.0; co * ho * wo];
    for f in 0..co {
        for oy in 0..ho {
            for ox in 0..wo {
                let mut acc = p.bias[f];
                for c in 0..ci {
                    for ky in 0..kernel {
                        let row = (c * hi + oy * stride + ky) * wi + ox * stride;
                        let wrow = ((f * ci + c) * kernel + ky) * kernel;
                        for kx in 0..kernel {
                            acc += p.weight[wrow + kx] * x[row + kx];
                        }
                    }
                }
                y[(f * ho + oy) * wo + ox] = acc;
            }
        }
    }
    y
}

#[allow(clippy::too_many_arguments)]
fn conv_backward(
    x: &[f64],
    dy: &[f64],
    in_shape: ActShape,
    out_shape: ActShape,
    p: &LayerParams,
    kernel: usize,
    stride: usize,
    g: &mut LayerParams,
) -> Vec<f64> {
    let (ActShape::Map { c: ci, h: hi, w: wi }, ActShape::Map { c: co, h: ho, w: wo }) = (in_shape, out_shape) else {
        unreachable!("conv shapes validated by ModelSpec::shapes")
    };
    let mut dx = vec![0.0; x.len()];
    for f in 0..co {
        for oy in 0..ho {
            for ox in 0..wo {
                let d = dy[(f * ho + oy) * wo + ox];
                if d == 0.0 {
                    continue;
                }
                g.bias[f] += d;
                for c in 0..ci {
                    for ky in 0..kernel {
                        let row = (c * hi + oy * stride + ky) * wi + ox * stride;
                        let wrow = ((f * ci + c) * kernel + ky) * kernel;
                        for kx in 0..kernel {
                            g.weight[wrow + kx] += d * x[row + kx];
                            dx[row + kx] += d * p.weight[wrow + kx];
                        }
                    }
                }
            }
        }
    }
    dx
}

/// Returns pooled values and, per output, the flat input index of the max.
fn maxpool_forward(x: &[f64], in_shape: ActShape, out_shape: ActShape, size: usize) -> (Vec<f64>, Vec<usize>) {
    let (ActShape::Map { h: hi, w: wi, .. }, ActShape::Map { c, h: ho, w: wo }) = (in_shape, out_shape) else {
        unreachable!("pool shapes validated by ModelSpec::shapes")
    };
    let mut y = vec![0.0; c * ho * wo];
    let mut arg = vec![0; c * ho * wo];
    for ch in 0..c {
        for oy in 0..ho {
            for ox in 0..wo {
                let mut best = f64::NEG_INFINITY;
                let mut best_idx = 0;
                for ky in 0..size {
                    for kx in 0..size {
                        let idx = (ch * hi + oy * size + ky) * wi + ox * size + kx;
                        if x[idx] > best {
                            best = x[idx];
                            best_idx = idx;
                        }
                    }
                }
                let o = (ch * ho + oy) * wo + ox;
                y[o] = best;
                arg[o] = best_idx;
            }
        }
    }
    (y, arg)
}

fn dense_forward(x: &[f64], p: &LayerParams) -> Vec<f64> {
    let n = x.len();
    p.bias
        .iter()
        .enumerate()
        .map(|(u, b)| {
            b + p.weight[u * n..(u + 1) * n]
                .iter()
                .zip(x)
                .map(|(w, v)| w * v)
                .sum::<f64>()
        })
        .collect()
}

fn dense_backward(x: &[f64], dy: &[f64], p: &LayerParams, g: &mut LayerParams) -> Vec<f64> {
    let n = x.len();
    let mut dx = vec![0.0; n];
    for (u, &d) in dy.iter().enumerate() {
        g.bias[u] += d;
        let row = &p.weight[u * n..(u + 1) * n];
        let grow = &mut g.weight[u * n..(u + 1) * n];
        for i in 0..n {
            grow[i] += d * x[i];
            dx[i] += d * row[i];
        }
    }
    dx
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|v| (v - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

/// Index of the largest value; ties go to the lowest index.
pub fn argmax(v: &[f64]) -> usize {
    v.iter()
        .enumerate()
        .fold(
            (0, f64::NEG_INFINITY),
            |(bi, bv), (i, &x)| if x > bv { (i, x) } else { (bi, bv) },
        )
        .0
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_dense() -> ModelSpec {
        ModelSpec {
            input: [1, 3, 1],
            classes: 2,
            layers: vec![LayerSpec::Flatten, LayerSpec::Dense { units: 2, relu: false }],
        }
    }

    #[test]
    fn dense_first_column_on_unit_input() {
        let spec = tiny_dense();
        let mut w = Weights::init(&spec, 0).unwrap();
        w.layers[1].weight = vec![0.1, 0.2, 0.3, 0.4, 0.5, 0.6];
        w.layers[1].bias = vec![0.0, 0.0];
        let model = Model::new(spec, w).unwrap();
        let img = Image::from_f64_clamped([1, 3, 1], &[1.0, 0.0, 0.0]).unwrap();
        let out = model.forward(&img).unwrap();
        assert_eq!(out.logits, vec![0.1, 0.4]);
    }

    #[test]
    fn zero_weights_give_uniform_softmax() {
        let spec = ModelSpec::desk_cnn([8, 8, 1], 4);
        let w = Weights::init(&spec, 3).unwrap().zeros_like();
        let model = Model::new(spec, w).unwrap();
        let img = Image::filled([8, 8, 1], 0.7).unwrap();
        let out = model.forward(&img).unwrap();
        assert!(out.logits.iter().all(|&v| v == 0.0));
        assert!(softmax(&out.logits).iter().all(|&p| (p - 0.25).abs() < 1e-15));
    }

    #[test]
    fn conv_output_extent() {
        let spec = ModelSpec {
            input: [8, 8, 1],
            classes: 2,
            layers: vec![
                LayerSpec::Conv2d {
                    filters: 2,
                    kernel: 3,
                    stride: 1,
                    relu: true,
                },
                LayerSpec::MaxPool { size: 2 },
                LayerSpec::Flatten,
                LayerSpec::Dense { units: 2, relu: false },
            ],
        };
        let shapes = spec.shapes().unwrap();
        assert_eq!(shapes[0], ActShape::Map { c: 2, h: 6, w: 6 });
        assert_eq!(shapes[1], ActShape::Map { c: 2, h: 3, w: 3 });
        assert_eq!(shapes[2], ActShape::Flat(18));
    }

    #[test]
    fn rejects_bad_specs() {
        let mut spec = tiny_dense();
        spec.classes = 3;
        assert!(matches!(spec.shapes(), Err(NetError::ShapeMismatch(_))));
        let spec = ModelSpec {
            input: [4, 4, 1],
            classes: 2,
            layers: vec![LayerSpec::Dense { units: 2, relu: false }],
        };
        assert!(spec.shapes().is_err());
        let spec = ModelSpec::desk_cnn([8, 8, 1], 2);
        let model = Model::init(spec, 0).unwrap();
        let wrong = Image::filled([8, 8, 3], 0.5).unwrap();
        assert!(matches!(model.forward(&wrong), Err(NetError::ShapeMismatch(_))));
    }

    #[test]
    fn forward_is_pure() {
        let model = Model::init(ModelSpec::desk_cnn([8, 8, 1], 3), 9).unwrap();
        let img = Image::from_f64_clamped(
            [8, 8, 1],
            &(0..64).map(|i| (i as f64 * 0.37).sin().abs()).collect::<Vec<_>>(),
        )
        .unwrap();
        assert_eq!(model.forward(&img).unwrap(), model.forward(&img).unwrap());
    }

    #[test]
    fn zero_model_bias_gradient_closed_form() {
        let spec = ModelSpec::desk_cnn([8, 8, 1], 2);
        let zero = Weights::init(&spec, 0).unwrap().zeros_like();
        let model = Model::new(spec, zero).unwrap();
        let data = synthetic_dataset(&SyntheticConfig {
            samples: 4,
            classes: 2,
            shape: [8, 8, 1],
            seed: 1,
        })
        .unwrap();
        let (loss, g) = model.grad(&data, &[0, 1, 2, 3]).unwrap();
        assert!((loss - 2f64.ln()).abs() < 1e-12);
        // softmax(0) = [0.5, 0.5]; mean one-hot of a balanced batch = [0.5, 0.5]
        let head = &g.layers[3];
        assert!(head.bias.iter().all(|&b| b.abs() < 1e-15));

        let (_, g1) = model.grad(&data, &[0, 2]).unwrap();
        let expected: Vec<f64> = [0.5, 0.5]
            .iter()
            .enumerate()
            .map(|(k, p)| p - if data.labels()[0] == k { 1.0 } else { 0.0 })
            .collect();
        assert_eq!(g1.layers[3].bias, expected);
    }

    #[test]
    fn duplicated_batch_keeps_mean() {
        let model = Model::init(ModelSpec::desk_cnn([8, 8, 1], 2), 4).unwrap();
        let data = synthetic_dataset(&SyntheticConfig {
            samples: 6,
            classes: 2,
            shape: [8, 8, 1],
            seed: 2,
        })
        .unwrap();
        let (l1, g1) = model.grad(&data, &[0, 1, 2]).unwrap();
        let (l2, g2) = model.grad(&data, &[0, 1, 2, 0, 1, 2]).unwrap();
        assert!((l1 - l2).abs() < 1e-12);
        for (a, b) in g1
            .param_vectors()
            .iter()
            .flatten()
            .zip(g2.param_vectors().iter().flatten())
        {
            assert!((a - b).abs() < 1e-12);
        }
        assert!(matches!(model.grad(&data, &[]), Err(NetError::EmptyBatch)));
    }

    #[test]
    fn argmax_ties_to_lowest() {
        assert_eq!(argmax(&[1.0, 3.0, 3.0]), 1);
    }
}
