use std::sync::atomic::{AtomicU64, Ordering};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::conv::{col2im, im2col, ConvGeometry};
use super::layer::LayerSpec;
use crate::error::{Error, Result};
use crate::tensor::{matmul, Layout, Real, Tensor};

static NEXT_VERSION: AtomicU64 = AtomicU64::new(1);

fn fresh_version() -> u64 {
    NEXT_VERSION.fetch_add(1, Ordering::Relaxed)
}

/// Weight and bias of one Dense or Conv2D layer.
#[derive(Debug, Clone, PartialEq)]
pub struct Params<T = f32> {
    pub weight: Tensor<T>,
    pub bias: Tensor<T>,
}

/// Which parameter tensors an update may touch.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParamGroups {
    All,
    WeightsOnly,
    BiasesOnly,
}

impl ParamGroups {
    pub fn weights(self) -> bool {
        matches!(self, ParamGroups::All | ParamGroups::WeightsOnly)
    }

    pub fn biases(self) -> bool {
        matches!(self, ParamGroups::All | ParamGroups::BiasesOnly)
    }
}

/// Ordered feed-forward network computing `y = W·x + b` per weight layer.
///
/// Every parameter mutation goes through `&mut self` methods, which bump an
/// internal version so activations from an older state are rejected by
/// [`Network::backward`].
#[derive(Debug)]
pub struct Network<T = f32> {
    input_shape: Vec<usize>,
    layers: Vec<LayerSpec>,
    shapes: Vec<Vec<usize>>,
    params: Vec<Option<Params<T>>>,
    names: Vec<Option<String>>,
    seed: u64,
    version: u64,
}

impl<T: Real> Clone for Network<T> {
    fn clone(&self) -> Self {
        Self {
            input_shape: self.input_shape.clone(),
            layers: self.layers.clone(),
            shapes: self.shapes.clone(),
            params: self.params.clone(),
            names: self.names.clone(),
            seed: self.seed,
            version: fresh_version(),
        }
    }
}

impl<T: Real> PartialEq for Network<T> {
    /// Architecture and parameters; the internal version is ignored.
    fn eq(&self, other: &Self) -> bool {
        self.input_shape == other.input_shape
            && self.layers == other.layers
            && self.params == other.params
            && self.seed == other.seed
    }
}

/// Per-layer activations of one forward pass. `activations[0]` is the input
/// and `activations[i + 1]` the output of layer `i`.
#[derive(Debug, Clone)]
pub struct Forward<T = f32> {
    pub activations: Vec<Tensor<T>>,
    logits_index: usize,
    version: u64,
}

impl<T: Real> Forward<T> {
    /// Pre-softmax scores, shape `(batch, classes)`.
    pub fn logits(&self) -> &Tensor<T> {
        &self.activations[self.logits_index]
    }

    pub fn output(&self) -> &Tensor<T> {
        self.activations.last().expect("at least the input")
    }
}

/// Per-layer parameter gradients mirroring [`Network`] parameter shapes.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients<T = f32> {
    pub layers: Vec<Option<Params<T>>>,
}

impl<T: Real> Network<T> {
    /// Builds a network and initializes weights with a seeded fan-in-scaled
    /// uniform distribution `U(-a, a)`, `a = sqrt(3 / fan_in)`. Biases start
    /// at zero.
    pub fn new(input_shape: Vec<usize>, layers: Vec<LayerSpec>, seed: u64) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::Config("network needs at least one layer".into()));
        }
        if let Some(i) = layers.iter().position(|l| *l == LayerSpec::Softmax) {
            if i + 1 != layers.len() {
                return Err(Error::LayerShape { layer: i, message: "softmax must be the last layer".into() });
            }
        }
        let mut shapes = vec![input_shape.clone()];
        for (i, layer) in layers.iter().enumerate() {
            let out = layer
                .output_shape(shapes.last().unwrap())
                .map_err(|e| Error::LayerShape { layer: i, message: e.to_string() })?;
            shapes.push(out);
        }

        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = Vec::with_capacity(layers.len());
        for layer in &layers {
            params.push(layer.param_shapes().map(|(w_shape, b_shape)| {
                let limit = (3.0 / layer.fan_in().unwrap() as f64).sqrt();
                let n: usize = w_shape.iter().product();
                let data = (0..n).map(|_| T::from_f64_lossy(rng.random_range(-limit..limit))).collect();
                Params { weight: Tensor::new(w_shape, data).unwrap(), bias: Tensor::zeros(b_shape) }
            }));
        }

        let names = default_names(&layers);
        Ok(Self { input_shape, layers, shapes, params, names, seed, version: fresh_version() })
    }

    /// Replaces all parameters, checking shapes against the layer specs.
    pub fn with_params(mut self, params: Vec<Option<Params<T>>>) -> Result<Self> {
        if params.len() != self.layers.len() {
            return Err(Error::Shape(format!("{} parameter slots for {} layers", params.len(), self.layers.len())));
        }
        for (i, (layer, p)) in self.layers.iter().zip(&params).enumerate() {
            match (layer.param_shapes(), p) {
                (None, None) => {}
                (Some((ws, bs)), Some(p)) if p.weight.shape() == ws && p.bias.shape() == bs => {}
                _ => {
                    return Err(Error::LayerShape { layer: i, message: format!("parameters do not match {layer}") })
                }
            }
        }
        self.params = params;
        self.version = fresh_version();
        Ok(self)
    }

    pub fn input_shape(&self) -> &[usize] {
        &self.input_shape
    }

    pub fn layers(&self) -> &[LayerSpec] {
        &self.layers
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn classes(&self) -> usize {
        self.shapes.last().unwrap().iter().product()
    }

    pub fn params(&self) -> &[Option<Params<T>>] {
        &self.params
    }

    pub fn param(&self, layer: usize) -> Option<&Params<T>> {
        self.params.get(layer).and_then(Option::as_ref)
    }

    pub fn param_mut(&mut self, layer: usize) -> Option<&mut Params<T>> {
        self.version = fresh_version();
        self.params.get_mut(layer).and_then(Option::as_mut)
    }

    /// Name of a weight-bearing layer (`conv1`, `conv2`, `ip1`, ...).
    pub fn layer_name(&self, layer: usize) -> Option<&str> {
        self.names.get(layer).and_then(|n| n.as_deref())
    }

    /// `(layer index, name)` for each weight-bearing layer in network order.
    pub fn weight_layers(&self) -> impl Iterator<Item = (usize, &str)> + '_ {
        self.names.iter().enumerate().filter_map(|(i, n)| n.as_deref().map(|n| (i, n)))
    }

    pub fn parameter_count(&self) -> usize {
        self.params.iter().flatten().map(|p| p.weight.len() + p.bias.len()).sum()
    }

    /// Same architecture and seed in another precision.
    pub fn cast<U: Real>(&self) -> Network<U> {
        Network {
            input_shape: self.input_shape.clone(),
            layers: self.layers.clone(),
            shapes: self.shapes.clone(),
            params: self
                .params
                .iter()
                .map(|p| p.as_ref().map(|p| Params { weight: p.weight.cast(), bias: p.bias.cast() }))
                .collect(),
            names: self.names.clone(),
            seed: self.seed,
            version: fresh_version(),
        }
    }

    /// Runs the batch `(batch, ..input_shape)` through every layer.
    pub fn forward(&self, batch: &Tensor<T>) -> Result<Forward<T>> {
        let bsz = *batch.shape().first().unwrap_or(&0);
        if batch.shape().len() != self.input_shape.len() + 1 || batch.shape()[1..] != self.input_shape[..] {
            return Err(Error::LayerShape {
                layer: 0,
                message: format!("batch shape {:?} does not match input {:?}", batch.shape(), self.input_shape),
            });
        }
        let mut activations = Vec::with_capacity(self.layers.len() + 1);
        activations.push(batch.clone());
        for (i, layer) in self.layers.iter().enumerate() {
            let input = activations.last().unwrap();
            let out = self.forward_layer(i, layer, input, bsz);
            activations.push(out);
        }
        let logits_index = if self.layers.last() == Some(&LayerSpec::Softmax) {
            self.layers.len() - 1
        } else {
            self.layers.len()
        };
        Ok(Forward { activations, logits_index, version: self.version })
    }

    fn out_shape(&self, layer: usize, batch: usize) -> Vec<usize> {
        let mut shape = vec![batch];
        shape.extend_from_slice(&self.shapes[layer + 1]);
        shape
    }

    fn forward_layer(&self, i: usize, layer: &LayerSpec, input: &Tensor<T>, batch: usize) -> Tensor<T> {
        let mut out = Tensor::zeros(self.out_shape(i, batch));
        match *layer {
            LayerSpec::Dense { inputs, outputs } => {
                let p = self.params[i].as_ref().unwrap();
                let o = out.data_mut();
                for row in o.chunks_exact_mut(outputs) {
                    row.copy_from_slice(p.bias.data());
                }
                matmul(batch, inputs, outputs, input.data(), Layout::Normal, p.weight.data(), Layout::Transposed, T::one(), o);
            }
            LayerSpec::Conv2D { filters, .. } => {
                let p = self.params[i].as_ref().unwrap();
                let g = self.geometry(i);
                let n = batch * g.out_len();
                let mut cols = vec![T::zero(); g.patch_len() * n];
                im2col(&g, input.data(), batch, &mut cols);
                let mut tmp = vec![T::zero(); filters * n];
                matmul(filters, g.patch_len(), n, p.weight.data(), Layout::Normal, &cols, Layout::Normal, T::zero(), &mut tmp);
                let o = out.data_mut();
                for f in 0..filters {
                    let b = p.bias.data()[f];
                    for s in 0..batch {
                        let src = &tmp[f * n + s * g.out_len()..f * n + (s + 1) * g.out_len()];
                        let dst = &mut o[(s * filters + f) * g.out_len()..(s * filters + f + 1) * g.out_len()];
                        for (d, &v) in dst.iter_mut().zip(src) {
                            *d = v + b;
                        }
                    }
                }
            }
            LayerSpec::MaxPool { size } => {
                let (c, h, w) = chw(&self.shapes[i]);
                let (oh, ow) = (h / size, w / size);
                let o = out.data_mut();
                for plane in 0..batch * c {
                    let src = &input.data()[plane * h * w..(plane + 1) * h * w];
                    for oy in 0..oh {
                        for ox in 0..ow {
                            let mut m = T::neg_infinity();
                            for dy in 0..size {
                                for &v in &src[(oy * size + dy) * w + ox * size..][..size] {
                                    if v > m {
                                        m = v;
                                    }
                                }
                            }
                            o[plane * oh * ow + oy * ow + ox] = m;
                        }
                    }
                }
            }
            LayerSpec::ReLU => {
                for (d, &v) in out.data_mut().iter_mut().zip(input.data()) {
                    *d = if v > T::zero() { v } else { T::zero() };
                }
            }
            LayerSpec::Softmax => {
                let classes = self.shapes[i].iter().product();
                out.data_mut().copy_from_slice(input.data());
                for row in out.data_mut().chunks_exact_mut(classes) {
                    softmax_in_place(row);
                }
            }
        }
        out
    }

    fn geometry(&self, layer: usize) -> ConvGeometry {
        let LayerSpec::Conv2D { kernel, stride, pad, .. } = self.layers[layer] else {
            unreachable!("geometry of non-conv layer")
        };
        let (channels, height, width) = chw(&self.shapes[layer]);
        let (_, out_h, out_w) = chw(&self.shapes[layer + 1]);
        ConvGeometry { channels, height, width, kernel, stride, pad, out_h, out_w }
    }

    /// Backpropagates `loss_grad` (gradient w.r.t. the logits) and returns
    /// gradients for every parameter.
    pub fn backward(&self, fwd: &Forward<T>, loss_grad: &Tensor<T>) -> Result<Gradients<T>> {
        self.backward_masked(fwd, loss_grad, ParamGroups::All)
    }

    /// Like [`Network::backward`] but skips computing gradients for groups
    /// outside `groups`; their slots hold zeros.
    pub fn backward_masked(&self, fwd: &Forward<T>, loss_grad: &Tensor<T>, groups: ParamGroups) -> Result<Gradients<T>> {
        if fwd.version != self.version {
            return Err(Error::StaleActivations("network parameters changed since the forward pass".into()));
        }
        if fwd.activations.len() != self.layers.len() + 1 {
            return Err(Error::StaleActivations(format!(
                "{} activations for {} layers",
                fwd.activations.len(),
                self.layers.len()
            )));
        }
        if loss_grad.shape() != fwd.logits().shape() {
            return Err(Error::Shape(format!(
                "loss gradient {:?} does not match logits {:?}",
                loss_grad.shape(),
                fwd.logits().shape()
            )));
        }
        let batch = loss_grad.shape()[0];
        let mut grads: Vec<Option<Params<T>>> = self
            .params
            .iter()
            .map(|p| p.as_ref().map(|p| Params { weight: Tensor::zeros(p.weight.shape().to_vec()), bias: Tensor::zeros(p.bias.shape().to_vec()) }))
            .collect();

        // The first layer that needs an input gradient is the earliest
        // weight-bearing layer; anything before it only feeds data.
        let first_param = self.params.iter().position(Option::is_some).unwrap_or(self.layers.len());
        let mut delta = loss_grad.clone();
        for i in (0..fwd.logits_index).rev() {
            let input = &fwd.activations[i];
            let output = &fwd.activations[i + 1];
            let need_input_grad = i > first_param;
            let mut grad_in = if need_input_grad { Some(Tensor::zeros(input.shape().to_vec())) } else { None };
            match self.layers[i] {
                LayerSpec::Dense { inputs, outputs } => {
                    let p = self.params[i].as_ref().unwrap();
                    let g = grads[i].as_mut().unwrap();
                    if groups.weights() {
                        matmul(outputs, batch, inputs, delta.data(), Layout::Transposed, input.data(), Layout::Normal, T::zero(), g.weight.data_mut());
                    }
                    if groups.biases() {
                        let db = g.bias.data_mut();
                        for row in delta.data().chunks_exact(outputs) {
                            for (d, &v) in db.iter_mut().zip(row) {
                                *d = *d + v;
                            }
                        }
                    }
                    if let Some(gi) = grad_in.as_mut() {
                        matmul(batch, outputs, inputs, delta.data(), Layout::Normal, p.weight.data(), Layout::Normal, T::zero(), gi.data_mut());
                    }
                }
                LayerSpec::Conv2D { filters, .. } => {
                    let p = self.params[i].as_ref().unwrap();
                    let geo = self.geometry(i);
                    let n = batch * geo.out_len();
                    // (batch, filters, out) -> (filters, batch·out)
                    let mut dy = vec![T::zero(); filters * n];
                    for s in 0..batch {
                        for f in 0..filters {
                            let src = &delta.data()[(s * filters + f) * geo.out_len()..(s * filters + f + 1) * geo.out_len()];
                            dy[f * n + s * geo.out_len()..f * n + (s + 1) * geo.out_len()].copy_from_slice(src);
                        }
                    }
                    let g = grads[i].as_mut().unwrap();
                    if groups.weights() {
                        let mut cols = vec![T::zero(); geo.patch_len() * n];
                        im2col(&geo, input.data(), batch, &mut cols);
                        matmul(filters, n, geo.patch_len(), &dy, Layout::Normal, &cols, Layout::Transposed, T::zero(), g.weight.data_mut());
                    }
                    if groups.biases() {
                        for (f, db) in g.bias.data_mut().iter_mut().enumerate() {
                            *db = dy[f * n..(f + 1) * n].iter().fold(T::zero(), |a, &v| a + v);
                        }
                    }
                    if let Some(gi) = grad_in.as_mut() {
                        let mut dcols = vec![T::zero(); geo.patch_len() * n];
                        matmul(geo.patch_len(), filters, n, p.weight.data(), Layout::Transposed, &dy, Layout::Normal, T::zero(), &mut dcols);
                        col2im(&geo, &dcols, batch, gi.data_mut());
                    }
                }
                LayerSpec::MaxPool { size } => {
                    if let Some(gi) = grad_in.as_mut() {
                        let (c, h, w) = chw(&self.shapes[i]);
                        let (oh, ow) = (h / size, w / size);
                        for plane in 0..batch * c {
                            let src = &input.data()[plane * h * w..(plane + 1) * h * w];
                            let dst = &mut gi.data_mut()[plane * h * w..(plane + 1) * h * w];
                            for oy in 0..oh {
                                for ox in 0..ow {
                                    let m = output.data()[plane * oh * ow + oy * ow + ox];
                                    // first maximum in raster order receives the gradient
                                    'win: for dy in 0..size {
                                        for dx in 0..size {
                                            let idx = (oy * size + dy) * w + ox * size + dx;
                                            if src[idx] == m {
                                                dst[idx] = dst[idx] + delta.data()[plane * oh * ow + oy * ow + ox];
                                                break 'win;
                                            }
                                        }
                                    }
                                }
                            }
                        }
                    }
                }
                LayerSpec::ReLU => {
                    if let Some(gi) = grad_in.as_mut() {
                        for ((d, &g), &y) in gi.data_mut().iter_mut().zip(delta.data()).zip(output.data()) {
                            *d = if y > T::zero() { g } else { T::zero() };
                        }
                    }
                }
                LayerSpec::Softmax => unreachable!("softmax is excluded from the logits range"),
            }
            match grad_in {
                Some(g) => delta = g,
                None => break,
            }
        }
        Ok(Gradients { layers: grads })
    }

    pub(crate) fn params_mut_raw(&mut self) -> &mut [Option<Params<T>>] {
        self.version = fresh_version();
        &mut self.params
    }
}

fn chw(shape: &[usize]) -> (usize, usize, usize) {
    (shape[0], shape[1], shape[2])
}

pub(crate) fn softmax_in_place<T: Real>(row: &mut [T]) {
    let max = row.iter().fold(T::neg_infinity(), |m, &v| m.max(v));
    let mut sum = T::zero();
    for v in row.iter_mut() {
        *v = (*v - max).exp();
        sum = sum + *v;
    }
    for v in row.iter_mut() {
        *v = *v / sum;
    }
}

fn default_names(layers: &[LayerSpec]) -> Vec<Option<String>> {
    let (mut conv, mut dense) = (0, 0);
    layers
        .iter()
        .map(|l| match l {
            LayerSpec::Conv2D { .. } => {
                conv += 1;
                Some(format!("conv{conv}"))
            }
            LayerSpec::Dense { .. } => {
                dense += 1;
                Some(format!("ip{dense}"))
            }
            _ => None,
        })
        .collect()
}

impl<T: Real> Gradients<T> {
    pub fn is_zero(&self) -> bool {
        self.layers
            .iter()
            .flatten()
            .all(|p| p.weight.data().iter().chain(p.bias.data()).all(|v| *v == T::zero()))
    }
}
