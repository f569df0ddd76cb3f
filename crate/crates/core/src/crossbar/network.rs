use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::array::TiledCrossbar;
use super::mapping::{conv_via_crossbar, map_conv_layer, map_dense_layer, ConvMapping, DenseMapping};
use super::variation::VariationModel;
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::nn::{LayerSpec, Network, Params};
use crate::quantizer::QuantizationScheme;
use crate::tensor::{Real, Tensor};

#[derive(Debug, Clone, PartialEq)]
enum Stage {
    Dense(DenseMapping),
    Conv(ConvMapping),
    Pool(usize),
    ReLU,
    Softmax,
}

/// A whole network with every weight layer mapped onto crossbars.
/// Inference runs per sample in 64-bit arithmetic.
#[derive(Debug, Clone, PartialEq)]
pub struct CrossbarNetwork {
    input_shape: Vec<usize>,
    layers: Vec<LayerSpec>,
    stages: Vec<Stage>,
    /// Seed of the source network, carried through [`CrossbarNetwork::read_back`].
    seed: u64,
}

/// Crossbar scale for one layer: the largest level magnitude when a scheme
/// is given (exact for 1-level weights), otherwise the smallest power of two
/// at least as large as every |w| (exact for any weights).
fn layer_scale<T: Real>(weights: &Tensor<T>, levels: Option<f64>) -> f64 {
    match levels {
        Some(q) => q,
        None => {
            let m = weights.max_abs();
            if m > 0.0 {
                2f64.powi(m.log2().ceil() as i32)
            } else {
                1.0
            }
        }
    }
}

impl CrossbarNetwork {
    /// Maps `net` layer by layer. With `bias_row` the biases are programmed
    /// onto the arrays (and see variation); otherwise they stay in the
    /// neuron circuit.
    pub fn map<T: Real>(net: &Network<T>, scheme: Option<&QuantizationScheme>, bias_row: bool) -> Result<Self> {
        if let Some(s) = scheme {
            s.check_covers(net)?;
        }
        let mut stages = Vec::with_capacity(net.layers().len());
        for (i, layer) in net.layers().iter().enumerate() {
            let q = net.layer_name(i).and_then(|n| scheme.and_then(|s| s.get(n))).map(|l| *l.magnitudes().last().unwrap());
            stages.push(match *layer {
                LayerSpec::Dense { .. } => {
                    let p = net.param(i).unwrap();
                    Stage::Dense(map_dense_layer(&p.weight, &p.bias, layer_scale(&p.weight, q), bias_row)?)
                }
                LayerSpec::Conv2D { stride, pad, .. } => {
                    let p = net.param(i).unwrap();
                    Stage::Conv(map_conv_layer(&p.weight, &p.bias, stride, pad, layer_scale(&p.weight, q), bias_row)?)
                }
                LayerSpec::MaxPool { size } => Stage::Pool(size),
                LayerSpec::ReLU => Stage::ReLU,
                LayerSpec::Softmax => Stage::Softmax,
            });
        }
        Ok(Self { input_shape: net.input_shape().to_vec(), layers: net.layers().to_vec(), stages, seed: net.seed() })
    }

    /// Every array of every layer, in network order.
    pub fn crossbars(&self) -> impl Iterator<Item = &TiledCrossbar> {
        self.stages.iter().filter_map(|s| match s {
            Stage::Dense(d) => Some(&d.xbar),
            Stage::Conv(c) => Some(&c.xbar),
            _ => None,
        })
    }

    /// Logits (pre-softmax outputs) for one sample.
    pub fn forward_sample(&self, x: &[f64]) -> Result<Vec<f64>> {
        let expected: usize = self.input_shape.iter().product();
        if x.len() != expected {
            return Err(Error::Shape(format!("sample has {} values, network expects {expected}", x.len())));
        }
        let mut shape = self.input_shape.clone();
        let mut v = x.to_vec();
        for (stage, layer) in self.stages.iter().zip(&self.layers) {
            match stage {
                Stage::Dense(d) => v = d.apply(&v)?,
                Stage::Conv(m) => v = conv_via_crossbar(&Tensor::new(shape.clone(), v)?, m)?.into_data(),
                Stage::Pool(size) => v = max_pool(&v, &shape, *size),
                Stage::ReLU => v.iter_mut().for_each(|a| *a = a.max(0.0)),
                Stage::Softmax => {}
            }
            shape = layer.output_shape(&shape)?;
        }
        Ok(v)
    }

    /// Argmax of the crossbar logits per sample; ties go to the lowest index.
    pub fn predict(&self, data: &Dataset) -> Result<Vec<usize>> {
        let per = data.sample_shape().iter().product::<usize>();
        data.images
            .data()
            .chunks_exact(per)
            .map(|s| {
                let x: Vec<f64> = s.iter().map(|&p| f64::from(p)).collect();
                let logits = self.forward_sample(&x)?;
                let mut best = 0;
                for (j, &v) in logits.iter().enumerate() {
                    if v > logits[best] {
                        best = j;
                    }
                }
                Ok(best)
            })
            .collect()
    }

    pub fn evaluate(&self, data: &Dataset) -> Result<f64> {
        if data.is_empty() {
            return Err(Error::EmptyDataset);
        }
        let p = self.predict(data)?;
        Ok(p.iter().zip(&data.labels).filter(|(a, b)| a == b).count() as f64 / data.len() as f64)
    }

    /// Copy with programming variation on every array. Layer `i` draws from
    /// ChaCha stream `i` of `model.seed`, so results do not depend on the
    /// other layers.
    pub fn with_variation(&self, model: &VariationModel) -> Result<Self> {
        model.validate()?;
        let mut out = self.clone();
        for (i, stage) in out.stages.iter_mut().enumerate() {
            let mut rng = ChaCha8Rng::seed_from_u64(model.seed);
            rng.set_stream(i as u64);
            match stage {
                Stage::Dense(d) => d.xbar = d.xbar.with_variation(model, &mut rng)?,
                Stage::Conv(c) => c.xbar = c.xbar.with_variation(model, &mut rng)?,
                _ => {}
            }
        }
        Ok(out)
    }

    /// Reads the effective (programmed) weights back into a network.
    pub fn read_back(&self) -> Result<Network<f64>> {
        let params = self
            .stages
            .iter()
            .map(|s| match s {
                Stage::Dense(d) => Some(d.read_back()),
                Stage::Conv(c) => Some(c.read_back()),
                _ => None,
            }
            .map(|(weight, bias)| Params { weight, bias }))
            .collect();
        Network::new(self.input_shape.clone(), self.layers.clone(), self.seed)?.with_params(params)
    }

    /// Text dump of every array, one block per weight layer.
    pub fn dump(&self) -> String {
        let mut out = String::new();
        for (i, xbar) in self.crossbars().enumerate() {
            out.push_str(&format!("layer {i}\n"));
            out.push_str(&xbar.dump());
        }
        out
    }
}

fn max_pool(v: &[f64], shape: &[usize], size: usize) -> Vec<f64> {
    let (c, h, w) = (shape[0], shape[1], shape[2]);
    let (oh, ow) = (h / size, w / size);
    let mut out = vec![0.0; c * oh * ow];
    for ch in 0..c {
        for oy in 0..oh {
            for ox in 0..ow {
                let mut m = f64::NEG_INFINITY;
                for dy in 0..size {
                    for dx in 0..size {
                        let a = v[(ch * h + oy * size + dy) * w + ox * size + dx];
                        if a > m {
                            m = a;
                        }
                    }
                }
                out[(ch * oh + oy) * ow + ox] = m;
            }
        }
    }
    out
}

/// Adds `N(0, σ²)` directly to the weights of `net` without any crossbar
/// machinery: a reference for the Gaussian variation model. Zero weights
/// are left alone unless `perturb_zero`.
pub fn perturb_weights<T: Real>(net: &Network<T>, sigma: f64, seed: u64, perturb_zero: bool) -> Result<Network<T>> {
    if !(sigma >= 0.0 && sigma.is_finite()) {
        return Err(Error::Config(format!("sigma must be nonnegative, got {sigma}")));
    }
    let mut out = net.clone();
    if sigma == 0.0 {
        return Ok(out);
    }
    let normal = rand_distr::Normal::new(0.0, sigma).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let layers: Vec<usize> = net.weight_layers().map(|(i, _)| i).collect();
    for i in layers {
        for w in out.param_mut(i).unwrap().weight.data_mut() {
            if *w != T::zero() || perturb_zero {
                *w = T::from_f64_lossy(w.as_f64() + rng.sample(normal));
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{predict, LayerSpec};
    use crate::quantizer::{quantize_network, LevelSet};

    fn small_cnn() -> Network<f64> {
        Network::new(
            vec![2, 8, 8],
            vec![
                LayerSpec::Conv2D { in_channels: 2, filters: 3, kernel: 3, stride: 1, pad: 1 },
                LayerSpec::ReLU,
                LayerSpec::MaxPool { size: 2 },
                LayerSpec::Dense { inputs: 48, outputs: 4 },
                LayerSpec::Softmax,
            ],
            11,
        )
        .unwrap()
    }

    fn data() -> Dataset {
        let n = 20;
        let x: Vec<f32> = (0..n * 128).map(|i| ((i * 37 % 101) as f32) / 101.0).collect();
        Dataset::new(Tensor::new(vec![n, 2, 8, 8], x).unwrap(), vec![0; n], 4, "t").unwrap()
    }

    #[test]
    fn mapped_network_matches_engine() {
        let mut net = small_cnn();
        net.param_mut(0).unwrap().bias.data_mut()[1] = 0.3;
        let d = data();
        for bias_row in [false, true] {
            let xnet = CrossbarNetwork::map(&net, None, bias_row).unwrap();
            assert_eq!(xnet.predict(&d).unwrap(), predict(&net, &d).unwrap());
            assert_eq!(xnet.read_back().unwrap(), net);
        }
    }

    #[test]
    fn quantized_read_back_is_exact_and_zero_sigma_is_noop() {
        let net = small_cnn();
        let scheme = QuantizationScheme::uniform(&net, &LevelSet::single(0.07).unwrap());
        let q = quantize_network(&net, &scheme).unwrap();
        let xnet = CrossbarNetwork::map(&q, Some(&scheme), false).unwrap();
        assert_eq!(xnet.read_back().unwrap(), q);
        let same = xnet.with_variation(&VariationModel::gaussian(0.0, 5)).unwrap();
        assert_eq!(same, xnet);
        let noisy = xnet.with_variation(&VariationModel::gaussian(0.01, 5)).unwrap();
        assert_ne!(noisy, xnet);
        assert_eq!(noisy, xnet.with_variation(&VariationModel::gaussian(0.01, 5)).unwrap());
        assert_ne!(noisy, xnet.with_variation(&VariationModel::gaussian(0.01, 6)).unwrap());
        // zeros untouched by default
        let back = noisy.read_back().unwrap();
        for (a, b) in q.params().iter().flatten().zip(back.params().iter().flatten()) {
            for (x, y) in a.weight.data().iter().zip(b.weight.data()) {
                assert_eq!(*x == 0.0, *y == 0.0);
            }
            assert_eq!(a.bias, b.bias);
        }
    }

    #[test]
    fn direct_perturbation_reference() {
        let net = small_cnn();
        assert_eq!(perturb_weights(&net, 0.0, 1, false).unwrap(), net);
        let p = perturb_weights(&net, 0.05, 1, false).unwrap();
        assert_eq!(p, perturb_weights(&net, 0.05, 1, false).unwrap());
        assert_ne!(p, net);
        assert_eq!(p.param(0).unwrap().bias, net.param(0).unwrap().bias);
    }
}
