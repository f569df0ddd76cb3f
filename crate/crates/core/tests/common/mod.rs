//! Independent oracles shared by the integration tests and the acceptance
//! runner. Nothing here calls the code paths it checks.
#![allow(dead_code)]

use std::fs;
use std::path::Path;

use qsyn::nn::{softmax_cross_entropy, LayerSpec, Network};
use qsyn::quantizer::LevelSet;
use qsyn::Tensor;
use rand::Rng;

/// Nearest realized value by scanning all 2n + 1 values. Ties go to the
/// smaller magnitude, then to the negative value.
pub fn nearest_exhaustive(w: f64, levels: &LevelSet) -> f64 {
    let mut values = vec![0.0];
    for &q in levels.magnitudes() {
        values.push(q);
        values.push(-q);
    }
    let mut best = values[0];
    for &v in &values[1..] {
        let (d, bd) = ((w - v).abs(), (w - best).abs());
        if d < bd || (d == bd && (v.abs() < best.abs() || (v.abs() == best.abs() && v < best))) {
            best = v;
        }
    }
    best
}

/// Direct convolution of one `(C, H, W)` image: output `(F, OH, OW)`.
pub fn direct_conv(
    input: &[f64],
    (c, h, w): (usize, usize, usize),
    filters: &[f64],
    bias: &[f64],
    (f, k): (usize, usize),
    stride: usize,
    pad: usize,
) -> (Vec<f64>, usize, usize) {
    let oh = (h + 2 * pad - k) / stride + 1;
    let ow = (w + 2 * pad - k) / stride + 1;
    let mut out = vec![0.0; f * oh * ow];
    for fi in 0..f {
        for oy in 0..oh {
            for ox in 0..ow {
                let mut s = bias[fi];
                for ci in 0..c {
                    for ky in 0..k {
                        for kx in 0..k {
                            let iy = (oy * stride + ky) as isize - pad as isize;
                            let ix = (ox * stride + kx) as isize - pad as isize;
                            if iy < 0 || ix < 0 || iy as usize >= h || ix as usize >= w {
                                continue;
                            }
                            s += filters[((fi * c + ci) * k + ky) * k + kx] * input[(ci * h + iy as usize) * w + ix as usize];
                        }
                    }
                }
                out[(fi * oh + oy) * ow + ox] = s;
            }
        }
    }
    (out, oh, ow)
}

/// Random small network (at most 1e4 parameters) with random biases: either
/// an MLP or a conv / pool / dense stack.
pub fn random_net(rng: &mut impl Rng) -> Network<f64> {
    let classes = rng.random_range(2..6);
    let (input, layers) = if rng.random_bool(0.5) {
        let a = rng.random_range(2..12);
        let b = rng.random_range(2..12);
        let mut layers = vec![LayerSpec::Dense { inputs: a, outputs: b }, LayerSpec::ReLU];
        let mut last = b;
        if rng.random_bool(0.5) {
            let c = rng.random_range(2..10);
            layers.extend([LayerSpec::Dense { inputs: b, outputs: c }, LayerSpec::ReLU]);
            last = c;
        }
        layers.extend([LayerSpec::Dense { inputs: last, outputs: classes }, LayerSpec::Softmax]);
        (vec![a], layers)
    } else {
        let ch = rng.random_range(1..3);
        let size = rng.random_range(5..9);
        let filters = rng.random_range(1..4);
        let kernel = rng.random_range(1..4);
        let pad = rng.random_range(0..2);
        let stride = rng.random_range(1..3);
        let out = (size + 2 * pad - kernel) / stride + 1;
        let mut layers = vec![
            LayerSpec::Conv2D { in_channels: ch, filters, kernel, stride, pad },
            LayerSpec::ReLU,
        ];
        let mut spatial = out;
        if out >= 2 && rng.random_bool(0.5) {
            layers.push(LayerSpec::MaxPool { size: 2 });
            spatial = out / 2;
        }
        layers.extend([LayerSpec::Dense { inputs: filters * spatial * spatial, outputs: classes }, LayerSpec::Softmax]);
        (vec![ch, size, size], layers)
    };
    let mut net = Network::<f64>::new(input, layers, rng.random()).unwrap();
    let idx: Vec<usize> = net.weight_layers().map(|(i, _)| i).collect();
    for i in idx {
        for b in net.param_mut(i).unwrap().bias.data_mut() {
            *b = rng.random_range(-0.3..0.3);
        }
    }
    net
}

pub fn random_batch(net: &Network<f64>, batch: usize, rng: &mut impl Rng) -> (Tensor<f64>, Vec<usize>) {
    let mut shape = vec![batch];
    shape.extend_from_slice(net.input_shape());
    let n: usize = shape.iter().product();
    let x = Tensor::new(shape, (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap();
    let labels = (0..batch).map(|_| rng.random_range(0..net.classes())).collect();
    (x, labels)
}

fn loss(net: &Network<f64>, x: &Tensor<f64>, labels: &[usize]) -> f64 {
    softmax_cross_entropy(net.forward(x).unwrap().logits(), labels).unwrap().0
}

/// Distance of the forward pass on `x` from the nearest kink: the smallest
/// |ReLU input| and the smallest gap between the two largest values of any
/// max-pool window. Central differences are only meaningful when this is
/// well above the step.
pub fn kink_margin(net: &Network<f64>, x: &Tensor<f64>) -> f64 {
    let fwd = net.forward(x).unwrap();
    let mut margin = f64::INFINITY;
    for (i, layer) in net.layers().iter().enumerate() {
        let input = &fwd.activations[i];
        match *layer {
            LayerSpec::ReLU => {
                margin = input.data().iter().fold(margin, |m, v| m.min(v.abs()));
            }
            LayerSpec::MaxPool { size } => {
                let s = input.shape();
                let (h, w) = (s[2], s[3]);
                for plane in input.data().chunks_exact(h * w) {
                    for oy in 0..h / size {
                        for ox in 0..w / size {
                            let mut win: Vec<f64> = (0..size * size)
                                .map(|k| plane[(oy * size + k / size) * w + ox * size + k % size])
                                .collect();
                            win.sort_by(|a, b| b.total_cmp(a));
                            margin = margin.min(win[0] - win[1]);
                        }
                    }
                }
            }
            _ => {}
        }
    }
    margin
}

/// Norm-wise relative error between backprop and central differences with
/// step `h`, over every weight and bias.
pub fn gradient_relative_error(net: &Network<f64>, x: &Tensor<f64>, labels: &[usize], h: f64) -> f64 {
    let fwd = net.forward(x).unwrap();
    let (_, g) = softmax_cross_entropy(fwd.logits(), labels).unwrap();
    let grads = net.backward(&fwd, &g).unwrap();
    let (mut diff, mut an, mut nn) = (0.0, 0.0, 0.0);
    let layers: Vec<usize> = net.weight_layers().map(|(i, _)| i).collect();
    for i in layers {
        let gl = grads.layers[i].as_ref().unwrap();
        for bias in [false, true] {
            let len = if bias { gl.bias.len() } else { gl.weight.len() };
            for k in 0..len {
                let mut plus = net.clone();
                let mut minus = net.clone();
                {
                    let p = plus.param_mut(i).unwrap();
                    let t = if bias { &mut p.bias } else { &mut p.weight };
                    t.data_mut()[k] += h;
                }
                {
                    let p = minus.param_mut(i).unwrap();
                    let t = if bias { &mut p.bias } else { &mut p.weight };
                    t.data_mut()[k] -= h;
                }
                let numeric = (loss(&plus, x, labels) - loss(&minus, x, labels)) / (2.0 * h);
                let analytic = if bias { gl.bias.data()[k] } else { gl.weight.data()[k] };
                diff += (numeric - analytic).powi(2);
                an += analytic * analytic;
                nn += numeric * numeric;
            }
        }
    }
    diff.sqrt() / an.sqrt().max(nn.sqrt()).max(1e-12)
}

/// Writes a tiny MNIST-format image/label pair into `dir` with the
/// standard file names for both splits.
pub fn write_mnist(dir: &Path, train: usize, test: usize, rng: &mut impl Rng) {
    for (prefix, n) in [("train", train), ("t10k", test)] {
        let mut img = Vec::new();
        img.extend_from_slice(&0x0803u32.to_be_bytes());
        img.extend_from_slice(&(n as u32).to_be_bytes());
        img.extend_from_slice(&28u32.to_be_bytes());
        img.extend_from_slice(&28u32.to_be_bytes());
        let mut lab = Vec::new();
        lab.extend_from_slice(&0x0801u32.to_be_bytes());
        lab.extend_from_slice(&(n as u32).to_be_bytes());
        for _ in 0..n {
            // a bright bar whose row encodes the class
            let class = rng.random_range(0..10u8);
            let mut pixels = [0u8; 784];
            for p in pixels.iter_mut() {
                *p = rng.random_range(0..40);
            }
            let row = 4 + 2 * class as usize;
            for col in 4..24 {
                pixels[row * 28 + col] = 255;
            }
            img.extend_from_slice(&pixels);
            lab.push(class);
        }
        fs::write(dir.join(format!("{prefix}-images-idx3-ubyte")), img).unwrap();
        fs::write(dir.join(format!("{prefix}-labels-idx1-ubyte")), lab).unwrap();
    }
}
