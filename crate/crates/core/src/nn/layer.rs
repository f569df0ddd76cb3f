use std::fmt;

use crate::error::{Error, Result};

/// One stage of a feed-forward network.
///
/// Dense layers flatten whatever per-sample shape they receive. MaxPool uses
/// a square window with stride equal to its size. Softmax may only appear
/// last; the loss works on the logits that feed it.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LayerSpec {
    Dense { inputs: usize, outputs: usize },
    Conv2D { in_channels: usize, filters: usize, kernel: usize, stride: usize, pad: usize },
    MaxPool { size: usize },
    ReLU,
    Softmax,
}

impl LayerSpec {
    pub fn has_params(&self) -> bool {
        matches!(self, LayerSpec::Dense { .. } | LayerSpec::Conv2D { .. })
    }

    /// Fan-in of one output unit, for weight-bearing layers.
    pub fn fan_in(&self) -> Option<usize> {
        match *self {
            LayerSpec::Dense { inputs, .. } => Some(inputs),
            LayerSpec::Conv2D { in_channels, kernel, .. } => Some(in_channels * kernel * kernel),
            _ => None,
        }
    }

    /// `(weight shape, bias shape)` for weight-bearing layers.
    pub fn param_shapes(&self) -> Option<(Vec<usize>, Vec<usize>)> {
        match *self {
            LayerSpec::Dense { inputs, outputs } => Some((vec![outputs, inputs], vec![outputs])),
            LayerSpec::Conv2D { in_channels, filters, kernel, .. } => {
                Some((vec![filters, in_channels, kernel, kernel], vec![filters]))
            }
            _ => None,
        }
    }

    /// Per-sample output shape for a per-sample input shape.
    pub fn output_shape(&self, input: &[usize]) -> Result<Vec<usize>> {
        match *self {
            LayerSpec::Dense { inputs, outputs } => {
                let n: usize = input.iter().product();
                if n != inputs {
                    return Err(Error::Shape(format!("dense layer expects {inputs} inputs, got {input:?}")));
                }
                Ok(vec![outputs])
            }
            LayerSpec::Conv2D { in_channels, filters, kernel, stride, pad } => {
                let [c, h, w] = spatial(input)?;
                if c != in_channels {
                    return Err(Error::Shape(format!("conv expects {in_channels} channels, got {c}")));
                }
                if stride == 0 || kernel == 0 {
                    return Err(Error::Shape("conv kernel and stride must be positive".into()));
                }
                let oh = conv_out(h, kernel, stride, pad)?;
                let ow = conv_out(w, kernel, stride, pad)?;
                Ok(vec![filters, oh, ow])
            }
            LayerSpec::MaxPool { size } => {
                let [c, h, w] = spatial(input)?;
                if size == 0 || h < size || w < size {
                    return Err(Error::Shape(format!("pool size {size} does not fit {h}x{w}")));
                }
                Ok(vec![c, h / size, w / size])
            }
            LayerSpec::ReLU | LayerSpec::Softmax => Ok(input.to_vec()),
        }
    }
}

impl fmt::Display for LayerSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            LayerSpec::Dense { inputs, outputs } => write!(f, "dense {inputs}->{outputs}"),
            LayerSpec::Conv2D { in_channels, filters, kernel, stride, pad } => {
                write!(f, "conv {in_channels}->{filters} k{kernel} s{stride} p{pad}")
            }
            LayerSpec::MaxPool { size } => write!(f, "maxpool {size}"),
            LayerSpec::ReLU => write!(f, "relu"),
            LayerSpec::Softmax => write!(f, "softmax"),
        }
    }
}

fn spatial(input: &[usize]) -> Result<[usize; 3]> {
    match *input {
        [c, h, w] => Ok([c, h, w]),
        _ => Err(Error::Shape(format!("expected a (channels, height, width) input, got {input:?}"))),
    }
}

pub(crate) fn conv_out(size: usize, kernel: usize, stride: usize, pad: usize) -> Result<usize> {
    let padded = size + 2 * pad;
    if padded < kernel {
        return Err(Error::Shape(format!("kernel {kernel} larger than padded input {padded}")));
    }
    Ok((padded - kernel) / stride + 1)
}
