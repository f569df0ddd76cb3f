use super::array::{TiledCrossbar, TILE};
use crate::error::{Error, Result};
use crate::nn::conv_out;
use crate::tensor::{Real, Tensor};

/// A dense layer `y = W·x + b` on a crossbar holding `Wᵀ` (inputs on
/// wordlines, one output neuron per bitline).
#[derive(Debug, Clone, PartialEq)]
pub struct DenseMapping {
    pub inputs: usize,
    pub outputs: usize,
    pub xbar: TiledCrossbar,
    /// Biases added in the neuron circuit, when not stored on a bias row.
    pub digital_bias: Option<Vec<f64>>,
}

/// A conv layer with one flattened filter per bitline.
///
/// Filter `f` occupies column `f`; wordline `(c·k + ky)·k + kx` carries
/// input channel `c`, kernel row `ky`, kernel column `kx` of the current
/// window (channel-major, then row, then column). With a bias row, one extra
/// wordline driven at 1 holds `b / scale`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvMapping {
    pub filters: usize,
    pub channels: usize,
    pub kernel: usize,
    pub stride: usize,
    pub pad: usize,
    pub xbar: TiledCrossbar,
    pub digital_bias: Option<Vec<f64>>,
}

fn with_bias_row(mut data: Vec<f64>, rows: usize, cols: usize, bias: &[f64], bias_row: bool) -> (Tensor<f64>, Option<Vec<f64>>) {
    if bias_row {
        data.extend_from_slice(bias);
        (Tensor::new(vec![rows + 1, cols], data).unwrap(), None)
    } else {
        (Tensor::new(vec![rows, cols], data).unwrap(), Some(bias.to_vec()))
    }
}

/// Maps dense weights `(outputs, inputs)` and biases onto a crossbar.
pub fn map_dense_layer<T: Real>(weights: &Tensor<T>, biases: &Tensor<T>, scale: f64, bias_row: bool) -> Result<DenseMapping> {
    let &[outputs, inputs] = weights.shape() else {
        return Err(Error::Shape(format!("dense weights must be 2-D, got {:?}", weights.shape())));
    };
    if biases.len() != outputs {
        return Err(Error::Shape(format!("{} biases for {outputs} outputs", biases.len())));
    }
    let w = weights.data();
    let mut data = Vec::with_capacity((inputs + 1) * outputs);
    for i in 0..inputs {
        data.extend((0..outputs).map(|o| w[o * inputs + i].as_f64()));
    }
    let bias: Vec<f64> = biases.data().iter().map(|b| b.as_f64()).collect();
    let (m, digital_bias) = with_bias_row(data, inputs, outputs, &bias, bias_row);
    Ok(DenseMapping { inputs, outputs, xbar: TiledCrossbar::program(&m, scale, TILE)?, digital_bias })
}

/// Maps a filter bank `(filters, channels, k, k)` onto a crossbar of
/// `channels·k·k` wordlines (plus one with `bias_row`) and `filters`
/// bitlines.
pub fn map_conv_layer<T: Real>(
    filters: &Tensor<T>,
    biases: &Tensor<T>,
    stride: usize,
    pad: usize,
    scale: f64,
    bias_row: bool,
) -> Result<ConvMapping> {
    let &[count, channels, kernel, k2] = filters.shape() else {
        return Err(Error::Shape(format!("conv filters must be 4-D, got {:?}", filters.shape())));
    };
    if kernel != k2 || kernel == 0 {
        return Err(Error::Shape(format!("filters must be square, got {:?}", filters.shape())));
    }
    if stride == 0 {
        return Err(Error::Shape("stride must be positive".into()));
    }
    if biases.len() != count {
        return Err(Error::Shape(format!("{} biases for {count} filters", biases.len())));
    }
    let patch = channels * kernel * kernel;
    let f = filters.data();
    let mut data = Vec::with_capacity((patch + 1) * count);
    for row in 0..patch {
        data.extend((0..count).map(|j| f[j * patch + row].as_f64()));
    }
    let bias: Vec<f64> = biases.data().iter().map(|b| b.as_f64()).collect();
    let (m, digital_bias) = with_bias_row(data, patch, count, &bias, bias_row);
    Ok(ConvMapping {
        filters: count,
        channels,
        kernel,
        stride,
        pad,
        xbar: TiledCrossbar::program(&m, scale, TILE)?,
        digital_bias,
    })
}

fn split_bias(read: Tensor<f64>, rows: usize, cols: usize, digital: &Option<Vec<f64>>) -> (Vec<f64>, Vec<f64>) {
    let mut data = read.into_data();
    match digital {
        Some(b) => (data, b.clone()),
        None => {
            let bias = data.split_off(rows * cols);
            (data, bias)
        }
    }
}

impl DenseMapping {
    pub fn has_bias_row(&self) -> bool {
        self.digital_bias.is_none()
    }

    /// One read: `y = Wᵀ·x (+ b)`.
    pub fn apply(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.inputs {
            return Err(Error::Shape(format!("dense mapping expects {} inputs, got {}", self.inputs, x.len())));
        }
        match &self.digital_bias {
            Some(b) => Ok(self.xbar.matvec(x)?.iter().zip(b).map(|(y, b)| y + b).collect()),
            None => {
                let mut v = x.to_vec();
                v.push(1.0);
                self.xbar.matvec(&v)
            }
        }
    }

    /// Effective `(weights (outputs, inputs), biases)`.
    pub fn read_back(&self) -> (Tensor<f64>, Tensor<f64>) {
        let (data, bias) = split_bias(self.xbar.read_back(), self.inputs, self.outputs, &self.digital_bias);
        let mut w = vec![0.0; self.inputs * self.outputs];
        for i in 0..self.inputs {
            for o in 0..self.outputs {
                w[o * self.inputs + i] = data[i * self.outputs + o];
            }
        }
        (Tensor::new(vec![self.outputs, self.inputs], w).unwrap(), Tensor::from_vec(bias))
    }
}

impl ConvMapping {
    pub fn has_bias_row(&self) -> bool {
        self.digital_bias.is_none()
    }

    pub fn patch_len(&self) -> usize {
        self.channels * self.kernel * self.kernel
    }

    /// Output spatial size for an `h × w` input.
    pub fn output_size(&self, h: usize, w: usize) -> Result<(usize, usize)> {
        Ok((conv_out(h, self.kernel, self.stride, self.pad)?, conv_out(w, self.kernel, self.stride, self.pad)?))
    }

    /// Number of crossbar reads (time stamps) for one `h × w` input.
    pub fn time_stamps(&self, h: usize, w: usize) -> Result<usize> {
        let (oh, ow) = self.output_size(h, w)?;
        Ok(oh * ow)
    }

    /// Effective `(filters (F, C, k, k), biases)`.
    pub fn read_back(&self) -> (Tensor<f64>, Tensor<f64>) {
        let patch = self.patch_len();
        let (data, bias) = split_bias(self.xbar.read_back(), patch, self.filters, &self.digital_bias);
        let mut f = vec![0.0; patch * self.filters];
        for row in 0..patch {
            for j in 0..self.filters {
                f[j * patch + row] = data[row * self.filters + j];
            }
        }
        let shape = vec![self.filters, self.channels, self.kernel, self.kernel];
        (Tensor::new(shape, f).unwrap(), Tensor::from_vec(bias))
    }
}

/// Convolution by time-division crossbar reads.
///
/// Windows are visited in raster order (output row, then column); at each
/// time stamp the window is flattened in the mapping's wordline order
/// (zeros where it overlaps padding) and applied as one matrix-vector read
/// producing all filters' pixels at that position. Accepts `(C, H, W)` or
/// `(N, C, H, W)` input and returns `(F, OH, OW)` or `(N, F, OH, OW)`.
pub fn conv_via_crossbar(input: &Tensor<f64>, m: &ConvMapping) -> Result<Tensor<f64>> {
    let (batch, c, h, w, batched) = match *input.shape() {
        [c, h, w] => (1, c, h, w, false),
        [n, c, h, w] => (n, c, h, w, true),
        _ => return Err(Error::Shape(format!("conv input must be 3-D or 4-D, got {:?}", input.shape()))),
    };
    if c != m.channels {
        return Err(Error::Shape(format!("mapping expects {} channels, input has {c}", m.channels)));
    }
    let (oh, ow) = m.output_size(h, w)?;
    let k = m.kernel;
    let bias_slot = usize::from(m.has_bias_row());
    let mut window = vec![0.0; m.patch_len() + bias_slot];
    if bias_slot == 1 {
        window[m.patch_len()] = 1.0;
    }
    let mut out = vec![0.0; batch * m.filters * oh * ow];
    for s in 0..batch {
        let img = &input.data()[s * c * h * w..(s + 1) * c * h * w];
        for oy in 0..oh {
            for ox in 0..ow {
                for ch in 0..c {
                    for ky in 0..k {
                        for kx in 0..k {
                            let iy = (oy * m.stride + ky) as isize - m.pad as isize;
                            let ix = (ox * m.stride + kx) as isize - m.pad as isize;
                            let inside = iy >= 0 && ix >= 0 && (iy as usize) < h && (ix as usize) < w;
                            window[(ch * k + ky) * k + kx] =
                                if inside { img[(ch * h + iy as usize) * w + ix as usize] } else { 0.0 };
                        }
                    }
                }
                let mut y = m.xbar.matvec(&window)?;
                if let Some(b) = &m.digital_bias {
                    for (y, b) in y.iter_mut().zip(b) {
                        *y += b;
                    }
                }
                for (f, v) in y.into_iter().enumerate() {
                    out[((s * m.filters + f) * oh + oy) * ow + ox] = v;
                }
            }
        }
    }
    let shape = if batched { vec![batch, m.filters, oh, ow] } else { vec![m.filters, oh, ow] };
    Tensor::new(shape, out)
}
