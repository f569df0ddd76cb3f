//! The three reference architectures.

use super::layer::LayerSpec::{self, *};
use super::network::Network;
use crate::error::Result;
use crate::tensor::Real;

/// 784×500×300×10 fully connected network for MNIST.
pub fn mlp_layers() -> Vec<LayerSpec> {
    vec![
        Dense { inputs: 784, outputs: 500 },
        ReLU,
        Dense { inputs: 500, outputs: 300 },
        ReLU,
        Dense { inputs: 300, outputs: 10 },
        Softmax,
    ]
}

/// LeNet with 20 and 50 5×5 filters, 2×2 max pooling, a 500-unit hidden
/// layer and ReLU activations.
pub fn lenet_layers() -> Vec<LayerSpec> {
    vec![
        Conv2D { in_channels: 1, filters: 20, kernel: 5, stride: 1, pad: 0 },
        ReLU,
        MaxPool { size: 2 },
        Conv2D { in_channels: 20, filters: 50, kernel: 5, stride: 1, pad: 0 },
        ReLU,
        MaxPool { size: 2 },
        Dense { inputs: 800, outputs: 500 },
        ReLU,
        Dense { inputs: 500, outputs: 10 },
        Softmax,
    ]
}

/// Three 5×5 conv blocks (32, 32, 64 filters) and a single classifier layer,
/// giving the conv1/conv2/conv3/ip1 layout used for CIFAR-10.
pub fn cifar_layers() -> Vec<LayerSpec> {
    vec![
        Conv2D { in_channels: 3, filters: 32, kernel: 5, stride: 1, pad: 2 },
        MaxPool { size: 2 },
        ReLU,
        Conv2D { in_channels: 32, filters: 32, kernel: 5, stride: 1, pad: 2 },
        ReLU,
        MaxPool { size: 2 },
        Conv2D { in_channels: 32, filters: 64, kernel: 5, stride: 1, pad: 2 },
        ReLU,
        MaxPool { size: 2 },
        Dense { inputs: 1024, outputs: 10 },
        Softmax,
    ]
}

pub fn mlp<T: Real>(seed: u64) -> Result<Network<T>> {
    Network::new(vec![1, 28, 28], mlp_layers(), seed)
}

pub fn lenet<T: Real>(seed: u64) -> Result<Network<T>> {
    Network::new(vec![1, 28, 28], lenet_layers(), seed)
}

pub fn cifar_cnn<T: Real>(seed: u64) -> Result<Network<T>> {
    Network::new(vec![3, 32, 32], cifar_layers(), seed)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn layer_names_follow_caffe_convention() {
        let net = lenet::<f32>(0).unwrap();
        let names: Vec<_> = net.weight_layers().map(|(_, n)| n.to_string()).collect();
        assert_eq!(names, ["conv1", "conv2", "ip1", "ip2"]);
        assert_eq!(net.parameter_count(), 520 + 25_050 + 400_500 + 5_010);
        let cifar = cifar_cnn::<f32>(0).unwrap();
        let names: Vec<_> = cifar.weight_layers().map(|(_, n)| n.to_string()).collect();
        assert_eq!(names, ["conv1", "conv2", "conv3", "ip1"]);
        assert_eq!(mlp::<f32>(0).unwrap().classes(), 10);
    }
}
