//! Minimal deterministic feed-forward engine: Dense, Conv2D, MaxPool, ReLU
//! and Softmax layers, softmax cross-entropy, backprop and SGD.

mod conv;
mod layer;
mod loss;
mod network;
mod train;

pub mod arch;

pub use layer::LayerSpec;
pub(crate) use layer::conv_out;
pub use loss::{softmax, softmax_cross_entropy};
pub use network::{Forward, Gradients, Network, ParamGroups, Params};
pub use train::{
    argmax_rows, evaluate, predict, train, train_with, LrSchedule, NoHook, Sgd, StepHook, TrainConfig, TrainLog,
};
