//! Quantization-aware training and memristor crossbar simulation for
//! 1-level-precision synapses.
//!
//! Weights are restricted to `{-q, 0, +q}` per layer. Three orthogonal
//! methods recover the accuracy lost to that restriction:
//!
//! - distribution-aware quantization ([`quantizer::select_levels_dq`]) picks
//!   a separate magnitude `q` for each layer by validation search;
//! - quantization regularization ([`quantizer::train_with_qr`]) adds a
//!   constant-magnitude pull `λ·sgn(W − Q(W))` toward the nearest level
//!   during training;
//! - bias tuning ([`bias_tune::bias_tune`]) freezes the quantized weights and
//!   relearns only the biases.
//!
//! [`crossbar`] maps the quantized layers onto differential-pair conductance
//! arrays, runs convolution as time-multiplexed matrix-vector products, and
//! injects programming variation.
//!
//! The guide in `book/` walks through each piece; its code listings are
//! compiled as doc-tests of this crate.

pub mod bias_tune;
pub mod checkpoint;
pub mod crossbar;
pub mod data;
pub mod error;
pub mod experiment;
pub mod nn;
pub mod quantizer;
pub mod tensor;

pub use error::{Error, Result};
pub use tensor::{Real, Tensor};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/engine.md")]
    mod engine {}
    #[doc = include_str!("../../../book/src/quantization.md")]
    mod quantization {}
    #[doc = include_str!("../../../book/src/regularization.md")]
    mod regularization {}
    #[doc = include_str!("../../../book/src/bias-tuning.md")]
    mod bias_tuning {}
    #[doc = include_str!("../../../book/src/crossbar.md")]
    mod crossbar {}
    #[doc = include_str!("../../../book/src/experiments.md")]
    mod experiments {}
    #[doc = include_str!("../../../book/src/file-formats.md")]
    mod file_formats {}
}
