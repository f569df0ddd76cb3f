//! Memristor crossbar simulation.
//!
//! A [`Crossbar`] stores each signed weight as a differential pair of
//! nonnegative conductances, `w = scale·(g⁺ − g⁻)`, with wordlines as rows
//! (inputs) and bitlines as columns (outputs). Layers larger than one array
//! are split into [`TILE`]-sized tiles whose partial sums are added
//! digitally. Convolutions use the bitline-per-filter mapping: each filter is
//! one column, and every receptive-field window is one matrix-vector read.

mod array;
mod mapping;
mod network;
mod variation;

pub use array::{Crossbar, TiledCrossbar, TILE};
pub use mapping::{conv_via_crossbar, map_conv_layer, map_dense_layer, ConvMapping, DenseMapping};
pub use network::{perturb_weights, CrossbarNetwork};
pub use variation::{LognormalParams, VariationKind, VariationModel};
