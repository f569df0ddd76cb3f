//! Weight quantization: level sets, schemes, level selection and the
//! quantization regularizer.

mod dq;
mod levels;
mod regularizer;
mod scheme;

pub use dq::{
    layer_sigmas, refine_levels, scheme_accuracy, select_global_level, select_global_level_among, select_levels_among,
    select_levels_dq, sigma_candidates, LevelSearch, DEFAULT_GRID,
};
pub use levels::{nearest_level, LevelSet};
pub use regularizer::{
    apply_qr_step, fraction_near_levels, qr_penalty, qr_update_term, train_with_qr, QrConfig, QrSchedule,
};
pub use scheme::{quantize_network, QuantizationScheme};
