//! im2col lowering for batched convolution.
//!
//! Patch rows are ordered channel-major, then kernel row, then kernel column,
//! which is the same order a filter tensor `(filters, channels, k, k)` has in
//! memory. Columns enumerate `(sample, out_y, out_x)` in raster order.

use crate::tensor::Real;

#[derive(Debug, Clone, Copy)]
pub(crate) struct ConvGeometry {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub kernel: usize,
    pub stride: usize,
    pub pad: usize,
    pub out_h: usize,
    pub out_w: usize,
}

impl ConvGeometry {
    pub fn patch_len(&self) -> usize {
        self.channels * self.kernel * self.kernel
    }

    pub fn out_len(&self) -> usize {
        self.out_h * self.out_w
    }

    pub fn in_len(&self) -> usize {
        self.channels * self.height * self.width
    }
}

/// Lowers `batch` samples of `input` into `cols` (`patch_len × batch·out_len`).
pub(crate) fn im2col<T: Real>(g: &ConvGeometry, input: &[T], batch: usize, cols: &mut [T]) {
    let n_cols = batch * g.out_len();
    debug_assert_eq!(cols.len(), g.patch_len() * n_cols);
    debug_assert_eq!(input.len(), batch * g.in_len());
    for_each_tap(g, |r, c, ki, kj| {
        let row = &mut cols[r * n_cols..(r + 1) * n_cols];
        for b in 0..batch {
            let plane = &input[b * g.in_len() + c * g.height * g.width..][..g.height * g.width];
            let dst = &mut row[b * g.out_len()..(b + 1) * g.out_len()];
            for oy in 0..g.out_h {
                let out_row = &mut dst[oy * g.out_w..(oy + 1) * g.out_w];
                let y = (oy * g.stride + ki) as isize - g.pad as isize;
                if y < 0 || y >= g.height as isize {
                    out_row.iter_mut().for_each(|v| *v = T::zero());
                    continue;
                }
                let src = &plane[y as usize * g.width..(y as usize + 1) * g.width];
                for (ox, v) in out_row.iter_mut().enumerate() {
                    let x = (ox * g.stride + kj) as isize - g.pad as isize;
                    *v = if x < 0 || x >= g.width as isize { T::zero() } else { src[x as usize] };
                }
            }
        }
    });
}

/// Adjoint of [`im2col`]: scatters-and-adds `cols` back into `grad_input`.
pub(crate) fn col2im<T: Real>(g: &ConvGeometry, cols: &[T], batch: usize, grad_input: &mut [T]) {
    let n_cols = batch * g.out_len();
    debug_assert_eq!(cols.len(), g.patch_len() * n_cols);
    grad_input.iter_mut().for_each(|v| *v = T::zero());
    for_each_tap(g, |r, c, ki, kj| {
        let row = &cols[r * n_cols..(r + 1) * n_cols];
        for b in 0..batch {
            let plane = &mut grad_input[b * g.in_len() + c * g.height * g.width..][..g.height * g.width];
            let src = &row[b * g.out_len()..(b + 1) * g.out_len()];
            for oy in 0..g.out_h {
                let y = (oy * g.stride + ki) as isize - g.pad as isize;
                if y < 0 || y >= g.height as isize {
                    continue;
                }
                let dst = &mut plane[y as usize * g.width..(y as usize + 1) * g.width];
                for (ox, &v) in src[oy * g.out_w..(oy + 1) * g.out_w].iter().enumerate() {
                    let x = (ox * g.stride + kj) as isize - g.pad as isize;
                    if x >= 0 && x < g.width as isize {
                        dst[x as usize] = dst[x as usize] + v;
                    }
                }
            }
        }
    });
}

/// Visits patch rows in order with their `(channel, kernel row, kernel col)`.
fn for_each_tap(g: &ConvGeometry, mut f: impl FnMut(usize, usize, usize, usize)) {
    let mut r = 0;
    for c in 0..g.channels {
        for ki in 0..g.kernel {
            for kj in 0..g.kernel {
                f(r, c, ki, kj);
                r += 1;
            }
        }
    }
}
