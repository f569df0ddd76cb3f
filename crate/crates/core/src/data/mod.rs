//! Dataset ingestion: MNIST IDX files, CIFAR-10 binary batches, and
//! deterministic train/validation splits.

mod cifar;
mod mnist;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub use cifar::{load_cifar10, load_cifar10_dir, CIFAR_RECORD_BYTES};
pub use mnist::{load_mnist, load_mnist_dir, IDX_IMAGES_MAGIC, IDX_LABELS_MAGIC};

use crate::error::{Error, Result};
use crate::tensor::{Real, Tensor};

/// Labelled images, `(count, channels, height, width)` with pixels in [0, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub images: Tensor<f32>,
    pub labels: Vec<usize>,
    pub classes: usize,
    pub name: String,
}

impl Dataset {
    pub fn new(images: Tensor<f32>, labels: Vec<usize>, classes: usize, name: impl Into<String>) -> Result<Self> {
        let count = images.shape().first().copied().unwrap_or(0);
        if count != labels.len() {
            return Err(Error::CountMismatch { images: count, labels: labels.len() });
        }
        if let Some(&label) = labels.iter().find(|&&l| l >= classes) {
            return Err(Error::LabelOutOfRange { label, classes });
        }
        Ok(Self { images, labels, classes, name: name.into() })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Per-sample shape, e.g. `[1, 28, 28]`.
    pub fn sample_shape(&self) -> &[usize] {
        &self.images.shape()[1..]
    }

    pub fn subset(&self, indices: &[usize]) -> Dataset {
        Dataset {
            images: self.images.gather_outer(indices),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            classes: self.classes,
            name: self.name.clone(),
        }
    }

    /// The first `n` samples (or all of them if fewer).
    pub fn head(&self, n: usize) -> Dataset {
        let n = n.min(self.len());
        Dataset {
            images: self.images.slice_outer(0, n),
            labels: self.labels[..n].to_vec(),
            classes: self.classes,
            name: self.name.clone(),
        }
    }

    /// Images `indices` converted to the engine precision, plus labels.
    pub fn batch<T: Real>(&self, indices: &[usize]) -> (Tensor<T>, Vec<usize>) {
        let images = self.images.gather_outer(indices).cast();
        (images, indices.iter().map(|&i| self.labels[i]).collect())
    }

    /// Contiguous range of samples in engine precision.
    pub fn range<T: Real>(&self, start: usize, end: usize) -> (Tensor<T>, &[usize]) {
        (self.images.slice_outer(start, end).cast(), &self.labels[start..end])
    }

    /// Per-channel mean pixel value.
    pub fn channel_means(&self) -> Vec<f64> {
        let shape = self.images.shape();
        let (c, plane) = (shape[1], shape[2..].iter().product::<usize>());
        let mut sums = vec![0.0; c];
        for sample in self.images.data().chunks_exact(c * plane) {
            for (ch, s) in sums.iter_mut().enumerate() {
                *s += sample[ch * plane..(ch + 1) * plane].iter().map(|&v| v as f64).sum::<f64>();
            }
        }
        let n = (self.len() * plane) as f64;
        sums.into_iter().map(|s| s / n).collect()
    }

    /// Subtracts per-channel means in place (optional CIFAR normalization).
    pub fn subtract_channel_means(&mut self, means: &[f64]) {
        let shape = self.images.shape().to_vec();
        let (c, plane) = (shape[1], shape[2..].iter().product::<usize>());
        for sample in self.images.data_mut().chunks_exact_mut(c * plane) {
            for (ch, &m) in means.iter().enumerate() {
                for v in &mut sample[ch * plane..(ch + 1) * plane] {
                    *v -= m as f32;
                }
            }
        }
    }
}

/// Index partition produced by [`split_indices`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitIndices {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
}

/// Shuffles `0..count` with `seed` and takes the last `val_count` positions
/// as validation. Both halves are returned sorted.
pub fn split_indices(count: usize, val_count: usize, seed: u64) -> Result<SplitIndices> {
    if val_count > count {
        return Err(Error::Config(format!("validation count {val_count} exceeds dataset size {count}")));
    }
    let mut order: Vec<usize> = (0..count).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut val = order.split_off(count - val_count);
    let mut train = order;
    train.sort_unstable();
    val.sort_unstable();
    Ok(SplitIndices { train, val })
}

/// Disjoint, exhaustive, seed-deterministic `(train, validation)` split.
pub fn split(ds: &Dataset, val_count: usize, seed: u64) -> Result<(Dataset, Dataset)> {
    let idx = split_indices(ds.len(), val_count, seed)?;
    Ok((ds.subset(&idx.train), ds.subset(&idx.val)))
}
