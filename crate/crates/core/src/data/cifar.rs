//! CIFAR-10 binary version: records of one label byte followed by 3072
//! channel-planar pixels (1024 red, 1024 green, 1024 blue).

use std::fs;
use std::path::{Path, PathBuf};

use super::Dataset;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const CIFAR_RECORD_BYTES: usize = 1 + 3 * 32 * 32;
const RECORDS_PER_BATCH: usize = 10_000;

/// Concatenates the given batch files. Every file must hold exactly 10,000
/// records.
pub fn load_cifar10<P: AsRef<Path>>(batch_paths: &[P]) -> Result<Dataset> {
    let mut pixels = Vec::with_capacity(batch_paths.len() * RECORDS_PER_BATCH * (CIFAR_RECORD_BYTES - 1));
    let mut labels = Vec::with_capacity(batch_paths.len() * RECORDS_PER_BATCH);
    for path in batch_paths {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        if bytes.len() != RECORDS_PER_BATCH * CIFAR_RECORD_BYTES {
            return Err(Error::BadFileSize { path: path.into(), size: bytes.len() as u64, record: CIFAR_RECORD_BYTES });
        }
        for record in bytes.chunks_exact(CIFAR_RECORD_BYTES) {
            labels.push(record[0] as usize);
            pixels.extend(record[1..].iter().map(|&p| p as f32 / 255.0));
        }
    }
    let count = labels.len();
    let images = Tensor::new(vec![count, 3, 32, 32], pixels)?;
    Dataset::new(images, labels, 10, "cifar-10")
}

/// Loads `(train, test)` from the `cifar-10-batches-bin` directory.
pub fn load_cifar10_dir(dir: impl AsRef<Path>) -> Result<(Dataset, Dataset)> {
    let dir = dir.as_ref();
    let train: Vec<PathBuf> = (1..=5).map(|i| dir.join(format!("data_batch_{i}.bin"))).collect();
    Ok((load_cifar10(&train)?, load_cifar10(&[dir.join("test_batch.bin")])?))
}
