//! MNIST IDX reader (big-endian headers, magic-checked).

use std::fs;
use std::path::Path;

use super::Dataset;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;
pub const IDX_LABELS_MAGIC: u32 = 0x0000_0801;

fn read_u32_be(bytes: &[u8], offset: usize) -> u32 {
    u32::from_be_bytes(bytes[offset..offset + 4].try_into().unwrap())
}

fn read(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

fn check_header(path: &Path, bytes: &[u8], magic: u32, header_len: usize) -> Result<()> {
    if bytes.len() < header_len {
        return Err(Error::Truncated { path: path.into(), expected: header_len as u64, found: bytes.len() as u64 });
    }
    let found = read_u32_be(bytes, 0);
    if found != magic {
        return Err(Error::BadMagic { path: path.into(), found, expected: magic });
    }
    Ok(())
}

/// Loads an IDX image/label pair. Pixels are scaled by 1/255.
pub fn load_mnist(images_path: impl AsRef<Path>, labels_path: impl AsRef<Path>) -> Result<Dataset> {
    let (images_path, labels_path) = (images_path.as_ref(), labels_path.as_ref());
    let img = read(images_path)?;
    check_header(images_path, &img, IDX_IMAGES_MAGIC, 16)?;
    let count = read_u32_be(&img, 4) as usize;
    let rows = read_u32_be(&img, 8) as usize;
    let cols = read_u32_be(&img, 12) as usize;
    let expected = 16 + count * rows * cols;
    if img.len() < expected {
        return Err(Error::Truncated { path: images_path.into(), expected: expected as u64, found: img.len() as u64 });
    }

    let lab = read(labels_path)?;
    check_header(labels_path, &lab, IDX_LABELS_MAGIC, 8)?;
    let label_count = read_u32_be(&lab, 4) as usize;
    if lab.len() < 8 + label_count {
        return Err(Error::Truncated {
            path: labels_path.into(),
            expected: (8 + label_count) as u64,
            found: lab.len() as u64,
        });
    }
    if label_count != count {
        return Err(Error::CountMismatch { images: count, labels: label_count });
    }

    let pixels = img[16..expected].iter().map(|&p| p as f32 / 255.0).collect();
    let images = Tensor::new(vec![count, 1, rows, cols], pixels)?;
    let labels = lab[8..8 + count].iter().map(|&l| l as usize).collect();
    let name = images_path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    Dataset::new(images, labels, 10, name)
}

/// Loads `(train, test)` from a directory holding the four standard files.
/// Both the `train-images-idx3-ubyte` and `train-images.idx3-ubyte`
/// spellings are accepted.
pub fn load_mnist_dir(dir: impl AsRef<Path>) -> Result<(Dataset, Dataset)> {
    let dir = dir.as_ref();
    let pick = |stem: &str, kind: &str| {
        let dashed = dir.join(format!("{stem}-{kind}-ubyte"));
        if dashed.exists() {
            dashed
        } else {
            dir.join(format!("{stem}.{kind}-ubyte"))
        }
    };
    let train = load_mnist(pick("train-images", "idx3"), pick("train-labels", "idx1"))?;
    let test = load_mnist(pick("t10k-images", "idx3"), pick("t10k-labels", "idx1"))?;
    Ok((train, test))
}
