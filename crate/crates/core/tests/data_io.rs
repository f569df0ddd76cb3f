mod common;

use std::fs;
use std::path::PathBuf;

use proptest::prelude::*;
use qsyn::data::{load_cifar10, load_cifar10_dir, load_mnist, load_mnist_dir, split, split_indices, CIFAR_RECORD_BYTES};
use qsyn::Error;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn mnist_dir() -> PathBuf {
    std::env::var_os("QSYN_DATA_DIR").map(PathBuf::from).unwrap_or_else(|| PathBuf::from("/root/data")).join("mnist")
}

#[test]
fn synthetic_mnist_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    common::write_mnist(dir.path(), 30, 12, &mut ChaCha8Rng::seed_from_u64(1));
    let (train, test) = load_mnist_dir(dir.path()).unwrap();
    assert_eq!(train.images.shape(), &[30, 1, 28, 28]);
    assert_eq!(test.len(), 12);
    let again = load_mnist_dir(dir.path()).unwrap().0;
    assert_eq!(train, again);
    assert!(train.images.data().iter().all(|p| (0.0..=1.0).contains(p)));
    assert!(train.labels.iter().all(|&l| l < 10));

    // a labels file carrying the image magic is a wrong-magic error
    let images = dir.path().join("train-images-idx3-ubyte");
    assert!(matches!(load_mnist(&images, &images), Err(Error::BadMagic { .. })));
}

#[test]
fn canonical_mnist_if_present() {
    let dir = mnist_dir();
    if !dir.join("t10k-labels-idx1-ubyte").exists() {
        eprintln!("skipping: no MNIST at {}", dir.display());
        return;
    }
    let (train, test) = load_mnist_dir(&dir).unwrap();
    assert_eq!(train.images.shape(), &[60000, 1, 28, 28]);
    assert_eq!(test.len(), 10000);
    assert_eq!(&test.labels[..10], &[7, 2, 1, 0, 4, 1, 4, 9, 5, 9]);
    assert!(test.images.data().iter().all(|p| (0.0..=1.0).contains(p)));
}

fn write_cifar_batch(path: &std::path::Path, n: usize, rng: &mut impl Rng) -> Vec<u8> {
    let mut bytes = Vec::with_capacity(n * CIFAR_RECORD_BYTES);
    for _ in 0..n {
        bytes.push(rng.random_range(0..10u8));
        bytes.extend((0..3072).map(|_| rng.random::<u8>()));
    }
    fs::write(path, &bytes).unwrap();
    bytes
}

#[test]
fn synthetic_cifar_layout() {
    let dir = tempfile::tempdir().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let path = dir.path().join("data_batch_1.bin");
    let raw = write_cifar_batch(&path, 10_000, &mut rng);
    let one = load_cifar10(&[&path]).unwrap();
    assert_eq!(one.images.shape(), &[10_000, 3, 32, 32]);
    let two = load_cifar10(&[&path, &path]).unwrap();
    assert_eq!(two.len(), 20_000);
    // record 4: label byte, then red, green, blue planes
    let rec = &raw[4 * CIFAR_RECORD_BYTES..5 * CIFAR_RECORD_BYTES];
    assert_eq!(two.labels[10_004], rec[0] as usize);
    let img = &two.images.data()[10_004 * 3072..10_005 * 3072];
    for (k, &byte) in rec[1..].iter().enumerate() {
        assert_eq!(img[k], byte as f32 / 255.0);
    }
    assert!(one.images.data().iter().all(|p| (0.0..=1.0).contains(p)));
    assert!(matches!(load_cifar10_dir(dir.path()), Err(Error::Io { .. })));

    let bad = dir.path().join("bad.bin");
    fs::write(&bad, vec![0u8; CIFAR_RECORD_BYTES * 3]).unwrap();
    assert!(matches!(load_cifar10(&[bad]), Err(Error::BadFileSize { .. })));
}

#[test]
fn split_edges() {
    let dir = tempfile::tempdir().unwrap();
    common::write_mnist(dir.path(), 20, 1, &mut ChaCha8Rng::seed_from_u64(3));
    let (ds, _) = load_mnist_dir(dir.path()).unwrap();
    let (train, val) = split(&ds, 0, 1).unwrap();
    assert_eq!((train, val.len()), (ds.clone(), 0));
    let (train, val) = split(&ds, 20, 1).unwrap();
    assert_eq!((train.len(), val.len()), (0, 20));
    assert!(split(&ds, 21, 1).is_err());
}

proptest! {
    #[test]
    fn split_is_a_partition(count in 0usize..500, frac in 0.0f64..=1.0, seed in any::<u64>()) {
        let val_count = (count as f64 * frac) as usize;
        let a = split_indices(count, val_count, seed).unwrap();
        prop_assert_eq!(&a, &split_indices(count, val_count, seed).unwrap());
        prop_assert_eq!(a.val.len(), val_count);
        let mut all: Vec<usize> = a.train.iter().chain(&a.val).copied().collect();
        all.sort_unstable();
        prop_assert_eq!(all, (0..count).collect::<Vec<_>>());
    }
}
