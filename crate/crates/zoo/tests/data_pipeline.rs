use std::collections::BTreeSet;
use std::path::Path;

use arturo_zoo::{load_fashion_mnist, load_idx, minibatch_indices, read_idx, Split, ZooError};
use proptest::prelude::*;

fn idx_bytes(type_code: u8, dims: &[u32], data: &[u8]) -> Vec<u8> {
    let mut b = vec![0, 0, type_code, dims.len() as u8];
    for d in dims {
        b.extend(d.to_be_bytes());
    }
    b.extend(data);
    b
}

proptest! {
    #[test]
    fn epoch_batches_partition_the_dataset(n in 0usize..500, bs in 1usize..64, seed: u64, epoch in 0u64..50) {
        let batches = minibatch_indices(n, bs, seed, epoch).unwrap();
        let flat: Vec<usize> = batches.iter().flatten().copied().collect();
        prop_assert_eq!(flat.len(), n);
        prop_assert_eq!(flat.iter().copied().collect::<BTreeSet<_>>().len(), n);
        prop_assert!(flat.iter().all(|&i| i < n));
        prop_assert!(batches.iter().all(|b| b.len() == bs) || batches.last().unwrap().len() <= bs);
        prop_assert!(batches.iter().rev().skip(1).all(|b| b.len() == bs));
        prop_assert_eq!(&batches, &minibatch_indices(n, bs, seed, epoch).unwrap());
    }
}

#[test]
fn epochs_and_seeds_reshuffle() {
    let a = minibatch_indices(1000, 1000, 3, 0).unwrap();
    let b = minibatch_indices(1000, 1000, 3, 1).unwrap();
    let c = minibatch_indices(1000, 1000, 4, 0).unwrap();
    assert_ne!(a, b);
    assert_ne!(a, c);
    assert!(minibatch_indices(10, 0, 0, 0).is_err());
}

#[test]
fn loads_idx_pairs_from_disk() {
    let dir = tempfile::tempdir().unwrap();
    let pixels: Vec<u8> = (0..3 * 2 * 2).map(|v| (v * 20) as u8).collect();
    std::fs::write(dir.path().join("img"), idx_bytes(0x08, &[3, 2, 2], &pixels)).unwrap();
    std::fs::write(dir.path().join("lab"), idx_bytes(0x08, &[3], &[2, 0, 1])).unwrap();
    let ds = load_idx(&dir.path().join("img"), &dir.path().join("lab"), 3, Split::Test).unwrap();
    assert_eq!((ds.len(), ds.height, ds.width, ds.channels), (3, 2, 2, 1));
    assert_eq!(ds.labels, vec![2, 0, 1]);
    assert_eq!(ds.images[5], 100.0 / 255.0);

    let b = ds.batch(&[2, 0]);
    assert_eq!(b.labels, vec![1, 2]);
    assert_eq!(b.inputs[[0, 0]], (160.0f32 / 255.0) as f64);
    assert_eq!(ds.sequential_batches(2).map(|b| b.len()).collect::<Vec<_>>(), vec![2, 1]);
    assert_eq!(ds.truncate(2).len(), 2);

    let err = load_idx(&dir.path().join("img"), &dir.path().join("lab"), 2, Split::Test).unwrap_err();
    assert!(matches!(err, ZooError::LabelOutOfRange { label: 2, classes: 2 }));
}

#[test]
fn rejects_malformed_idx() {
    let dir = tempfile::tempdir().unwrap();
    let cases: [(&str, Vec<u8>); 3] = [
        ("float", idx_bytes(0x0D, &[1], &[0; 4])),
        ("short", idx_bytes(0x08, &[10, 2], &[0; 5])),
        ("header", vec![0, 0, 8, 3, 0, 0]),
    ];
    for (name, bytes) in cases {
        let p = dir.path().join(name);
        std::fs::write(&p, bytes).unwrap();
        assert!(read_idx(&p).is_err(), "{name}");
    }
    assert!(matches!(read_idx(&dir.path().join("missing")), Err(ZooError::Io { .. })));
}

fn be_u32(bytes: &[u8], at: usize) -> usize {
    u32::from_be_bytes(bytes[at..at + 4].try_into().unwrap()) as usize
}

#[test]
fn real_fashion_mnist_headers_when_present() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data/fashion-mnist");
    if !dir.join("train-images-idx3-ubyte").exists() {
        eprintln!("skipping: no dataset under {}", dir.display());
        return;
    }
    let (train, test) = load_fashion_mnist(&dir).unwrap();
    for (ds, prefix) in [(&train, "train"), (&test, "t10k")] {
        let raw = std::fs::read(dir.join(format!("{prefix}-images-idx3-ubyte"))).unwrap();
        assert_eq!(be_u32(&raw, 0), 0x0803);
        assert_eq!(be_u32(&raw, 4), ds.len());
        assert_eq!((be_u32(&raw, 8), be_u32(&raw, 12)), (28, 28));
        assert_eq!(ds.images[1000], raw[16 + 1000] as f32 / 255.0);
        let labels = std::fs::read(dir.join(format!("{prefix}-labels-idx1-ubyte"))).unwrap();
        assert_eq!(be_u32(&labels, 0), 0x0801);
        assert_eq!(&labels[8..], &ds.labels[..]);
    }
    assert_eq!((train.len(), test.len()), (60_000, 10_000));
}
