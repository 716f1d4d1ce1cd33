//! Image classification datasets: IDX (MNIST family) and CIFAR binary readers,
//! plus seeded mini-batch iteration.

use std::fs;
use std::path::Path;

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{io_err, Result, ZooError};
use crate::model::Batch;

const IDX_UBYTE: u8 = 0x08;
const CIFAR_PIXELS: usize = 3 * 32 * 32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Split {
    Train,
    Test,
}

/// Pixel preprocessing applied at load time.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Normalization {
    /// Raw bytes divided by 255.
    #[default]
    UnitInterval,
}

/// Images as `f32` in `[0, 1]`, one row of `channels·height·width` values per sample.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub split: Split,
    pub normalization: Normalization,
    pub images: Vec<f32>,
    pub labels: Vec<u8>,
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub classes: usize,
}

/// Raw contents of an unsigned-byte IDX file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IdxArray {
    pub dims: Vec<usize>,
    pub data: Vec<u8>,
}

/// Parses an IDX buffer with element type `u8`. `path` only labels errors.
pub fn parse_idx(bytes: &[u8], path: &Path) -> Result<IdxArray> {
    if bytes.len() < 4 {
        return Err(ZooError::Truncated { path: path.into(), expected: 4, actual: bytes.len() });
    }
    let magic = u32::from_be_bytes(bytes[..4].try_into().unwrap());
    let ndim = bytes[3] as usize;
    if bytes[0] != 0 || bytes[1] != 0 || bytes[2] != IDX_UBYTE || ndim == 0 {
        return Err(ZooError::BadMagic { path: path.into(), magic });
    }
    let header = 4 + 4 * ndim;
    if bytes.len() < header {
        return Err(ZooError::Truncated { path: path.into(), expected: header, actual: bytes.len() });
    }
    let raw: Vec<u32> = bytes[4..header]
        .chunks_exact(4)
        .map(|c| u32::from_be_bytes(c.try_into().unwrap()))
        .collect();
    let total = raw
        .iter()
        .try_fold(1usize, |acc, &d| acc.checked_mul(d as usize))
        .and_then(|n| n.checked_add(header))
        .ok_or_else(|| ZooError::DimensionOverflow { path: path.into(), dims: raw.clone() })?;
    if bytes.len() < total {
        return Err(ZooError::Truncated { path: path.into(), expected: total, actual: bytes.len() });
    }
    Ok(IdxArray { dims: raw.iter().map(|&d| d as usize).collect(), data: bytes[header..total].to_vec() })
}

pub fn read_idx(path: &Path) -> Result<IdxArray> {
    let bytes = fs::read(path).map_err(io_err(path))?;
    parse_idx(&bytes, path)
}

/// Pairs an IDX image file (`n × h × w`) with its label file (`n`).
pub fn load_idx(images: &Path, labels: &Path, classes: usize, split: Split) -> Result<Dataset> {
    let img = read_idx(images)?;
    let lab = read_idx(labels)?;
    if img.dims.len() != 3 {
        return Err(ZooError::InvalidArgument(format!(
            "{}: expected 3 image dimensions, found {:?}",
            images.display(),
            img.dims
        )));
    }
    if lab.dims.len() != 1 || lab.dims[0] != img.dims[0] {
        return Err(ZooError::ShapeMismatch { expected: img.dims[0], got: lab.dims.iter().product() });
    }
    check_labels(&lab.data, classes)?;
    Ok(Dataset {
        split,
        normalization: Normalization::UnitInterval,
        images: img.data.iter().map(|&p| p as f32 / 255.0).collect(),
        labels: lab.data,
        channels: 1,
        height: img.dims[1],
        width: img.dims[2],
        classes,
    })
}

/// Loads `train-*` and `t10k-*` IDX files from `dir`, as `(train, test)`.
pub fn load_fashion_mnist(dir: &Path) -> Result<(Dataset, Dataset)> {
    let train = load_idx(
        &dir.join("train-images-idx3-ubyte"),
        &dir.join("train-labels-idx1-ubyte"),
        10,
        Split::Train,
    )?;
    let test = load_idx(
        &dir.join("t10k-images-idx3-ubyte"),
        &dir.join("t10k-labels-idx1-ubyte"),
        10,
        Split::Test,
    )?;
    Ok((train, test))
}

/// Parses CIFAR binary records. CIFAR-10 records carry one label byte,
/// CIFAR-100 records a coarse and a fine label byte; the fine label is kept.
pub fn parse_cifar(bytes: &[u8], path: &Path, classes: usize, split: Split) -> Result<Dataset> {
    let label_bytes = match classes {
        10 => 1,
        100 => 2,
        _ => return Err(ZooError::InvalidArgument(format!("CIFAR has 10 or 100 classes, not {classes}"))),
    };
    let record = label_bytes + CIFAR_PIXELS;
    if !bytes.len().is_multiple_of(record) {
        return Err(ZooError::RecordSize { path: path.into(), size: bytes.len(), record });
    }
    let n = bytes.len() / record;
    let mut images = Vec::with_capacity(n * CIFAR_PIXELS);
    let mut labels = Vec::with_capacity(n);
    for rec in bytes.chunks_exact(record) {
        labels.push(rec[label_bytes - 1]);
        images.extend(rec[label_bytes..].iter().map(|&p| p as f32 / 255.0));
    }
    check_labels(&labels, classes)?;
    Ok(Dataset { split, normalization: Normalization::UnitInterval, images, labels, channels: 3, height: 32, width: 32, classes })
}

/// Loads the binary CIFAR distribution from `dir`, as `(train, test)`.
///
/// CIFAR-10 expects `data_batch_{1..5}.bin` and `test_batch.bin`;
/// CIFAR-100 expects `train.bin` and `test.bin`.
pub fn load_cifar_binary(dir: &Path, classes: usize) -> Result<(Dataset, Dataset)> {
    let (train_files, test_file): (Vec<String>, &str) = match classes {
        10 => ((1..=5).map(|i| format!("data_batch_{i}.bin")).collect(), "test_batch.bin"),
        100 => (vec!["train.bin".into()], "test.bin"),
        _ => return Err(ZooError::InvalidArgument(format!("CIFAR has 10 or 100 classes, not {classes}"))),
    };
    let read = |name: &str, split| {
        let path = dir.join(name);
        let bytes = fs::read(&path).map_err(io_err(&path))?;
        parse_cifar(&bytes, &path, classes, split)
    };
    let mut train = read(&train_files[0], Split::Train)?;
    for f in &train_files[1..] {
        let part = read(f, Split::Train)?;
        train.images.extend(part.images);
        train.labels.extend(part.labels);
    }
    Ok((train, read(test_file, Split::Test)?))
}

fn check_labels(labels: &[u8], classes: usize) -> Result<()> {
    match labels.iter().find(|&&l| l as usize >= classes) {
        Some(&l) => Err(ZooError::LabelOutOfRange { label: l as usize, classes }),
        None => Ok(()),
    }
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn sample_size(&self) -> usize {
        self.channels * self.height * self.width
    }

    /// Copies the given samples into an `f64` batch.
    pub fn batch(&self, indices: &[usize]) -> Batch {
        let d = self.sample_size();
        let mut inputs = Array2::zeros((indices.len(), d));
        for (mut row, &i) in inputs.outer_iter_mut().zip(indices) {
            for (dst, &src) in row.iter_mut().zip(&self.images[i * d..(i + 1) * d]) {
                *dst = src as f64;
            }
        }
        Batch { inputs, labels: indices.iter().map(|&i| self.labels[i] as usize).collect() }
    }

    /// Contiguous batches in storage order, for evaluation.
    pub fn sequential_batches(&self, batch_size: usize) -> impl Iterator<Item = Batch> + '_ {
        let idx: Vec<usize> = (0..self.len()).collect();
        let chunks: Vec<Vec<usize>> = idx.chunks(batch_size.max(1)).map(<[usize]>::to_vec).collect();
        chunks.into_iter().map(move |c| self.batch(&c))
    }

    /// First `n` samples (or all, if fewer).
    pub fn truncate(&self, n: usize) -> Dataset {
        let n = n.min(self.len());
        Dataset {
            images: self.images[..n * self.sample_size()].to_vec(),
            labels: self.labels[..n].to_vec(),
            ..*self
        }
    }
}

/// Sample indices for one epoch, shuffled by a generator keyed on
/// `(seed, epoch)` and cut into batches of `batch_size`. The last batch is
/// kept even if it is short.
pub fn minibatch_indices(n: usize, batch_size: usize, seed: u64, epoch: u64) -> Result<Vec<Vec<usize>>> {
    if batch_size == 0 {
        return Err(ZooError::InvalidArgument("batch size must be >= 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(epoch);
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut rng);
    Ok(idx.chunks(batch_size).map(<[usize]>::to_vec).collect())
}
