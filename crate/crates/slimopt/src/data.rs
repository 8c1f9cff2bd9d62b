//! Desk-scale datasets: seeded synthetic generators, an IDX image loader,
//! and minibatch streams.
//!
//! A [`Dataset`] holds a train and a validation [`Split`]; inputs are
//! normalized to zero mean and unit variance per feature using statistics of
//! the train split only. Everything is deterministic in the seed.

use std::fs;
use std::io::Write as _;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use thiserror::Error;

use crate::nn::Batch;
use crate::rng::stream;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("need at least one sample per class: n = {n}, classes = {classes}")]
    TooFewSamples { n: usize, classes: usize },
    #[error("invalid parameter: {0}")]
    InvalidParam(String),
    #[error("{path}: bad IDX magic, expected {expected:02x?}, got {got:02x?}")]
    BadMagic {
        path: String,
        expected: [u8; 4],
        got: [u8; 4],
    },
    #[error("{path}: truncated IDX file, expected {expected} bytes, got {actual}")]
    Truncated {
        path: String,
        expected: usize,
        actual: usize,
    },
    #[error("image/label count mismatch: {images} images vs {labels} labels")]
    CountMismatch { images: usize, labels: usize },
    #[error("cannot adapt samples of shape {from:?} to spec input {to:?}")]
    ShapeUnadaptable { from: (u32, u32, u32), to: (u32, u32, u32) },
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

/// One split of labeled samples. Inputs are flattened NCHW
/// (`inputs[((s*C + c)*H + y)*W + x]`) with per-sample shape `shape`
/// expressed as (width, height, channels).
#[derive(Debug, Clone, PartialEq)]
pub struct Split {
    pub inputs: Vec<f32>,
    pub labels: Vec<u32>,
    pub shape: (u32, u32, u32),
    pub class_count: usize,
}

impl Split {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    fn features(&self) -> usize {
        let (w, h, c) = self.shape;
        (w * h * c) as usize
    }

    /// Copies one sample range into a batch.
    fn gather(&self, indices: &[usize]) -> Batch {
        let features = self.features();
        let mut inputs = Vec::with_capacity(indices.len() * features);
        let mut labels = Vec::with_capacity(indices.len());
        for &i in indices {
            inputs.extend_from_slice(&self.inputs[i * features..(i + 1) * features]);
            labels.push(self.labels[i]);
        }
        Batch {
            inputs,
            labels,
            shape: self.shape,
        }
    }

    /// Adapts flat feature samples to a spatial spec input by broadcasting
    /// each feature across the grid as one channel. A no-op when the shapes
    /// already agree.
    pub fn fit_to_input(&self, target: (u32, u32, u32)) -> Result<Split, DataError> {
        if self.shape == target {
            return Ok(self.clone());
        }
        let (sw, sh, sc) = self.shape;
        let (tw, th, tc) = target;
        if (sw, sh) != (1, 1) || sc != tc {
            return Err(DataError::ShapeUnadaptable {
                from: self.shape,
                to: target,
            });
        }
        let area = (tw * th) as usize;
        let channels = tc as usize;
        let mut inputs = Vec::with_capacity(self.len() * channels * area);
        for s in 0..self.len() {
            for c in 0..channels {
                let v = self.inputs[s * channels + c];
                inputs.extend(std::iter::repeat_n(v, area));
            }
        }
        Ok(Split {
            inputs,
            labels: self.labels.clone(),
            shape: target,
            class_count: self.class_count,
        })
    }
}

/// Train and validation splits with shared normalization.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub train: Split,
    pub val: Split,
    pub class_count: usize,
    pub shape: (u32, u32, u32),
    /// Per-feature statistics of the raw train split that were applied to
    /// both splits.
    pub feature_mean: Vec<f32>,
    pub feature_std: Vec<f32>,
}

/// Splits class-major raw samples 80/20 per class, then normalizes both
/// splits with train statistics. Every fifth sample of a class goes to the
/// validation split, so ordered generators (the spiral arms are parameterized
/// inside-out) still yield identically distributed splits.
fn assemble(raw: Vec<(Vec<f32>, u32)>, shape: (u32, u32, u32), class_count: usize) -> Dataset {
    let mut train: Vec<&(Vec<f32>, u32)> = Vec::new();
    let mut val: Vec<&(Vec<f32>, u32)> = Vec::new();
    for class in 0..class_count as u32 {
        for (i, member) in raw
            .iter()
            .filter(|(_, label)| *label == class)
            .enumerate()
        {
            if i % 5 == 4 {
                val.push(member);
            } else {
                train.push(member);
            }
        }
    }
    let collect = |rows: &[&(Vec<f32>, u32)]| -> Split {
        Split {
            inputs: rows.iter().flat_map(|(x, _)| x.iter().copied()).collect(),
            labels: rows.iter().map(|(_, y)| *y).collect(),
            shape,
            class_count,
        }
    };
    normalize_pair(collect(&train), collect(&val))
}

fn normal_pair(rng: &mut impl Rng) -> (f64, f64) {
    // Box-Muller
    let u1: f64 = rng.random_range(f64::EPSILON..1.0);
    let u2: f64 = rng.random_range(0.0..1.0);
    let r = (-2.0 * u1.ln()).sqrt();
    let theta = 2.0 * std::f64::consts::PI * u2;
    (r * theta.cos(), r * theta.sin())
}

fn normal(rng: &mut impl Rng) -> f64 {
    normal_pair(rng).0
}

fn per_class_counts(n: usize, classes: usize) -> Vec<usize> {
    let base = n / classes;
    let extra = n % classes;
    (0..classes)
        .map(|c| base + usize::from(c < extra))
        .collect()
}

/// Gaussian blobs: one random centroid per class, isotropic noise.
/// `noise = 0` collapses every sample onto its centroid.
pub fn synth_blobs(
    classes: usize,
    n: usize,
    dim: usize,
    noise: f64,
    seed: u64,
) -> Result<Dataset, DataError> {
    if classes == 0 || n < classes {
        return Err(DataError::TooFewSamples { n, classes });
    }
    if dim == 0 {
        return Err(DataError::InvalidParam("dim = 0".into()));
    }
    if !(noise >= 0.0) {
        return Err(DataError::InvalidParam(format!("noise = {noise}")));
    }
    let mut center_rng = stream(seed, "blob-centers", 0);
    let centers: Vec<Vec<f64>> = (0..classes)
        .map(|_| (0..dim).map(|_| 3.0 * normal(&mut center_rng)).collect())
        .collect();

    let mut rng = stream(seed, "blob-samples", 0);
    let mut raw = Vec::with_capacity(n);
    for (class, &count) in per_class_counts(n, classes).iter().enumerate() {
        for _ in 0..count {
            let x: Vec<f32> = centers[class]
                .iter()
                .map(|&c| (c + noise * normal(&mut rng)) as f32)
                .collect();
            raw.push((x, class as u32));
        }
    }
    Ok(assemble(raw, (1, 1, dim as u32), classes))
}

/// Interleaved 2-D spirals, one arm per class; not linearly separable.
pub fn synth_spirals(
    classes: usize,
    n: usize,
    noise: f64,
    seed: u64,
) -> Result<Dataset, DataError> {
    if classes == 0 || n < classes {
        return Err(DataError::TooFewSamples { n, classes });
    }
    if !(noise >= 0.0) {
        return Err(DataError::InvalidParam(format!("noise = {noise}")));
    }
    const TURNS: f64 = 2.0;
    let mut rng = stream(seed, "spiral-samples", 0);
    let mut raw = Vec::with_capacity(n);
    for (class, &count) in per_class_counts(n, classes).iter().enumerate() {
        for i in 0..count {
            let p = if count > 1 {
                i as f64 / (count - 1) as f64
            } else {
                0.5
            };
            let radius = 0.15 + 0.85 * p;
            let angle = std::f64::consts::TAU * (TURNS * p + class as f64 / classes as f64);
            let x = radius * angle.cos() + noise * normal(&mut rng);
            let y = radius * angle.sin() + noise * normal(&mut rng);
            raw.push((vec![x as f32, y as f32], class as u32));
        }
    }
    Ok(assemble(raw, (1, 1, 2), classes))
}

const IMAGE_MAGIC: [u8; 4] = [0, 0, 0x08, 0x03];
const LABEL_MAGIC: [u8; 4] = [0, 0, 0x08, 0x01];

fn read_u32_be(bytes: &[u8], offset: usize) -> u32 {
    u32::from_be_bytes(bytes[offset..offset + 4].try_into().expect("bounds checked"))
}

/// Parses an IDX image file (magic `00 00 08 03`): unsigned bytes, dims
/// (count, rows, cols). Returns raw pixels.
pub fn parse_idx_images(path: &Path) -> Result<(Vec<u8>, usize, usize, usize), DataError> {
    let bytes = fs::read(path)?;
    let display = path.display().to_string();
    if bytes.len() < 16 {
        return Err(DataError::Truncated {
            path: display,
            expected: 16,
            actual: bytes.len(),
        });
    }
    let magic: [u8; 4] = bytes[0..4].try_into().expect("len checked");
    if magic != IMAGE_MAGIC {
        return Err(DataError::BadMagic {
            path: display,
            expected: IMAGE_MAGIC,
            got: magic,
        });
    }
    let count = read_u32_be(&bytes, 4) as usize;
    let rows = read_u32_be(&bytes, 8) as usize;
    let cols = read_u32_be(&bytes, 12) as usize;
    let expected = 16 + count * rows * cols;
    if bytes.len() != expected {
        return Err(DataError::Truncated {
            path: display,
            expected,
            actual: bytes.len(),
        });
    }
    Ok((bytes[16..].to_vec(), count, rows, cols))
}

/// Parses an IDX label file (magic `00 00 08 01`).
pub fn parse_idx_labels(path: &Path) -> Result<Vec<u8>, DataError> {
    let bytes = fs::read(path)?;
    let display = path.display().to_string();
    if bytes.len() < 8 {
        return Err(DataError::Truncated {
            path: display,
            expected: 8,
            actual: bytes.len(),
        });
    }
    let magic: [u8; 4] = bytes[0..4].try_into().expect("len checked");
    if magic != LABEL_MAGIC {
        return Err(DataError::BadMagic {
            path: display,
            expected: LABEL_MAGIC,
            got: magic,
        });
    }
    let count = read_u32_be(&bytes, 4) as usize;
    let expected = 8 + count;
    if bytes.len() != expected {
        return Err(DataError::Truncated {
            path: display,
            expected,
            actual: bytes.len(),
        });
    }
    Ok(bytes[8..].to_vec())
}

/// Writes an IDX image file; inverse of [`parse_idx_images`].
pub fn write_idx_images(
    path: &Path,
    pixels: &[u8],
    count: usize,
    rows: usize,
    cols: usize,
) -> Result<(), DataError> {
    assert_eq!(pixels.len(), count * rows * cols);
    let mut file = fs::File::create(path)?;
    file.write_all(&IMAGE_MAGIC)?;
    for dim in [count, rows, cols] {
        file.write_all(&(dim as u32).to_be_bytes())?;
    }
    file.write_all(pixels)?;
    Ok(())
}

/// Writes an IDX label file; inverse of [`parse_idx_labels`].
pub fn write_idx_labels(path: &Path, labels: &[u8]) -> Result<(), DataError> {
    let mut file = fs::File::create(path)?;
    file.write_all(&LABEL_MAGIC)?;
    file.write_all(&(labels.len() as u32).to_be_bytes())?;
    file.write_all(labels)?;
    Ok(())
}

/// Parses one IDX pair into a raw `[0, 1]`-scaled split (no normalization).
fn idx_split(images_path: &Path, labels_path: &Path) -> Result<Split, DataError> {
    let (pixels, count, rows, cols) = parse_idx_images(images_path)?;
    let labels = parse_idx_labels(labels_path)?;
    if labels.len() != count {
        return Err(DataError::CountMismatch {
            images: count,
            labels: labels.len(),
        });
    }
    let class_count = labels.iter().map(|&l| l as usize + 1).max().unwrap_or(1);
    Ok(Split {
        inputs: pixels.iter().map(|&p| f32::from(p) / 255.0).collect(),
        labels: labels.iter().map(|&l| u32::from(l)).collect(),
        shape: (cols as u32, rows as u32, 1),
        class_count,
    })
}

/// Loads one IDX image/label pair as a dataset: pixels scaled to `[0, 1]`,
/// a deterministic 80/20 split (every fifth sample validates), then
/// train-statistic normalization.
pub fn load_idx(images_path: &Path, labels_path: &Path) -> Result<Dataset, DataError> {
    let whole = idx_split(images_path, labels_path)?;
    let features = whole.features();
    let build = |want_val: bool| -> Split {
        let indices: Vec<usize> = (0..whole.len()).filter(|i| (i % 5 == 4) == want_val).collect();
        Split {
            inputs: indices
                .iter()
                .flat_map(|&s| whole.inputs[s * features..(s + 1) * features].iter().copied())
                .collect(),
            labels: indices.iter().map(|&s| whole.labels[s]).collect(),
            shape: whole.shape,
            class_count: whole.class_count,
        }
    };
    Ok(normalize_pair(build(false), build(true)))
}

/// Loads separate train and validation IDX pairs, normalizing both with the
/// train split's statistics.
pub fn load_idx_pairs(
    train_images: &Path,
    train_labels: &Path,
    val_images: &Path,
    val_labels: &Path,
) -> Result<Dataset, DataError> {
    let train = idx_split(train_images, train_labels)?;
    let mut val = idx_split(val_images, val_labels)?;
    if train.shape != val.shape {
        return Err(DataError::ShapeUnadaptable {
            from: val.shape,
            to: train.shape,
        });
    }
    val.class_count = val.class_count.max(train.class_count);
    let mut train = train;
    train.class_count = val.class_count;
    Ok(normalize_pair(train, val))
}

/// Normalizes a (train, val) pair with the train split's statistics.
fn normalize_pair(train: Split, val: Split) -> Dataset {
    let features = train.features();
    let shape = train.shape;
    let class_count = train.class_count;
    let mut train = train;
    let mut val = val;

    let n = train.len().max(1) as f64;
    let mut mean = vec![0.0f64; features];
    for s in 0..train.len() {
        for f in 0..features {
            mean[f] += f64::from(train.inputs[s * features + f]);
        }
    }
    for m in &mut mean {
        *m /= n;
    }
    let mut var = vec![0.0f64; features];
    for s in 0..train.len() {
        for f in 0..features {
            let d = f64::from(train.inputs[s * features + f]) - mean[f];
            var[f] += d * d;
        }
    }
    let std: Vec<f64> = var
        .iter()
        .map(|&v| {
            let s = (v / n).sqrt();
            if s > 1e-8 {
                s
            } else {
                1.0
            }
        })
        .collect();
    for split in [&mut train, &mut val] {
        for s in 0..split.len() {
            for f in 0..features {
                let idx = s * features + f;
                split.inputs[idx] = ((f64::from(split.inputs[idx]) - mean[f]) / std[f]) as f32;
            }
        }
    }
    Dataset {
        train,
        val,
        class_count,
        shape,
        feature_mean: mean.iter().map(|&m| m as f32).collect(),
        feature_std: std.iter().map(|&s| s as f32).collect(),
    }
}

/// Seeded minibatch stream for one epoch: a fresh shuffle per `(seed, epoch)`
/// pair, every sample exactly once, last partial batch kept.
pub fn batches(split: &Split, batch_size: usize, seed: u64, epoch: u64) -> Vec<Batch> {
    assert!(batch_size >= 1, "batch_size must be at least 1");
    let mut order: Vec<usize> = (0..split.len()).collect();
    order.shuffle(&mut stream(seed, "batches", epoch));
    order
        .chunks(batch_size)
        .map(|chunk| split.gather(chunk))
        .collect()
}

/// Unshuffled fixed-size chunks for deterministic evaluation.
pub fn eval_batches(split: &Split, batch_size: usize) -> Vec<Batch> {
    let order: Vec<usize> = (0..split.len()).collect();
    order
        .chunks(batch_size.max(1))
        .map(|chunk| split.gather(chunk))
        .collect()
}
