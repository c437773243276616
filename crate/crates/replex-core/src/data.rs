//! Datasets: in-memory representation, synthetic generators, deterministic
//! splits, per-feature normalization, and the IDX binary format (the one
//! used by the classic handwritten-digit archives).

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

use crate::rng_from_seed;

/// Row-major feature matrix plus integer labels.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    /// `n × d` feature values, row-major.
    pub features: Vec<f64>,
    /// Number of examples.
    pub n: usize,
    /// Feature dimension.
    pub d: usize,
    /// One label in `0..n_classes` per example.
    pub labels: Vec<u32>,
    /// Number of classes.
    pub n_classes: usize,
    /// Where the data came from (generator name and parameters, or a path).
    pub provenance: String,
}

#[derive(Debug, Error)]
pub enum DataError {
    #[error("dataset invariant violated: {0}")]
    Malformed(String),
    #[error("need at least {needed} examples for {what}, got {got}")]
    TooSmall { needed: usize, got: usize, what: &'static str },
    #[error("fraction must lie in (0, 1), got {0}")]
    BadFraction(f64),
    #[error("{path}: bad magic at byte 0: expected {expected:#010x}, found {found:#010x}")]
    BadMagic { path: PathBuf, expected: u32, found: u32 },
    #[error("{path}: truncated at byte offset {offset} (needed {needed} more bytes)")]
    Truncated { path: PathBuf, offset: u64, needed: u64 },
    #[error("image file has {images} items but label file has {labels}")]
    CountMismatch { images: u64, labels: u64 },
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("feature value {value} at row {row}, column {col} is not byte-representable (k/255)")]
    NotByteRepresentable { value: f64, row: usize, col: usize },
    #[error("label {label} at row {row} does not fit in one byte")]
    LabelTooLarge { label: u32, row: usize },
}

impl Dataset {
    /// Validates internal consistency.
    pub fn validate(&self) -> Result<(), DataError> {
        if self.features.len() != self.n * self.d {
            return Err(DataError::Malformed(format!(
                "feature buffer has {} values, expected n·d = {}",
                self.features.len(),
                self.n * self.d
            )));
        }
        if self.labels.len() != self.n {
            return Err(DataError::Malformed(format!(
                "{} labels for {} examples",
                self.labels.len(),
                self.n
            )));
        }
        if let Some(&l) = self.labels.iter().find(|&&l| l as usize >= self.n_classes) {
            return Err(DataError::Malformed(format!(
                "label {l} out of range for {} classes",
                self.n_classes
            )));
        }
        Ok(())
    }

    /// Feature row of example `i`.
    pub fn row(&self, i: usize) -> &[f64] {
        &self.features[i * self.d..(i + 1) * self.d]
    }

    /// Copies the rows selected by `indices` into flat feature/label buffers
    /// (the shape mini-batch computations want).
    pub fn gather(&self, indices: &[usize], features: &mut Vec<f64>, labels: &mut Vec<u32>) {
        features.clear();
        labels.clear();
        for &i in indices {
            features.extend_from_slice(self.row(i));
            labels.push(self.labels[i]);
        }
    }

    fn select(&self, indices: &[usize], provenance: String) -> Dataset {
        let mut features = Vec::with_capacity(indices.len() * self.d);
        let mut labels = Vec::with_capacity(indices.len());
        for &i in indices {
            features.extend_from_slice(self.row(i));
            labels.push(self.labels[i]);
        }
        Dataset { features, n: indices.len(), d: self.d, labels, n_classes: self.n_classes, provenance }
    }
}

/// Two interleaved half-moons in the plane, `⌈n/2⌉` points on the upper moon
/// (label 0, unit circle around the origin) and `⌊n/2⌋` on the lower moon
/// (label 1, unit circle around `(1, 0.5)`), swept by evenly spaced angles
/// and perturbed by iid Gaussian noise of standard deviation `noise_sd`.
pub fn synth_two_moons(n: usize, noise_sd: f64, seed: u64) -> Result<Dataset, DataError> {
    if n < 2 {
        return Err(DataError::TooSmall { needed: 2, got: n, what: "two moons" });
    }
    if noise_sd < 0.0 || !noise_sd.is_finite() {
        return Err(DataError::Malformed(format!("noise_sd must be nonnegative, got {noise_sd}")));
    }
    let n_upper = n - n / 2;
    let n_lower = n / 2;
    let mut rng = rng_from_seed(seed);
    let mut features = Vec::with_capacity(n * 2);
    let mut labels = Vec::with_capacity(n);
    let sweep = |i: usize, count: usize| -> f64 {
        if count == 1 {
            0.0
        } else {
            std::f64::consts::PI * i as f64 / (count - 1) as f64
        }
    };
    for i in 0..n_upper {
        let t = sweep(i, n_upper);
        features.push(t.cos());
        features.push(t.sin());
        labels.push(0);
    }
    for i in 0..n_lower {
        let t = sweep(i, n_lower);
        features.push(1.0 - t.cos());
        features.push(0.5 - t.sin());
        labels.push(1);
    }
    if noise_sd > 0.0 {
        for v in features.iter_mut() {
            let xi: f64 = rng.sample(StandardNormal);
            *v += noise_sd * xi;
        }
    }
    Ok(Dataset {
        features,
        n,
        d: 2,
        labels,
        n_classes: 2,
        provenance: format!("two_moons(n={n}, noise_sd={noise_sd}, seed={seed})"),
    })
}

/// `k` isotropic Gaussian blobs in the plane. Cluster centers sit evenly on
/// a circle of radius 3 with a seed-dependent phase; points get iid Gaussian
/// coordinates of standard deviation `spread` around their center. Class
/// sizes differ by at most one.
pub fn synth_blobs(n: usize, k: usize, spread: f64, seed: u64) -> Result<Dataset, DataError> {
    if k == 0 {
        return Err(DataError::Malformed("need at least one blob".into()));
    }
    if n < 2 * k {
        return Err(DataError::TooSmall { needed: 2 * k, got: n, what: "gaussian blobs" });
    }
    if spread < 0.0 || !spread.is_finite() {
        return Err(DataError::Malformed(format!("spread must be nonnegative, got {spread}")));
    }
    let mut rng = rng_from_seed(seed);
    let phase: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
    let radius = 3.0;
    let mut features = Vec::with_capacity(n * 2);
    let mut labels = Vec::with_capacity(n);
    for c in 0..k {
        let count = n / k + usize::from(c < n % k);
        let angle = phase + std::f64::consts::TAU * c as f64 / k as f64;
        let (cx, cy) = (radius * angle.cos(), radius * angle.sin());
        for _ in 0..count {
            let (dx, dy): (f64, f64) = (rng.sample(StandardNormal), rng.sample(StandardNormal));
            features.push(cx + spread * dx);
            features.push(cy + spread * dy);
            labels.push(c as u32);
        }
    }
    Ok(Dataset {
        features,
        n,
        d: 2,
        labels,
        n_classes: k,
        provenance: format!("blobs(n={n}, k={k}, spread={spread}, seed={seed})"),
    })
}

/// Splits into `(train, validation)` by a seeded uniform shuffle. The train
/// side gets `⌈n·(1−fraction)⌉` examples, validation the remainder.
pub fn split(
    dataset: &Dataset,
    validation_fraction: f64,
    seed: u64,
) -> Result<(Dataset, Dataset), DataError> {
    dataset.validate()?;
    if !(validation_fraction > 0.0 && validation_fraction < 1.0) {
        return Err(DataError::BadFraction(validation_fraction));
    }
    if dataset.n < 2 {
        return Err(DataError::TooSmall { needed: 2, got: dataset.n, what: "a split" });
    }
    let mut indices: Vec<usize> = (0..dataset.n).collect();
    indices.shuffle(&mut rng_from_seed(seed));
    let n_train = ((dataset.n as f64) * (1.0 - validation_fraction)).ceil() as usize;
    let n_train = n_train.clamp(1, dataset.n - 1);
    let train = dataset.select(
        &indices[..n_train],
        format!("{} [train split, seed={seed}]", dataset.provenance),
    );
    let validation = dataset.select(
        &indices[n_train..],
        format!("{} [validation split, seed={seed}]", dataset.provenance),
    );
    Ok((train, validation))
}

/// Subtracts the training set's per-feature mean from the training set and
/// from every dataset in `others` (validation/test must never leak their own
/// statistics).
pub fn normalize_per_feature_mean(train: &mut Dataset, others: &mut [&mut Dataset]) {
    let d = train.d;
    let mut means = vec![0.0; d];
    for i in 0..train.n {
        for (m, v) in means.iter_mut().zip(train.row(i)) {
            *m += v;
        }
    }
    for m in means.iter_mut() {
        *m /= train.n as f64;
    }
    let apply = |ds: &mut Dataset| {
        for i in 0..ds.n {
            for j in 0..d {
                ds.features[i * d + j] -= means[j];
            }
        }
    };
    apply(train);
    for ds in others {
        apply(ds);
    }
}

const IDX_IMAGES_MAGIC: u32 = 2051;
const IDX_LABELS_MAGIC: u32 = 2049;

struct IdxReader {
    path: PathBuf,
    reader: BufReader<File>,
    offset: u64,
}

impl IdxReader {
    fn open(path: &Path) -> Result<Self, DataError> {
        let file = File::open(path)
            .map_err(|source| DataError::Io { path: path.to_path_buf(), source })?;
        Ok(IdxReader { path: path.to_path_buf(), reader: BufReader::new(file), offset: 0 })
    }

    fn read_exact(&mut self, buf: &mut [u8]) -> Result<(), DataError> {
        match self.reader.read_exact(buf) {
            Ok(()) => {
                self.offset += buf.len() as u64;
                Ok(())
            }
            Err(e) if e.kind() == std::io::ErrorKind::UnexpectedEof => Err(DataError::Truncated {
                path: self.path.clone(),
                offset: self.offset,
                needed: buf.len() as u64,
            }),
            Err(source) => Err(DataError::Io { path: self.path.clone(), source }),
        }
    }

    fn read_u32(&mut self) -> Result<u32, DataError> {
        let mut b = [0u8; 4];
        self.read_exact(&mut b)?;
        Ok(u32::from_be_bytes(b))
    }
}

/// Reads an IDX image/label file pair into a dataset. Pixels are scaled to
/// `[0, 1]` by `1/255`; image dimensions beyond the item count are flattened
/// into the feature dimension. All header integers are big-endian.
pub fn read_idx(images_path: &Path, labels_path: &Path) -> Result<Dataset, DataError> {
    let mut images = IdxReader::open(images_path)?;
    let magic = images.read_u32()?;
    if magic != IDX_IMAGES_MAGIC {
        return Err(DataError::BadMagic {
            path: images.path.clone(),
            expected: IDX_IMAGES_MAGIC,
            found: magic,
        });
    }
    let n = images.read_u32()? as u64;
    let rows = images.read_u32()? as u64;
    let cols = images.read_u32()? as u64;
    let d = (rows * cols) as usize;
    let mut pixels = vec![0u8; (n as usize) * d];
    images.read_exact(&mut pixels)?;

    let mut labels_file = IdxReader::open(labels_path)?;
    let magic = labels_file.read_u32()?;
    if magic != IDX_LABELS_MAGIC {
        return Err(DataError::BadMagic {
            path: labels_file.path.clone(),
            expected: IDX_LABELS_MAGIC,
            found: magic,
        });
    }
    let n_labels = labels_file.read_u32()? as u64;
    if n_labels != n {
        return Err(DataError::CountMismatch { images: n, labels: n_labels });
    }
    let mut label_bytes = vec![0u8; n as usize];
    labels_file.read_exact(&mut label_bytes)?;

    let features: Vec<f64> = pixels.iter().map(|&p| p as f64 / 255.0).collect();
    let labels: Vec<u32> = label_bytes.iter().map(|&l| l as u32).collect();
    let n_classes = labels.iter().map(|&l| l as usize + 1).max().unwrap_or(1);
    Ok(Dataset {
        features,
        n: n as usize,
        d,
        labels,
        n_classes,
        provenance: format!("idx({}, {})", images_path.display(), labels_path.display()),
    })
}

/// Writes a dataset as an IDX image/label file pair (images as `n × 1 × d`).
/// Every feature must be exactly `k/255` for a byte `k` and every label must
/// fit in a byte; this is the inverse of `read_idx`, so a read → write →
/// read round trip is bit-identical.
pub fn write_idx(dataset: &Dataset, images_path: &Path, labels_path: &Path) -> Result<(), DataError> {
    dataset.validate()?;
    let mut pixels = Vec::with_capacity(dataset.features.len());
    for (i, &v) in dataset.features.iter().enumerate() {
        let scaled = v * 255.0;
        let byte = scaled.round();
        if !(0.0..=255.0).contains(&byte) || (byte / 255.0 - v) != 0.0 {
            return Err(DataError::NotByteRepresentable {
                value: v,
                row: i / dataset.d,
                col: i % dataset.d,
            });
        }
        pixels.push(byte as u8);
    }
    let mut label_bytes = Vec::with_capacity(dataset.n);
    for (row, &l) in dataset.labels.iter().enumerate() {
        if l > u8::MAX as u32 {
            return Err(DataError::LabelTooLarge { label: l, row });
        }
        label_bytes.push(l as u8);
    }

    let write_file = |path: &Path, header: &[u32], body: &[u8]| -> Result<(), DataError> {
        let file = File::create(path)
            .map_err(|source| DataError::Io { path: path.to_path_buf(), source })?;
        let mut w = BufWriter::new(file);
        let io_err = |source| DataError::Io { path: path.to_path_buf(), source };
        for &h in header {
            w.write_all(&h.to_be_bytes()).map_err(io_err)?;
        }
        w.write_all(body).map_err(io_err)?;
        w.flush().map_err(io_err)
    };
    write_file(
        images_path,
        &[IDX_IMAGES_MAGIC, dataset.n as u32, 1, dataset.d as u32],
        &pixels,
    )?;
    write_file(labels_path, &[IDX_LABELS_MAGIC, dataset.n as u32], &label_bytes)
}
