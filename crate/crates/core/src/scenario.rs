//! Dataset ingestion and semi-supervised scenario construction.
//!
//! A [`LabeledDataset`] is an immutable, fully loaded dataset; scenarios are
//! carved out of it by [`build_scenario`]: pick normal classes, inject
//! `gamma_l * n` collected anomalies from the chosen anomaly classes,
//! pollute the normal pool with `gamma_p * n` unlabeled anomalies from all
//! anomaly classes, and split the held-out partition into validation and
//! test. Construction is a pure function of `(dataset, spec)`.
//!
//! Image datasets arrive in their standard published archives (IDX for
//! MNIST/F-MNIST, binary batches for CIFAR-10), are resized to 32x32x3 and
//! normalized to [-1, 1]. Tabular data arrives as CSV with a trailing
//! binary `label` column and is standardized feature-wise.

use crate::error::{Error, Result};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};
use std::io::Read;
use std::path::{Path, PathBuf};

pub const IMAGE_SIDE: usize = 32;
pub const IMAGE_CHANNELS: usize = 3;

/// Fraction of a tabular dataset reserved for training when the source has
/// no published train/test partition (the rest becomes the held-out pool).
pub const TABULAR_TRAIN_FRACTION: f64 = 0.6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DatasetKind {
    Image,
    Tabular,
}

enum Storage {
    /// Images at final 32x32 resolution; grayscale sources keep one stored
    /// channel and are replicated to three on access.
    ImageU8 {
        data: Vec<u8>,
        stored_channels: usize,
    },
    TabularF32 {
        data: Vec<f32>,
    },
}

/// An immutable dataset with class labels.
pub struct LabeledDataset {
    name: String,
    kind: DatasetKind,
    storage: Storage,
    labels: Vec<u32>,
    /// Per-sample shape exposed to models: [3, 32, 32] or [features].
    shape: Vec<usize>,
    /// Samples `0..train_len` form the published train partition; the rest
    /// is the held-out partition. Equal to `len` when the source has no
    /// partition (tabular benchmarks), in which case scenarios carve one.
    train_len: usize,
}

impl std::fmt::Debug for LabeledDataset {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("LabeledDataset")
            .field("name", &self.name)
            .field("kind", &self.kind)
            .field("len", &self.labels.len())
            .field("shape", &self.shape)
            .field("train_len", &self.train_len)
            .finish()
    }
}

impl LabeledDataset {
    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn kind(&self) -> DatasetKind {
        self.kind
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn labels(&self) -> &[u32] {
        &self.labels
    }

    pub fn sample_shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn sample_dim(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn train_len(&self) -> usize {
        self.train_len
    }

    pub fn classes(&self) -> BTreeSet<u32> {
        self.labels.iter().copied().collect()
    }

    /// Copy sample `idx` into `out` as model-ready floats (images in
    /// [-1, 1] with channels replicated as needed).
    pub fn copy_sample_into(&self, idx: usize, out: &mut [f32]) {
        let dim = self.sample_dim();
        assert_eq!(out.len(), dim, "output buffer does not match sample dim");
        match &self.storage {
            Storage::ImageU8 {
                data,
                stored_channels,
            } => {
                let plane = IMAGE_SIDE * IMAGE_SIDE;
                let stored = *stored_channels;
                let src = &data[idx * stored * plane..(idx + 1) * stored * plane];
                for c in 0..IMAGE_CHANNELS {
                    let sc = if stored == 1 { 0 } else { c };
                    for p in 0..plane {
                        out[c * plane + p] = src[sc * plane + p] as f32 / 127.5 - 1.0;
                    }
                }
            }
            Storage::TabularF32 { data } => {
                out.copy_from_slice(&data[idx * dim..(idx + 1) * dim]);
            }
        }
    }

    pub fn sample_vec(&self, idx: usize) -> Vec<f32> {
        let mut out = vec![0.0; self.sample_dim()];
        self.copy_sample_into(idx, &mut out);
        out
    }
}

/// A semi-supervised experiment definition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScenarioSpec {
    pub normal_classes: BTreeSet<u32>,
    pub collected_anomaly_classes: BTreeSet<u32>,
    /// Collected anomalies per normal training sample.
    pub gamma_l: f64,
    /// Pollution anomalies per normal training sample.
    pub gamma_p: f64,
    pub seed: u64,
    pub val_fraction: f64,
}

impl Default for ScenarioSpec {
    fn default() -> Self {
        ScenarioSpec {
            normal_classes: BTreeSet::new(),
            collected_anomaly_classes: BTreeSet::new(),
            gamma_l: 0.0,
            gamma_p: 0.0,
            seed: 0,
            val_fraction: 0.2,
        }
    }
}

impl ScenarioSpec {
    /// Number of distinct collected-anomaly classes (k_l).
    pub fn k_l(&self) -> usize {
        self.collected_anomaly_classes.len()
    }

    fn validate(&self) -> Result<()> {
        if self.normal_classes.is_empty() {
            return Err(Error::invalid("at least one normal class is required"));
        }
        if !self
            .normal_classes
            .is_disjoint(&self.collected_anomaly_classes)
        {
            return Err(Error::invalid(
                "normal and collected-anomaly class sets overlap",
            ));
        }
        if self.gamma_l < 0.0 || self.gamma_p < 0.0 {
            return Err(Error::invalid("gamma_l and gamma_p must be >= 0"));
        }
        if self.gamma_l > 0.0 && self.collected_anomaly_classes.is_empty() {
            return Err(Error::invalid(
                "gamma_l > 0 requires at least one collected-anomaly class",
            ));
        }
        if !(self.val_fraction > 0.0 && self.val_fraction < 1.0) {
            return Err(Error::invalid("val_fraction must lie in (0, 1)"));
        }
        Ok(())
    }
}

/// An evaluation split: model-ready samples plus binary labels and
/// provenance (original class and dataset index per sample).
#[derive(Debug, Clone, Default)]
pub struct LabeledSubset {
    pub samples: Vec<Vec<f32>>,
    /// 0 = normal, 1 = anomaly.
    pub labels: Vec<u8>,
    pub class_ids: Vec<u32>,
    pub source_indices: Vec<usize>,
}

impl LabeledSubset {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}

/// Index bookkeeping that makes a scenario reproducible and auditable.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScenarioMeta {
    pub dataset: String,
    pub spec: ScenarioSpec,
    pub n_normal: usize,
    pub n_collected: usize,
    pub n_pollution: usize,
    /// Pollution is sampled uniformly from all anomaly classes.
    pub pollution_classes: BTreeSet<u32>,
    pub train_normal_indices: Vec<usize>,
    pub pollution_indices: Vec<usize>,
    pub train_anomaly_indices: Vec<usize>,
    pub val_indices: Vec<usize>,
    pub test_indices: Vec<usize>,
    /// Feature means/stds used to standardize tabular scenarios (training
    /// normals only); empty for images.
    pub feature_means: Vec<f64>,
    pub feature_stds: Vec<f64>,
}

/// The materialized scenario: training pools plus labeled val/test splits.
pub struct ScenarioData {
    /// X+: normals plus pollution anomalies, all treated as normal.
    pub train_normal: Vec<Vec<f32>>,
    /// X-: collected anomalies; empty in the unsupervised reduction.
    pub train_anomaly: Vec<Vec<f32>>,
    pub val: LabeledSubset,
    pub test: LabeledSubset,
    pub sample_shape: Vec<usize>,
    pub meta: ScenarioMeta,
}

/// Round half away from zero so fractional sample counts are reproducible.
pub fn round_half_away(x: f64) -> usize {
    if x <= 0.0 {
        0
    } else {
        (x + 0.5).floor() as usize
    }
}

// ---------------------------------------------------------------------------
// Image loaders
// ---------------------------------------------------------------------------

fn open_maybe_gz(path: &Path) -> Result<Vec<u8>> {
    let lookup = |p: &Path| -> Option<PathBuf> {
        if p.exists() {
            return Some(p.to_path_buf());
        }
        let gz = PathBuf::from(format!("{}.gz", p.display()));
        gz.exists().then_some(gz)
    };
    let actual = lookup(path).ok_or_else(|| {
        Error::io(
            path,
            std::io::Error::new(
                std::io::ErrorKind::NotFound,
                format!(
                    "dataset file {} (or .gz) not found; download the standard archive into the dataset root",
                    path.display()
                ),
            ),
        )
    })?;
    let raw = std::fs::read(&actual).map_err(|e| Error::io(&actual, e))?;
    if actual.extension().is_some_and(|e| e == "gz") {
        let mut decoder = flate2::read::GzDecoder::new(&raw[..]);
        let mut out = Vec::new();
        decoder
            .read_to_end(&mut out)
            .map_err(|e| Error::CorruptData {
                path: actual.clone(),
                message: format!("gzip decode failed: {e}"),
            })?;
        Ok(out)
    } else {
        Ok(raw)
    }
}

fn be_u32(bytes: &[u8], off: usize) -> u32 {
    u32::from_be_bytes([bytes[off], bytes[off + 1], bytes[off + 2], bytes[off + 3]])
}

/// Parse an IDX image file (magic 2051) into (n, rows, cols, pixels).
fn parse_idx_images(path: &Path) -> Result<(usize, usize, usize, Vec<u8>)> {
    let bytes = open_maybe_gz(path)?;
    let corrupt = |message: String| Error::CorruptData {
        path: path.to_path_buf(),
        message,
    };
    if bytes.len() < 16 {
        return Err(corrupt("file shorter than the IDX image header".into()));
    }
    let magic = be_u32(&bytes, 0);
    if magic != 2051 {
        return Err(corrupt(format!(
            "bad IDX image magic {magic}, expected 2051"
        )));
    }
    let n = be_u32(&bytes, 4) as usize;
    let rows = be_u32(&bytes, 8) as usize;
    let cols = be_u32(&bytes, 12) as usize;
    let expected = 16 + n * rows * cols;
    if bytes.len() != expected {
        return Err(corrupt(format!(
            "IDX image payload is {} bytes, expected {expected}",
            bytes.len()
        )));
    }
    Ok((n, rows, cols, bytes[16..].to_vec()))
}

/// Parse an IDX label file (magic 2049).
fn parse_idx_labels(path: &Path) -> Result<Vec<u8>> {
    let bytes = open_maybe_gz(path)?;
    let corrupt = |message: String| Error::CorruptData {
        path: path.to_path_buf(),
        message,
    };
    if bytes.len() < 8 {
        return Err(corrupt("file shorter than the IDX label header".into()));
    }
    let magic = be_u32(&bytes, 0);
    if magic != 2049 {
        return Err(corrupt(format!(
            "bad IDX label magic {magic}, expected 2049"
        )));
    }
    let n = be_u32(&bytes, 4) as usize;
    if bytes.len() != 8 + n {
        return Err(corrupt(format!(
            "IDX label payload is {} bytes, expected {}",
            bytes.len(),
            8 + n
        )));
    }
    Ok(bytes[8..].to_vec())
}

/// Bilinear resize of a single-channel u8 image.
fn resize_bilinear(src: &[u8], src_side: usize, dst_side: usize) -> Vec<u8> {
    if src_side == dst_side {
        return src.to_vec();
    }
    let scale = src_side as f32 / dst_side as f32;
    let mut out = vec![0u8; dst_side * dst_side];
    for y in 0..dst_side {
        let sy = ((y as f32 + 0.5) * scale - 0.5).clamp(0.0, src_side as f32 - 1.0);
        let y0 = sy.floor() as usize;
        let y1 = (y0 + 1).min(src_side - 1);
        let fy = sy - y0 as f32;
        for x in 0..dst_side {
            let sx = ((x as f32 + 0.5) * scale - 0.5).clamp(0.0, src_side as f32 - 1.0);
            let x0 = sx.floor() as usize;
            let x1 = (x0 + 1).min(src_side - 1);
            let fx = sx - x0 as f32;
            let v00 = src[y0 * src_side + x0] as f32;
            let v01 = src[y0 * src_side + x1] as f32;
            let v10 = src[y1 * src_side + x0] as f32;
            let v11 = src[y1 * src_side + x1] as f32;
            let top = v00 + (v01 - v00) * fx;
            let bottom = v10 + (v11 - v10) * fx;
            out[y * dst_side + x] = (top + (bottom - top) * fy).round().clamp(0.0, 255.0) as u8;
        }
    }
    out
}

/// Load an image dataset from its standard published archives.
///
/// `name` is one of `mnist`, `fmnist` (IDX files, optionally gzipped) or
/// `cifar10` (binary batches). Images come out 32x32x3 in [-1, 1].
pub fn load_image_dataset(name: &str, root: &Path) -> Result<LabeledDataset> {
    match name {
        "mnist" | "fmnist" => load_idx_dataset(name, root),
        "cifar10" => load_cifar10(root),
        other => Err(Error::invalid(format!(
            "unknown image dataset '{other}' (expected mnist, fmnist or cifar10)"
        ))),
    }
}

fn load_idx_dataset(name: &str, root: &Path) -> Result<LabeledDataset> {
    let (n_train, rows, cols, train_px) = parse_idx_images(&root.join("train-images-idx3-ubyte"))?;
    let train_labels = parse_idx_labels(&root.join("train-labels-idx1-ubyte"))?;
    let (n_test, rows_t, cols_t, test_px) = parse_idx_images(&root.join("t10k-images-idx3-ubyte"))?;
    let test_labels = parse_idx_labels(&root.join("t10k-labels-idx1-ubyte"))?;
    if train_labels.len() != n_train
        || test_labels.len() != n_test
        || rows != rows_t
        || cols != cols_t
    {
        return Err(Error::CorruptData {
            path: root.to_path_buf(),
            message: "image and label counts disagree across archive files".into(),
        });
    }

    let plane = IMAGE_SIDE * IMAGE_SIDE;
    let total = n_train + n_test;
    let mut data = vec![0u8; total * plane];
    for (i, px) in train_px
        .chunks(rows * cols)
        .chain(test_px.chunks(rows * cols))
        .enumerate()
    {
        let resized = resize_bilinear(px, rows, IMAGE_SIDE);
        data[i * plane..(i + 1) * plane].copy_from_slice(&resized);
    }
    let mut labels: Vec<u32> = train_labels.iter().map(|&l| l as u32).collect();
    labels.extend(test_labels.iter().map(|&l| l as u32));

    Ok(LabeledDataset {
        name: name.to_string(),
        kind: DatasetKind::Image,
        storage: Storage::ImageU8 {
            data,
            stored_channels: 1,
        },
        labels,
        shape: vec![IMAGE_CHANNELS, IMAGE_SIDE, IMAGE_SIDE],
        train_len: n_train,
    })
}

fn load_cifar10(root: &Path) -> Result<LabeledDataset> {
    // Accept either the extracted directory or the root containing it.
    let dir = if root.join("data_batch_1.bin").exists() {
        root.to_path_buf()
    } else {
        root.join("cifar-10-batches-bin")
    };
    const RECORD: usize = 1 + 3072;
    fn read_batch(dir: &Path, file: &str, data: &mut Vec<u8>, labels: &mut Vec<u32>) -> Result<()> {
        let path = dir.join(file);
        let bytes = std::fs::read(&path).map_err(|e| Error::io(&path, e))?;
        if bytes.len() % RECORD != 0 {
            return Err(Error::CorruptData {
                path,
                message: format!("batch size {} is not a multiple of {RECORD}", bytes.len()),
            });
        }
        for rec in bytes.chunks(RECORD) {
            labels.push(rec[0] as u32);
            data.extend_from_slice(&rec[1..]);
        }
        Ok(())
    }
    let mut data = Vec::new();
    let mut labels = Vec::new();
    for i in 1..=5 {
        read_batch(&dir, &format!("data_batch_{i}.bin"), &mut data, &mut labels)?;
    }
    let train_len = labels.len();
    read_batch(&dir, "test_batch.bin", &mut data, &mut labels)?;

    Ok(LabeledDataset {
        name: "cifar10".into(),
        kind: DatasetKind::Image,
        storage: Storage::ImageU8 {
            data,
            stored_channels: 3,
        },
        labels,
        shape: vec![IMAGE_CHANNELS, IMAGE_SIDE, IMAGE_SIDE],
        train_len,
    })
}

// ---------------------------------------------------------------------------
// Tabular loader
// ---------------------------------------------------------------------------

/// Load a tabular benchmark from CSV: a header row, numeric feature
/// columns, and a binary label column (0 normal, 1 anomaly).
///
/// Features are standardized to zero mean and unit variance; constant
/// columns standardize to all zeros. Scenarios re-standardize their splits
/// using training-pool statistics, so the final scale a model sees is
/// governed by training data only.
pub fn load_tabular_csv(path: &Path, label_column: &str) -> Result<LabeledDataset> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = text.lines().enumerate();
    let (_, header) = lines
        .next()
        .ok_or_else(|| Error::invalid(format!("{}: empty CSV", path.display())))?;
    let columns: Vec<&str> = header.split(',').map(str::trim).collect();
    let label_idx = columns
        .iter()
        .position(|&c| c == label_column)
        .ok_or_else(|| {
            Error::invalid(format!(
                "{}: label column '{label_column}' not found in header",
                path.display()
            ))
        })?;
    let n_features = columns.len() - 1;

    let mut features: Vec<f32> = Vec::new();
    let mut labels: Vec<u32> = Vec::new();
    for (line_no, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != columns.len() {
            return Err(Error::Parse {
                row: line_no + 1,
                column: format!("{} fields", fields.len()),
                message: format!("expected {} fields", columns.len()),
            });
        }
        for (ci, field) in fields.iter().enumerate() {
            if ci == label_idx {
                match *field {
                    "0" => labels.push(0),
                    "1" => labels.push(1),
                    other => {
                        return Err(Error::Parse {
                            row: line_no + 1,
                            column: columns[ci].to_string(),
                            message: format!("label must be 0 or 1, got '{other}'"),
                        })
                    }
                }
            } else {
                let v: f64 = field.parse().map_err(|_| Error::Parse {
                    row: line_no + 1,
                    column: columns[ci].to_string(),
                    message: format!("non-numeric feature value '{field}'"),
                })?;
                features.push(v as f32);
            }
        }
    }
    if labels.is_empty() {
        return Err(Error::invalid(format!("{}: no data rows", path.display())));
    }

    let n = labels.len();
    standardize_in_place(&mut features, n, n_features, None);

    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "tabular".into());
    Ok(LabeledDataset {
        name,
        kind: DatasetKind::Tabular,
        storage: Storage::TabularF32 { data: features },
        labels,
        shape: vec![n_features],
        train_len: n,
    })
}

/// Standardize columns in place; statistics come from `stat_rows` when
/// given (row indices), otherwise from all rows. Columns with vanishing
/// variance become all zeros. Returns (means, stds).
fn standardize_in_place(
    data: &mut [f32],
    n_rows: usize,
    n_cols: usize,
    stat_rows: Option<&[usize]>,
) -> (Vec<f64>, Vec<f64>) {
    let mut means = vec![0.0f64; n_cols];
    let mut stds = vec![0.0f64; n_cols];
    let count = stat_rows.map_or(n_rows, |r| r.len()).max(1);
    let row_iter: Box<dyn Iterator<Item = usize>> = match stat_rows {
        Some(rows) => Box::new(rows.iter().copied()),
        None => Box::new(0..n_rows),
    };
    let rows: Vec<usize> = row_iter.collect();
    for &r in &rows {
        for c in 0..n_cols {
            means[c] += data[r * n_cols + c] as f64;
        }
    }
    for m in &mut means {
        *m /= count as f64;
    }
    for &r in &rows {
        for c in 0..n_cols {
            let d = data[r * n_cols + c] as f64 - means[c];
            stds[c] += d * d;
        }
    }
    for s in &mut stds {
        *s = (*s / count as f64).sqrt();
    }
    for r in 0..n_rows {
        for c in 0..n_cols {
            let v = &mut data[r * n_cols + c];
            *v = if stds[c] > 1e-12 {
                ((*v as f64 - means[c]) / stds[c]) as f32
            } else {
                0.0
            };
        }
    }
    (means, stds)
}

// ---------------------------------------------------------------------------
// Synthetic data
// ---------------------------------------------------------------------------

/// Generate a ring of Gaussian clusters in 2-d; cluster index is the class
/// label. Useful for desk-scale experiments where some clusters play the
/// normal role and others are (seen or novel) anomalies.
pub fn make_cluster_ring(
    clusters: usize,
    per_cluster: usize,
    radius: f64,
    sigma: f64,
    seed: u64,
) -> LabeledDataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = rand_distr::Normal::new(0.0, sigma).unwrap();
    let mut data = Vec::with_capacity(clusters * per_cluster * 2);
    let mut labels = Vec::with_capacity(clusters * per_cluster);
    for k in 0..clusters {
        let angle = 2.0 * std::f64::consts::PI * k as f64 / clusters as f64;
        let (cx, cy) = (radius * angle.cos(), radius * angle.sin());
        for _ in 0..per_cluster {
            data.push((cx + normal.sample(&mut rng)) as f32);
            data.push((cy + normal.sample(&mut rng)) as f32);
            labels.push(k as u32);
        }
    }
    let train_len = labels.len();
    LabeledDataset {
        name: format!("ring{clusters}"),
        kind: DatasetKind::Tabular,
        storage: Storage::TabularF32 { data },
        labels,
        shape: vec![2],
        train_len,
    }
}

// ---------------------------------------------------------------------------
// Scenario construction
// ---------------------------------------------------------------------------

fn indices_by_class(labels: &[u32], range: std::ops::Range<usize>) -> BTreeMap<u32, Vec<usize>> {
    let mut map: BTreeMap<u32, Vec<usize>> = BTreeMap::new();
    for i in range {
        map.entry(labels[i]).or_default().push(i);
    }
    map
}

/// Build a scenario from a dataset and a spec. Deterministic for a given
/// `(dataset, spec)` pair; all random draws come from the spec seed.
pub fn build_scenario(dataset: &LabeledDataset, spec: &ScenarioSpec) -> Result<ScenarioData> {
    spec.validate()?;
    let classes = dataset.classes();
    for c in spec
        .normal_classes
        .iter()
        .chain(spec.collected_anomaly_classes.iter())
    {
        if !classes.contains(c) {
            return Err(Error::invalid(format!("class {c} not present in dataset")));
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);

    // Train / held-out pools. Published partitions are respected; tabular
    // sources without one get a stratified carve.
    let (train_pool, heldout_pool) = if dataset.train_len() < dataset.len() {
        (
            indices_by_class(dataset.labels(), 0..dataset.train_len()),
            indices_by_class(dataset.labels(), dataset.train_len()..dataset.len()),
        )
    } else {
        let by_class = indices_by_class(dataset.labels(), 0..dataset.len());
        let mut train: BTreeMap<u32, Vec<usize>> = BTreeMap::new();
        let mut held: BTreeMap<u32, Vec<usize>> = BTreeMap::new();
        for (class, mut idxs) in by_class {
            idxs.shuffle(&mut rng);
            let n_train =
                round_half_away(TABULAR_TRAIN_FRACTION * idxs.len() as f64).min(idxs.len());
            let rest = idxs.split_off(n_train);
            train.insert(class, idxs);
            held.insert(class, rest);
        }
        (train, held)
    };

    let anomaly_classes: BTreeSet<u32> = classes
        .iter()
        .copied()
        .filter(|c| !spec.normal_classes.contains(c))
        .collect();

    // X+ base: every training sample of the normal classes.
    let mut train_normal_indices: Vec<usize> = spec
        .normal_classes
        .iter()
        .flat_map(|c| train_pool.get(c).cloned().unwrap_or_default())
        .collect();
    train_normal_indices.sort_unstable();
    let n_normal = train_normal_indices.len();
    if n_normal == 0 {
        return Err(Error::InsufficientData(
            "no training samples in the normal classes".into(),
        ));
    }

    let n_collected = round_half_away(spec.gamma_l * n_normal as f64);
    let n_pollution = round_half_away(spec.gamma_p * n_normal as f64);

    // Collected anomalies: uniform without replacement from the chosen classes.
    let mut collected_pool: Vec<usize> = spec
        .collected_anomaly_classes
        .iter()
        .flat_map(|c| train_pool.get(c).cloned().unwrap_or_default())
        .collect();
    collected_pool.sort_unstable();
    if n_collected > collected_pool.len() {
        return Err(Error::InsufficientData(format!(
            "gamma_l * n = {n_collected} collected anomalies requested but only {} available in classes {:?}",
            collected_pool.len(),
            spec.collected_anomaly_classes
        )));
    }
    collected_pool.shuffle(&mut rng);
    let train_anomaly_indices: Vec<usize> = collected_pool[..n_collected].to_vec();
    let used: BTreeSet<usize> = train_anomaly_indices.iter().copied().collect();

    // Pollution: uniform from all anomaly classes, skipping already-used ids.
    let mut pollution_pool: Vec<usize> = anomaly_classes
        .iter()
        .flat_map(|c| train_pool.get(c).cloned().unwrap_or_default())
        .filter(|i| !used.contains(i))
        .collect();
    pollution_pool.sort_unstable();
    if n_pollution > pollution_pool.len() {
        return Err(Error::InsufficientData(format!(
            "gamma_p * n = {n_pollution} pollution anomalies requested but only {} available",
            pollution_pool.len()
        )));
    }
    pollution_pool.shuffle(&mut rng);
    let pollution_indices: Vec<usize> = pollution_pool[..n_pollution].to_vec();

    // Validation/test: stratified split of the held-out pool.
    let mut val_indices = Vec::new();
    let mut test_indices = Vec::new();
    for idxs in heldout_pool.values() {
        let mut idxs = idxs.clone();
        idxs.shuffle(&mut rng);
        let n_val = round_half_away(spec.val_fraction * idxs.len() as f64).min(idxs.len());
        val_indices.extend_from_slice(&idxs[..n_val]);
        test_indices.extend_from_slice(&idxs[n_val..]);
    }
    val_indices.sort_unstable();
    test_indices.sort_unstable();

    // Materialize.
    let dim = dataset.sample_dim();
    let gather = |indices: &[usize]| -> Vec<Vec<f32>> {
        indices
            .iter()
            .map(|&i| {
                let mut buf = vec![0.0f32; dim];
                dataset.copy_sample_into(i, &mut buf);
                buf
            })
            .collect()
    };
    let mut train_normal = gather(&train_normal_indices);
    train_normal.extend(gather(&pollution_indices));
    let mut train_anomaly = gather(&train_anomaly_indices);

    let make_subset = |indices: &[usize]| -> LabeledSubset {
        let samples = gather(indices);
        let class_ids: Vec<u32> = indices.iter().map(|&i| dataset.labels()[i]).collect();
        let labels: Vec<u8> = class_ids
            .iter()
            .map(|c| u8::from(!spec.normal_classes.contains(c)))
            .collect();
        LabeledSubset {
            samples,
            labels,
            class_ids,
            source_indices: indices.to_vec(),
        }
    };
    let mut val = make_subset(&val_indices);
    let mut test = make_subset(&test_indices);

    // Tabular splits are standardized with training-pool statistics only.
    let (feature_means, feature_stds) = if dataset.kind() == DatasetKind::Tabular {
        let (means, stds) = column_stats(&train_normal, dim);
        for set in [&mut train_normal, &mut train_anomaly] {
            apply_standardization(set, &means, &stds);
        }
        apply_standardization(&mut val.samples, &means, &stds);
        apply_standardization(&mut test.samples, &means, &stds);
        (means, stds)
    } else {
        (Vec::new(), Vec::new())
    };

    let meta = ScenarioMeta {
        dataset: dataset.name().to_string(),
        spec: spec.clone(),
        n_normal,
        n_collected,
        n_pollution,
        pollution_classes: anomaly_classes,
        train_normal_indices,
        pollution_indices,
        train_anomaly_indices,
        val_indices,
        test_indices,
        feature_means,
        feature_stds,
    };

    Ok(ScenarioData {
        train_normal,
        train_anomaly,
        val,
        test,
        sample_shape: dataset.sample_shape().to_vec(),
        meta,
    })
}

fn column_stats(rows: &[Vec<f32>], dim: usize) -> (Vec<f64>, Vec<f64>) {
    let mut means = vec![0.0f64; dim];
    let mut stds = vec![0.0f64; dim];
    let n = rows.len().max(1) as f64;
    for row in rows {
        for (c, &v) in row.iter().enumerate() {
            means[c] += v as f64;
        }
    }
    for m in &mut means {
        *m /= n;
    }
    for row in rows {
        for (c, &v) in row.iter().enumerate() {
            let d = v as f64 - means[c];
            stds[c] += d * d;
        }
    }
    for s in &mut stds {
        *s = (*s / n).sqrt();
    }
    (means, stds)
}

fn apply_standardization(rows: &mut [Vec<f32>], means: &[f64], stds: &[f64]) {
    for row in rows {
        for (c, v) in row.iter_mut().enumerate() {
            *v = if stds[c] > 1e-12 {
                ((*v as f64 - means[c]) / stds[c]) as f32
            } else {
                0.0
            };
        }
    }
}

/// All ordered (normal, collected-anomaly) class pairs with k_l = 1.
///
/// Gamma values, seed and validation fraction are left at their defaults
/// for the caller (typically a sweep) to fill in.
pub fn enumerate_class_pairs(dataset: &LabeledDataset) -> Vec<ScenarioSpec> {
    let classes = dataset.classes();
    let mut specs = Vec::new();
    for &normal in &classes {
        for &anomaly in &classes {
            if normal == anomaly {
                continue;
            }
            specs.push(ScenarioSpec {
                normal_classes: BTreeSet::from([normal]),
                collected_anomaly_classes: BTreeSet::from([anomaly]),
                ..ScenarioSpec::default()
            });
        }
    }
    specs
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write_csv(dir: &Path, name: &str, rows: &[(&[f64], u32)]) -> PathBuf {
        let path = dir.join(name);
        let mut f = std::fs::File::create(&path).unwrap();
        let n_feat = rows[0].0.len();
        let header: Vec<String> = (0..n_feat).map(|i| format!("f{i}")).collect();
        writeln!(f, "{},label", header.join(",")).unwrap();
        for (feats, label) in rows {
            let vals: Vec<String> = feats.iter().map(|v| v.to_string()).collect();
            writeln!(f, "{},{label}", vals.join(",")).unwrap();
        }
        path
    }

    #[test]
    fn tabular_csv_roundtrip_and_standardization() {
        let dir = tempfile::tempdir().unwrap();
        let rows: Vec<(Vec<f64>, u32)> = (0..50)
            .map(|i| (vec![i as f64, 7.0, -(i as f64)], u32::from(i % 10 == 0)))
            .collect();
        let borrowed: Vec<(&[f64], u32)> = rows.iter().map(|(f, l)| (&f[..], *l)).collect();
        let path = write_csv(dir.path(), "toy.csv", &borrowed);
        let ds = load_tabular_csv(&path, "label").unwrap();
        assert_eq!(ds.len(), 50);
        assert_eq!(ds.sample_shape(), &[3]);
        assert_eq!(ds.kind(), DatasetKind::Tabular);

        // Constant column standardizes to zeros; others to ~zero mean, unit var.
        let mut col_sum = [0.0f64; 3];
        let mut col_sq = [0.0f64; 3];
        for i in 0..ds.len() {
            let s = ds.sample_vec(i);
            for c in 0..3 {
                col_sum[c] += s[c] as f64;
                col_sq[c] += (s[c] as f64).powi(2);
            }
        }
        assert!(col_sum.iter().all(|s| s.abs() < 1e-3));
        assert!(col_sq[1] == 0.0, "constant column must be all zeros");
        assert!((col_sq[0] / 50.0 - 1.0).abs() < 1e-3);
    }

    #[test]
    fn tabular_csv_error_paths() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.csv");
        std::fs::write(&path, "f0,f1,label\n1.0,oops,0\n").unwrap();
        match load_tabular_csv(&path, "label") {
            Err(Error::Parse { row, column, .. }) => {
                assert_eq!(row, 2);
                assert_eq!(column, "f1");
            }
            other => panic!("expected parse error, got {other:?}"),
        }
        std::fs::write(&path, "f0,f1,klass\n1.0,2.0,0\n").unwrap();
        assert!(load_tabular_csv(&path, "label").is_err());
    }

    fn ring_spec(gamma_l: f64, gamma_p: f64, seed: u64) -> ScenarioSpec {
        ScenarioSpec {
            normal_classes: (0..8).collect(),
            collected_anomaly_classes: BTreeSet::from([8]),
            gamma_l,
            gamma_p,
            seed,
            val_fraction: 0.2,
        }
    }

    #[test]
    fn scenario_counts_and_disjointness() {
        let ds = make_cluster_ring(12, 100, 4.0, 0.15, 9);
        let spec = ring_spec(0.05, 0.02, 3);
        let sc = build_scenario(&ds, &spec).unwrap();

        // 8 clusters * 100 * 0.6 train fraction = 480 normals.
        assert_eq!(sc.meta.n_normal, 480);
        assert_eq!(sc.meta.n_collected, round_half_away(0.05 * 480.0));
        assert_eq!(sc.meta.n_pollution, round_half_away(0.02 * 480.0));
        assert_eq!(
            sc.train_normal.len(),
            sc.meta.n_normal + sc.meta.n_pollution
        );
        assert_eq!(sc.train_anomaly.len(), sc.meta.n_collected);

        // No index is reused across training, val and test.
        let mut all: Vec<usize> = sc
            .meta
            .train_normal_indices
            .iter()
            .chain(&sc.meta.pollution_indices)
            .chain(&sc.meta.train_anomaly_indices)
            .chain(&sc.meta.val_indices)
            .chain(&sc.meta.test_indices)
            .copied()
            .collect();
        let total = all.len();
        all.sort_unstable();
        all.dedup();
        assert_eq!(all.len(), total, "sample identity reused across splits");

        // Val fraction within one sample per class of the target.
        let val = sc.meta.val_indices.len() as f64;
        let total_eval = (sc.meta.val_indices.len() + sc.meta.test_indices.len()) as f64;
        assert!((val / total_eval - 0.2).abs() < 12.0 / total_eval);

        // Novel anomaly classes appear in the test split but never in training.
        let test_classes: BTreeSet<u32> = sc.test.class_ids.iter().copied().collect();
        for novel in [9, 10, 11] {
            assert!(test_classes.contains(&novel));
        }
    }

    #[test]
    fn scenario_is_deterministic() {
        let ds = make_cluster_ring(12, 50, 4.0, 0.15, 9);
        let spec = ring_spec(0.1, 0.05, 77);
        let a = build_scenario(&ds, &spec).unwrap();
        let b = build_scenario(&ds, &spec).unwrap();
        assert_eq!(a.meta.train_normal_indices, b.meta.train_normal_indices);
        assert_eq!(a.meta.train_anomaly_indices, b.meta.train_anomaly_indices);
        assert_eq!(a.meta.pollution_indices, b.meta.pollution_indices);
        assert_eq!(a.meta.val_indices, b.meta.val_indices);
        assert_eq!(a.meta.test_indices, b.meta.test_indices);
    }

    #[test]
    fn unsupervised_reduction_and_errors() {
        let ds = make_cluster_ring(12, 50, 4.0, 0.15, 9);
        let spec = ring_spec(0.0, 0.0, 1);
        let sc = build_scenario(&ds, &spec).unwrap();
        assert!(sc.train_anomaly.is_empty());
        assert_eq!(sc.train_normal.len(), sc.meta.n_normal);

        // gamma_l beyond the pool errors.
        let spec = ring_spec(5.0, 0.0, 1);
        assert!(matches!(
            build_scenario(&ds, &spec),
            Err(Error::InsufficientData(_))
        ));

        // Overlapping class sets error.
        let mut spec = ring_spec(0.0, 0.0, 1);
        spec.collected_anomaly_classes.insert(0);
        assert!(build_scenario(&ds, &spec).is_err());
    }

    #[test]
    fn pair_enumeration_counts() {
        let ds = make_cluster_ring(10, 5, 4.0, 0.15, 9);
        let specs = enumerate_class_pairs(&ds);
        assert_eq!(specs.len(), 90);
        let distinct: BTreeSet<String> = specs
            .iter()
            .map(|s| format!("{:?}->{:?}", s.normal_classes, s.collected_anomaly_classes))
            .collect();
        assert_eq!(distinct.len(), 90);

        let ds2 = make_cluster_ring(2, 5, 4.0, 0.15, 9);
        assert_eq!(enumerate_class_pairs(&ds2).len(), 2);
    }

    #[test]
    fn rounding_rule() {
        assert_eq!(round_half_away(2.5), 3);
        assert_eq!(round_half_away(2.49), 2);
        assert_eq!(round_half_away(0.0), 0);
        assert_eq!(round_half_away(0.5), 1);
    }

    #[test]
    fn idx_loader_detects_corruption() {
        let dir = tempfile::tempdir().unwrap();
        // A truncated IDX image file with a valid magic.
        let mut bytes = Vec::new();
        bytes.extend_from_slice(&2051u32.to_be_bytes());
        bytes.extend_from_slice(&2u32.to_be_bytes());
        bytes.extend_from_slice(&28u32.to_be_bytes());
        bytes.extend_from_slice(&28u32.to_be_bytes());
        bytes.extend_from_slice(&[0u8; 100]);
        std::fs::write(dir.path().join("train-images-idx3-ubyte"), &bytes).unwrap();
        let err = load_image_dataset("mnist", dir.path()).unwrap_err();
        assert!(matches!(err, Error::CorruptData { .. }), "{err:?}");

        // Missing files surface an I/O error with a download hint.
        let empty = tempfile::tempdir().unwrap();
        let err = load_image_dataset("mnist", empty.path()).unwrap_err();
        assert!(matches!(err, Error::Io { .. }));
        assert!(err.to_string().contains("download"));
    }

    #[test]
    fn synthetic_ring_shape() {
        let ds = make_cluster_ring(12, 10, 4.0, 0.1, 5);
        assert_eq!(ds.len(), 120);
        assert_eq!(ds.classes().len(), 12);
        let s = ds.sample_vec(0);
        assert_eq!(s.len(), 2);
        // Cluster 0 sits near (radius, 0).
        assert!((s[0] - 4.0).abs() < 1.0 && s[1].abs() < 1.0);
    }
}
