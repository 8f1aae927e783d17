//! Datasets: synthetic generation, CSV ingestion and stratified splitting.
//!
//! A [`LabeledDataset`] is the boundary to whatever produced the features:
//! a pretrained backbone upstream writes one feature vector per sample to CSV,
//! and everything downstream only sees the matrix and the binary labels.

use std::fmt::Write as _;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::rng::{seeded, Stream};
use crate::{Error, Result};

/// Row-major feature matrix with binary labels (`0` negative, `1` positive).
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    features: Vec<f64>,
    labels: Vec<u8>,
    dim: usize,
}

impl LabeledDataset {
    /// Builds a dataset from a row-major `labels.len() × dim` matrix.
    pub fn new(features: Vec<f64>, labels: Vec<u8>, dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Dataset(
                "feature dimension must be at least 1".into(),
            ));
        }
        if labels.len() < 2 {
            return Err(Error::Dataset(format!(
                "need at least 2 samples, got {}",
                labels.len()
            )));
        }
        if features.len() != labels.len() * dim {
            return Err(Error::Dataset(format!(
                "feature buffer holds {} values, expected {} × {}",
                features.len(),
                labels.len(),
                dim
            )));
        }
        if let Some(i) = labels.iter().position(|&y| y > 1) {
            return Err(Error::Dataset(format!(
                "label {} at sample {i} is not binary",
                labels[i]
            )));
        }
        if let Some(k) = features.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!(
                "feature {} of sample {}",
                k % dim,
                k / dim
            )));
        }
        Ok(Self {
            features,
            labels,
            dim,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn features(&self) -> &[f64] {
        &self.features
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.features[i * self.dim..(i + 1) * self.dim]
    }

    pub fn n_positive(&self) -> usize {
        self.labels.iter().filter(|&&y| y == 1).count()
    }

    pub fn n_negative(&self) -> usize {
        self.len() - self.n_positive()
    }

    /// Fails with [`Error::SingleClass`] unless both labels occur.
    pub fn require_both_classes(&self) -> Result<()> {
        let positives = self.n_positive();
        let negatives = self.n_negative();
        if positives == 0 || negatives == 0 {
            return Err(Error::SingleClass {
                positives,
                negatives,
            });
        }
        Ok(())
    }

    /// Gathers the given rows (in the given order) into a new dataset.
    pub fn subset(&self, indices: &[usize]) -> Result<Self> {
        let mut features = Vec::with_capacity(indices.len() * self.dim);
        let mut labels = Vec::with_capacity(indices.len());
        for &i in indices {
            features.extend_from_slice(self.row(i));
            labels.push(self.labels[i]);
        }
        Self::new(features, labels, self.dim)
    }

    /// Serializes to the CSV interchange format.
    pub fn to_csv_string(&self) -> String {
        let mut out = String::new();
        for k in 0..self.dim {
            let _ = write!(out, "f{k},");
        }
        out.push_str("label\n");
        for i in 0..self.len() {
            for v in self.row(i) {
                // `Display` for f64 prints the shortest string that parses back exactly.
                let _ = write!(out, "{v},");
            }
            let _ = writeln!(out, "{}", self.labels[i]);
        }
        out
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_csv_string()).map_err(|e| Error::io(path, e))
    }

    /// Summary used to tie reports to the exact data they were computed on.
    pub fn fingerprint(&self) -> DatasetFingerprint {
        let hash = Sha256::digest(self.to_csv_string().as_bytes());
        DatasetFingerprint {
            n: self.len(),
            d: self.dim,
            n_positive: self.n_positive(),
            n_negative: self.n_negative(),
            sha256: hex::encode(hash),
        }
    }
}

/// Size, class counts and content hash of a dataset.
///
/// The hash is the SHA-256 of the dataset's canonical CSV serialization, so it
/// equals the hash of a file written by [`LabeledDataset::write_csv`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetFingerprint {
    pub n: usize,
    pub d: usize,
    pub n_positive: usize,
    pub n_negative: usize,
    pub sha256: String,
}

/// Parameters of the synthetic two-Gaussian generator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub n_total: usize,
    /// Negatives per positive.
    pub imbalance_ratio: f64,
    pub dim: usize,
    /// Euclidean distance between the two class means (unit per-axis variance).
    pub class_separation: f64,
    pub seed: u64,
}

/// 13,793 negatives over 2,158 positives in the reference training split.
pub const DEFAULT_IMBALANCE_RATIO: f64 = 6.39;

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            n_total: 2000,
            imbalance_ratio: DEFAULT_IMBALANCE_RATIO,
            dim: 8,
            class_separation: 1.5,
            seed: 0,
        }
    }
}

impl SynthConfig {
    /// `(positives, negatives)` implied by the size and ratio:
    /// `n_pos = max(1, round(n_total / (1 + ratio)))`.
    pub fn class_counts(&self) -> Result<(usize, usize)> {
        if self.n_total < 4 {
            return Err(Error::Config(format!(
                "n_total must be at least 4, got {}",
                self.n_total
            )));
        }
        if !(self.imbalance_ratio.is_finite() && self.imbalance_ratio > 0.0) {
            return Err(Error::Config(format!(
                "imbalance ratio must be a positive real, got {}",
                self.imbalance_ratio
            )));
        }
        let n_pos = ((self.n_total as f64 / (1.0 + self.imbalance_ratio)).round() as usize).max(1);
        if n_pos >= self.n_total {
            return Err(Error::Config(format!(
                "ratio {} leaves no negatives out of {} samples",
                self.imbalance_ratio, self.n_total
            )));
        }
        Ok((n_pos, self.n_total - n_pos))
    }

    fn validate(&self) -> Result<()> {
        if self.dim == 0 {
            return Err(Error::Config("dimension must be at least 1".into()));
        }
        if !(self.class_separation.is_finite() && self.class_separation >= 0.0) {
            return Err(Error::Config(format!(
                "class separation must be finite and non-negative, got {}",
                self.class_separation
            )));
        }
        self.class_counts().map(|_| ())
    }
}

/// Draws an imbalanced two-class isotropic Gaussian dataset.
///
/// Negatives are centered at the origin. Positives are centered at
/// `class_separation / sqrt(d) · (1, …, 1)`, whose norm is `class_separation`.
/// Labels are shuffled so classes are interleaved; every draw comes from a
/// seeded ChaCha stream.
pub fn gen_synthetic(cfg: &SynthConfig) -> Result<LabeledDataset> {
    cfg.validate()?;
    let (n_pos, n_neg) = cfg.class_counts()?;
    let mut rng = seeded(cfg.seed, Stream::Synth);

    let mut labels: Vec<u8> = std::iter::repeat_n(1u8, n_pos)
        .chain(std::iter::repeat_n(0u8, n_neg))
        .collect();
    labels.shuffle(&mut rng);

    let offset = cfg.class_separation / (cfg.dim as f64).sqrt();
    let mut features = Vec::with_capacity(cfg.n_total * cfg.dim);
    for &y in &labels {
        let shift = if y == 1 { offset } else { 0.0 };
        for _ in 0..cfg.dim {
            let z: f64 = rng.sample(StandardNormal);
            features.push(z + shift);
        }
    }
    LabeledDataset::new(features, labels, cfg.dim)
}

/// Reads the CSV interchange format: header `f0,…,f{d-1},label`, one sample
/// per line, label `0` or `1` in the last column.
///
/// Errors name the 1-based data row (the header is not counted).
pub fn load_csv(path: impl AsRef<Path>) -> Result<LabeledDataset> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_csv(&text, path)
}

fn parse_csv(text: &str, path: &Path) -> Result<LabeledDataset> {
    let file_err = |msg: String| Error::CsvFile {
        path: path.to_path_buf(),
        msg,
    };
    let row_err = |row: usize, msg: String| Error::CsvRow {
        path: path.to_path_buf(),
        row,
        msg,
    };

    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let mut records = reader.records();

    let header = match records.next() {
        Some(r) => r.map_err(|e| file_err(format!("unreadable header: {e}")))?,
        None => return Err(file_err("empty file".into())),
    };
    let columns = header.len();
    if columns < 2 {
        return Err(file_err(format!(
            "header needs at least one feature column and a label column, got {columns} column(s)"
        )));
    }
    let dim = columns - 1;
    for (k, name) in header.iter().take(dim).enumerate() {
        if name != format!("f{k}") {
            return Err(file_err(format!(
                "header column {} is {name:?}, expected \"f{k}\"",
                k + 1
            )));
        }
    }
    if &header[dim] != "label" {
        return Err(file_err(format!(
            "last header column is {:?}, expected \"label\"",
            &header[dim]
        )));
    }

    let mut features = Vec::new();
    let mut labels = Vec::new();
    for (i, record) in records.enumerate() {
        let row = i + 1;
        let record = record.map_err(|e| row_err(row, format!("malformed row: {e}")))?;
        if record.len() != columns {
            return Err(row_err(
                row,
                format!("expected {columns} columns, found {}", record.len()),
            ));
        }
        for (k, field) in record.iter().take(dim).enumerate() {
            let v: f64 = field
                .parse()
                .map_err(|_| row_err(row, format!("column f{k}: {field:?} is not a number")))?;
            if !v.is_finite() {
                return Err(row_err(
                    row,
                    format!("column f{k}: non-finite value {field}"),
                ));
            }
            features.push(v);
        }
        let label = match &record[dim] {
            "0" => 0u8,
            "1" => 1u8,
            other => return Err(row_err(row, format!("label {other:?} is not 0 or 1"))),
        };
        labels.push(label);
    }
    LabeledDataset::new(features, labels, dim).map_err(|e| file_err(e.to_string()))
}

/// Train/validation/test fractions plus the shuffle seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train_frac: f64,
    pub val_frac: f64,
    pub test_frac: f64,
    pub seed: u64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        Self {
            train_frac: 0.7,
            val_frac: 0.15,
            test_frac: 0.15,
            seed: 0,
        }
    }
}

impl SplitSpec {
    fn fractions(&self) -> [f64; 3] {
        [self.train_frac, self.val_frac, self.test_frac]
    }

    fn validate(&self) -> Result<()> {
        let fr = self.fractions();
        if fr.iter().any(|&f| !(f > 0.0 && f < 1.0)) {
            return Err(Error::Config(format!(
                "split fractions must lie in (0, 1), got {fr:?}"
            )));
        }
        let sum: f64 = fr.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::Config(format!(
                "split fractions must sum to 1, got {sum}"
            )));
        }
        Ok(())
    }

    /// Per-split counts for a class of `n` members: floors of `frac · n`, with
    /// the leftover handed out one at a time in train, val, test order.
    pub fn class_allocation(&self, n: usize) -> [usize; 3] {
        let mut counts = self.fractions().map(|f| (f * n as f64).floor() as usize);
        let mut rest = n - counts.iter().sum::<usize>();
        let mut k = 0;
        while rest > 0 {
            counts[k % 3] += 1;
            rest -= 1;
            k += 1;
        }
        counts
    }
}

/// Row indices (ascending) of each split.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitIndices {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

/// Assigns every row to exactly one split, stratified by class.
pub fn stratified_split_indices(labels: &[u8], spec: &SplitSpec) -> Result<SplitIndices> {
    spec.validate()?;
    let mut rng = seeded(spec.seed, Stream::Split);
    let mut parts: [Vec<usize>; 3] = Default::default();
    for class in [1u8, 0u8] {
        let mut members: Vec<usize> = labels
            .iter()
            .enumerate()
            .filter(|(_, &y)| y == class)
            .map(|(i, _)| i)
            .collect();
        let alloc = spec.class_allocation(members.len());
        if let Some(k) = alloc.iter().position(|&c| c == 0) {
            let name = ["train", "validation", "test"][k];
            return Err(Error::Dataset(format!(
                "class {class} has {} member(s), too few to place one in the {name} split",
                members.len()
            )));
        }
        members.shuffle(&mut rng);
        let mut start = 0;
        for (part, count) in parts.iter_mut().zip(alloc) {
            part.extend_from_slice(&members[start..start + count]);
            start += count;
        }
    }
    for part in &mut parts {
        part.sort_unstable();
    }
    let [train, val, test] = parts;
    Ok(SplitIndices { train, val, test })
}

/// Splits a dataset into `(train, val, test)`; row order within each split
/// follows the original order.
pub fn stratified_split(
    ds: &LabeledDataset,
    spec: &SplitSpec,
) -> Result<(LabeledDataset, LabeledDataset, LabeledDataset)> {
    let idx = stratified_split_indices(ds.labels(), spec)?;
    Ok((
        ds.subset(&idx.train)?,
        ds.subset(&idx.val)?,
        ds.subset(&idx.test)?,
    ))
}
