//! Dataset ingestion (IDX, CSV) and synthetic-data generation.

use crate::error::{Error, Result};
use crate::linalg::Mat;
use crate::networks::Dataset;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::fs;
use std::path::{Path, PathBuf};

const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;
const IDX_LABELS_MAGIC: u32 = 0x0000_0801;
/// One-hot width for IDX digit labels.
const IDX_CLASSES: usize = 10;

/// Default sampling window for the sinc target.
pub const SINC_DOMAIN: (f64, f64) = (-5.0 * std::f64::consts::PI, 5.0 * std::f64::consts::PI);
/// Default sampling window for the two-sine target.
pub const SINE_MIX_DOMAIN: (f64, f64) = (0.0, 2.0 * std::f64::consts::PI);

// ---------------------------------------------------------------------------
// Source descriptions
// ---------------------------------------------------------------------------

/// Per-column input normalization applied after loading.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Normalization {
    #[default]
    None,
    /// Rescale each column to [0, 1] (constant columns map to 0).
    MinMax,
    /// Center and scale each column to unit variance (constant columns map to 0).
    ZScore,
}

/// Where a dataset comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SourceKind {
    /// A pair of IDX binary files (big-endian image/label containers).
    IdxPair { images: PathBuf, labels: PathBuf },
    /// A rectangular numeric CSV with a header row; `label_column` names the
    /// target column (one-hot encoded when its values are integral labels).
    Csv { path: PathBuf, label_column: String },
    /// `sin(x)/x` sampled uniformly on `[lo, hi]` (1 at the origin).
    SyntheticSinc { n_samples: usize, lo: f64, hi: f64 },
    /// `sin(x) + sin(8x)` sampled uniformly on `[lo, hi]`.
    SyntheticSineMix { n_samples: usize, lo: f64, hi: f64 },
}

/// A dataset source plus split/normalization policy.
///
/// No `deny_unknown_fields` here: serde does not support it next to
/// `flatten`. Callers that deserialize untrusted tables must check the key
/// set themselves (the CLI config loader does).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSource {
    #[serde(flatten)]
    pub kind: SourceKind,
    /// Train fraction in (0, 1]; both sides of a split must be non-empty.
    #[serde(default = "default_split")]
    pub split: f64,
    #[serde(default)]
    pub normalization: Normalization,
}

fn default_split() -> f64 {
    1.0
}

impl DatasetSource {
    /// Loads the full dataset (no split), applying normalization.
    pub fn load(&self) -> Result<Dataset> {
        let mut ds = match &self.kind {
            SourceKind::IdxPair { images, labels } => load_idx(images, labels)?,
            SourceKind::Csv { path, label_column } => load_csv(path, label_column)?,
            SourceKind::SyntheticSinc { n_samples, lo, hi } => gen_sinc(*n_samples, *lo, *hi)?,
            SourceKind::SyntheticSineMix { n_samples, lo, hi } => {
                gen_sine_mix(*n_samples, *lo, *hi)?
            }
        };
        normalize_in_place(&mut ds.x, self.normalization);
        Ok(ds)
    }

    /// Loads and splits into (train, test) with a seeded shuffle.
    pub fn load_split(&self, seed: u64) -> Result<(Dataset, Dataset)> {
        let full = self.load()?;
        split_dataset(&full, self.split, seed)
    }
}

// ---------------------------------------------------------------------------
// IDX
// ---------------------------------------------------------------------------

fn read_file(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| {
        Error::Io(std::io::Error::new(
            e.kind(),
            format!("{}: {e}", path.display()),
        ))
    })
}

fn read_be_u32(bytes: &[u8], offset: usize, what: &str) -> Result<u32> {
    let end = offset + 4;
    if bytes.len() < end {
        return Err(Error::ParseAt {
            offset: bytes.len() as u64,
            msg: format!("truncated while reading {what} (need {end} bytes)"),
        });
    }
    Ok(u32::from_be_bytes([
        bytes[offset],
        bytes[offset + 1],
        bytes[offset + 2],
        bytes[offset + 3],
    ]))
}

/// Loads an IDX image/label file pair. Pixels are scaled to [0, 1]; labels
/// are one-hot encoded over 10 classes.
pub fn load_idx(images_path: &Path, labels_path: &Path) -> Result<Dataset> {
    let img = read_file(images_path)?;
    let magic = read_be_u32(&img, 0, "image magic")?;
    if magic != IDX_IMAGES_MAGIC {
        return Err(Error::ParseAt {
            offset: 0,
            msg: format!("bad image magic {magic:#010x}, expected {IDX_IMAGES_MAGIC:#010x}"),
        });
    }
    let n = read_be_u32(&img, 4, "image count")? as usize;
    let rows = read_be_u32(&img, 8, "image rows")? as usize;
    let cols = read_be_u32(&img, 12, "image cols")? as usize;
    let d = rows * cols;
    let need = 16 + n * d;
    if img.len() < need {
        return Err(Error::ParseAt {
            offset: img.len() as u64,
            msg: format!(
                "truncated image data: expected {need} bytes, file has {}",
                img.len()
            ),
        });
    }

    let lab = read_file(labels_path)?;
    let magic = read_be_u32(&lab, 0, "label magic")?;
    if magic != IDX_LABELS_MAGIC {
        return Err(Error::ParseAt {
            offset: 0,
            msg: format!("bad label magic {magic:#010x}, expected {IDX_LABELS_MAGIC:#010x}"),
        });
    }
    let n_lab = read_be_u32(&lab, 4, "label count")? as usize;
    if n_lab != n {
        return Err(Error::ParseAt {
            offset: 4,
            msg: format!("label count {n_lab} does not match image count {n}"),
        });
    }
    let need = 8 + n;
    if lab.len() < need {
        return Err(Error::ParseAt {
            offset: lab.len() as u64,
            msg: format!(
                "truncated label data: expected {need} bytes, file has {}",
                lab.len()
            ),
        });
    }

    let x = Mat::from_fn(n, d, |i, j| img[16 + i * d + j] as f64 / 255.0);
    let mut y = Mat::zeros(n, IDX_CLASSES);
    for i in 0..n {
        let label = lab[8 + i] as usize;
        if label >= IDX_CLASSES {
            return Err(Error::ParseAt {
                offset: (8 + i) as u64,
                msg: format!("label {label} out of range 0..{IDX_CLASSES}"),
            });
        }
        y[(i, label)] = 1.0;
    }
    Dataset::new(x, y)
}

// ---------------------------------------------------------------------------
// CSV
// ---------------------------------------------------------------------------

/// Loads a rectangular numeric CSV with a header row. The named column
/// becomes the target; integral target values are one-hot encoded (classes
/// sorted ascending), anything else stays a single regression column.
pub fn load_csv(path: &Path, label_column: &str) -> Result<Dataset> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_path(path)
        .map_err(|e| Error::ParseLine {
            line: 1,
            msg: format!("cannot open CSV {}: {e}", path.display()),
        })?;
    let headers = reader
        .headers()
        .map_err(|e| Error::ParseLine {
            line: 1,
            msg: format!("bad header row: {e}"),
        })?
        .clone();
    let label_idx = headers
        .iter()
        .position(|h| h == label_column)
        .ok_or_else(|| {
            Error::Usage(format!(
                "label column {label_column:?} not found in header [{}]",
                headers.iter().collect::<Vec<_>>().join(", ")
            ))
        })?;
    let width = headers.len();
    if width < 2 {
        return Err(Error::Usage(
            "CSV needs at least one feature column and the label".into(),
        ));
    }

    let mut features: Vec<f64> = Vec::new();
    let mut labels: Vec<f64> = Vec::new();
    let mut n = 0usize;
    for record in reader.records() {
        let record = record.map_err(|e| Error::ParseLine {
            line: n + 2,
            msg: format!("bad row: {e}"),
        })?;
        let line = record.position().map_or((n + 2) as u64, |p| p.line()) as usize;
        if record.len() != width {
            return Err(Error::ParseLine {
                line,
                msg: format!("ragged row: {} cells, header has {width}", record.len()),
            });
        }
        for (j, cell) in record.iter().enumerate() {
            let v: f64 = cell.trim().parse().map_err(|_| Error::ParseLine {
                line,
                msg: format!("non-numeric cell {:?} in column {:?}", cell, &headers[j]),
            })?;
            if j == label_idx {
                labels.push(v);
            } else {
                features.push(v);
            }
        }
        n += 1;
    }
    if n == 0 {
        return Err(Error::ParseLine {
            line: 1,
            msg: "CSV has a header but no data rows".into(),
        });
    }
    let d = width - 1;
    let x = Mat::from_fn(n, d, |i, j| features[i * d + j]);

    let categorical = labels.iter().all(|v| v.fract() == 0.0 && v.is_finite());
    let y = if categorical {
        let mut classes: Vec<i64> = labels.iter().map(|v| *v as i64).collect();
        classes.sort_unstable();
        classes.dedup();
        if classes.len() >= 2 {
            let mut y = Mat::zeros(n, classes.len());
            for (i, v) in labels.iter().enumerate() {
                let k = classes.binary_search(&(*v as i64)).unwrap();
                y[(i, k)] = 1.0;
            }
            y
        } else {
            Mat::from_fn(n, 1, |i, _| labels[i])
        }
    } else {
        Mat::from_fn(n, 1, |i, _| labels[i])
    };
    Dataset::new(x, y)
}

/// Writes a dataset as CSV with headers `x0..x{D-1}, y0..y{K-1}`. Values are
/// formatted with shortest-round-trip printing, so a reload is exact.
pub fn save_csv(data: &Dataset, path: &Path) -> Result<()> {
    let mut writer = csv::Writer::from_path(path)
        .map_err(|e| Error::Usage(format!("cannot create CSV {path:?}: {e}")))?;
    let header: Vec<String> = (0..data.d())
        .map(|j| format!("x{j}"))
        .chain((0..data.k()).map(|j| format!("y{j}")))
        .collect();
    writer
        .write_record(&header)
        .map_err(|e| Error::Usage(format!("CSV write failed: {e}")))?;
    let mut row: Vec<String> = Vec::with_capacity(data.d() + data.k());
    for i in 0..data.n() {
        row.clear();
        row.extend((0..data.d()).map(|j| format!("{}", data.x[(i, j)])));
        row.extend((0..data.k()).map(|j| format!("{}", data.y[(i, j)])));
        writer
            .write_record(&row)
            .map_err(|e| Error::Usage(format!("CSV write failed: {e}")))?;
    }
    writer.flush()?;
    Ok(())
}

// ---------------------------------------------------------------------------
// Synthetic targets
// ---------------------------------------------------------------------------

fn linspace(n: usize, lo: f64, hi: f64) -> Result<Vec<f64>> {
    if n == 0 {
        return Err(Error::Config("need at least one sample".into()));
    }
    if !(lo < hi) {
        return Err(Error::Config(format!("empty sampling window [{lo}, {hi}]")));
    }
    if n == 1 {
        return Ok(vec![lo]);
    }
    Ok((0..n)
        .map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64)
        .collect())
}

/// `sin(x)/x` on a uniform grid, with the removable singularity filled in
/// (`f(0) = 1`).
pub fn gen_sinc(n_samples: usize, lo: f64, hi: f64) -> Result<Dataset> {
    let xs = linspace(n_samples, lo, hi)?;
    let x = Mat::from_fn(n_samples, 1, |i, _| xs[i]);
    let y = Mat::from_fn(n_samples, 1, |i, _| {
        let v = xs[i];
        if v == 0.0 {
            1.0
        } else {
            v.sin() / v
        }
    });
    Dataset::new(x, y)
}

/// `sin(x) + sin(8x)` on a uniform grid.
pub fn gen_sine_mix(n_samples: usize, lo: f64, hi: f64) -> Result<Dataset> {
    let xs = linspace(n_samples, lo, hi)?;
    let x = Mat::from_fn(n_samples, 1, |i, _| xs[i]);
    let y = Mat::from_fn(n_samples, 1, |i, _| xs[i].sin() + (8.0 * xs[i]).sin());
    Dataset::new(x, y)
}

// ---------------------------------------------------------------------------
// Split & normalization
// ---------------------------------------------------------------------------

/// Splits into (train, test) by a seeded permutation. `train_fraction` must
/// leave at least one sample on each side.
pub fn split_dataset(data: &Dataset, train_fraction: f64, seed: u64) -> Result<(Dataset, Dataset)> {
    if !(train_fraction > 0.0 && train_fraction <= 1.0) {
        return Err(Error::Config(format!(
            "train fraction {train_fraction} outside (0, 1]"
        )));
    }
    let n = data.n();
    let n_train = ((n as f64) * train_fraction).round() as usize;
    let n_train = n_train.clamp(1, n);
    if n_train == n {
        return Err(Error::Config(format!(
            "split {train_fraction} leaves no test samples for N = {n}"
        )));
    }
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    order.shuffle(&mut rng);
    let take = |idx: &[usize]| -> Result<Dataset> {
        let x = Mat::from_fn(idx.len(), data.d(), |i, j| data.x[(idx[i], j)]);
        let y = Mat::from_fn(idx.len(), data.k(), |i, j| data.y[(idx[i], j)]);
        Dataset::new(x, y)
    };
    Ok((take(&order[..n_train])?, take(&order[n_train..])?))
}

/// Applies a per-column normalization in place.
pub fn normalize_in_place(x: &mut Mat, kind: Normalization) {
    match kind {
        Normalization::None => {}
        Normalization::MinMax => {
            for mut col in x.column_iter_mut() {
                let (lo, hi) = col
                    .iter()
                    .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| {
                        (a.min(v), b.max(v))
                    });
                let range = hi - lo;
                for v in col.iter_mut() {
                    *v = if range > 0.0 { (*v - lo) / range } else { 0.0 };
                }
            }
        }
        Normalization::ZScore => {
            for mut col in x.column_iter_mut() {
                let n = col.len() as f64;
                let mean = col.iter().sum::<f64>() / n;
                let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
                let sd = var.sqrt();
                for v in col.iter_mut() {
                    *v = if sd > 0.0 { (*v - mean) / sd } else { 0.0 };
                }
            }
        }
    }
}
