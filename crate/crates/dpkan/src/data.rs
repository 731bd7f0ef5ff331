//! Dataset ingestion (CSV, MNIST IDX), the synthetic regression generator,
//! standardization, and train/test splitting.
//!
//! CSV dialect: comma separator, '.' decimal point, optional single header
//! line, no quoting. Loaders are total over malformed input: they return a
//! structured error, never a partially filled dataset.

use crate::error::{Error, Result};
use crate::matrix::DenseMatrix;
use crate::rng::RngState;
use byteorder::{BigEndian, ReadBytesExt};
use std::io::{Cursor, Read};
use std::path::Path;

pub const MNIST_IMAGES_MAGIC: u32 = 0x0000_0803;
pub const MNIST_LABELS_MAGIC: u32 = 0x0000_0801;

/// Fixed normalization constants applied to MNIST after scaling to [0,1].
pub const MNIST_MEAN: f64 = 0.1307;
pub const MNIST_STD: f64 = 0.3081;

#[derive(Debug, Clone, PartialEq)]
pub enum Targets {
    Regression(Vec<f64>),
    Classification { labels: Vec<usize>, n_classes: usize },
}

impl Targets {
    pub fn len(&self) -> usize {
        match self {
            Targets::Regression(v) => v.len(),
            Targets::Classification { labels, .. } => labels.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub features: DenseMatrix,
    pub targets: Targets,
    pub feature_names: Option<Vec<String>>,
    /// Per-column (mean, std) recorded when the dataset was standardized.
    pub standardization: Option<Vec<(f64, f64)>>,
}

impl Dataset {
    pub fn new(features: DenseMatrix, targets: Targets) -> Result<Self> {
        if features.rows() != targets.len() {
            return Err(Error::Shape(format!(
                "{} feature rows vs {} targets",
                features.rows(),
                targets.len()
            )));
        }
        if let Targets::Classification { labels, n_classes } = &targets {
            if let Some(&bad) = labels.iter().find(|&&l| l >= *n_classes) {
                return Err(Error::Argument(format!(
                    "label {bad} out of range for {n_classes} classes"
                )));
            }
        }
        Ok(Self {
            features,
            targets,
            feature_names: None,
            standardization: None,
        })
    }

    pub fn len(&self) -> usize {
        self.features.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dim(&self) -> usize {
        self.features.cols()
    }

    pub fn regression_targets(&self) -> Option<&[f64]> {
        match &self.targets {
            Targets::Regression(v) => Some(v),
            _ => None,
        }
    }

    pub fn class_labels(&self) -> Option<&[usize]> {
        match &self.targets {
            Targets::Classification { labels, .. } => Some(labels),
            _ => None,
        }
    }

    fn select(&self, idx: &[usize]) -> Dataset {
        let mut features = DenseMatrix::zeros(idx.len(), self.dim());
        for (r, &i) in idx.iter().enumerate() {
            features.row_mut(r).copy_from_slice(self.features.row(i));
        }
        let targets = match &self.targets {
            Targets::Regression(v) => Targets::Regression(idx.iter().map(|&i| v[i]).collect()),
            Targets::Classification { labels, n_classes } => Targets::Classification {
                labels: idx.iter().map(|&i| labels[i]).collect(),
                n_classes: *n_classes,
            },
        };
        Dataset {
            features,
            targets,
            feature_names: self.feature_names.clone(),
            standardization: self.standardization.clone(),
        }
    }

    /// First `n` rows (used for desk-scale subset runs).
    pub fn take(&self, n: usize) -> Dataset {
        let idx: Vec<usize> = (0..n.min(self.len())).collect();
        self.select(&idx)
    }
}

/// Load a simple numeric CSV. With a header line, `target_column` is the
/// column name; without one it is the 0-based column index.
pub fn load_csv(path: &Path, target_column: &str, has_header: bool) -> Result<Dataset> {
    let text = std::fs::read_to_string(path)?;
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());

    let (names, target_idx, n_cols) = if has_header {
        let (_, header) = lines
            .next()
            .ok_or_else(|| Error::Parse("empty file".into()))?;
        let names: Vec<String> = header.split(',').map(|s| s.trim().to_string()).collect();
        let idx = names
            .iter()
            .position(|n| n == target_column)
            .ok_or_else(|| {
                Error::Parse(format!(
                    "target column {:?} not found; available columns: {}",
                    target_column,
                    names.join(", ")
                ))
            })?;
        let n = names.len();
        (Some(names), idx, n)
    } else {
        let idx: usize = target_column.parse().map_err(|_| {
            Error::Parse(format!(
                "without a header, target column must be a 0-based index, got {target_column:?}"
            ))
        })?;
        (None, idx, 0)
    };

    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut targets: Vec<f64> = Vec::new();
    let mut expected_cols = n_cols;
    for (data_row, (_, line)) in lines.enumerate() {
        let cells: Vec<&str> = line.split(',').collect();
        if expected_cols == 0 {
            expected_cols = cells.len();
            if target_idx >= expected_cols {
                return Err(Error::Parse(format!(
                    "target column index {target_idx} out of range for {expected_cols} columns"
                )));
            }
        }
        if cells.len() != expected_cols {
            return Err(Error::Parse(format!(
                "ragged row {}: expected {} cells, found {}",
                data_row + 1,
                expected_cols,
                cells.len()
            )));
        }
        let mut feat = Vec::with_capacity(expected_cols - 1);
        for (c, cell) in cells.iter().enumerate() {
            let v: f64 = cell.trim().parse().map_err(|_| {
                Error::Parse(format!(
                    "non-numeric cell {:?} at row {}, column {}",
                    cell.trim(),
                    data_row + 1,
                    c + 1
                ))
            })?;
            if c == target_idx {
                targets.push(v);
            } else {
                feat.push(v);
            }
        }
        rows.push(feat);
    }
    if rows.is_empty() {
        return Err(Error::Parse("file has no data rows".into()));
    }
    let features = DenseMatrix::from_rows(&rows).map_err(|e| Error::Parse(e.to_string()))?;
    let mut ds = Dataset::new(features, Targets::Regression(targets))?;
    ds.feature_names = names.map(|mut n| {
        n.remove(target_idx);
        n
    });
    Ok(ds)
}

/// Load an MNIST-format IDX image/label pair. Pixels are scaled to [0,1]
/// and standardized with the fixed constants `MNIST_MEAN` / `MNIST_STD`.
pub fn load_mnist_idx(images_path: &Path, labels_path: &Path) -> Result<Dataset> {
    let img_bytes = std::fs::read(images_path)?;
    let lbl_bytes = std::fs::read(labels_path)?;

    let mut cur = Cursor::new(img_bytes.as_slice());
    let magic = cur
        .read_u32::<BigEndian>()
        .map_err(|_| Error::Truncated("image file header".into()))?;
    if magic != MNIST_IMAGES_MAGIC {
        return Err(Error::BadMagic {
            expected: MNIST_IMAGES_MAGIC,
            found: magic,
        });
    }
    let n = read_be_dim(&mut cur, "image count")?;
    let h = read_be_dim(&mut cur, "image height")?;
    let w = read_be_dim(&mut cur, "image width")?;
    let mut pixels = vec![0u8; n * h * w];
    cur.read_exact(&mut pixels)
        .map_err(|_| Error::Truncated("image payload".into()))?;

    let mut cur = Cursor::new(lbl_bytes.as_slice());
    let magic = cur
        .read_u32::<BigEndian>()
        .map_err(|_| Error::Truncated("label file header".into()))?;
    if magic != MNIST_LABELS_MAGIC {
        return Err(Error::BadMagic {
            expected: MNIST_LABELS_MAGIC,
            found: magic,
        });
    }
    let n_labels = read_be_dim(&mut cur, "label count")?;
    if n_labels != n {
        return Err(Error::Shape(format!(
            "{n} images but {n_labels} labels"
        )));
    }
    let mut raw_labels = vec![0u8; n_labels];
    cur.read_exact(&mut raw_labels)
        .map_err(|_| Error::Truncated("label payload".into()))?;

    let d = h * w;
    let values: Vec<f64> = pixels
        .iter()
        .map(|&p| (f64::from(p) / 255.0 - MNIST_MEAN) / MNIST_STD)
        .collect();
    let features = DenseMatrix::from_vec(n, d, values)?;
    let labels: Vec<usize> = raw_labels.iter().map(|&l| l as usize).collect();
    if let Some(&bad) = labels.iter().find(|&&l| l > 9) {
        return Err(Error::Parse(format!("label byte {bad} out of range 0-9")));
    }
    Dataset::new(
        features,
        Targets::Classification {
            labels,
            n_classes: 10,
        },
    )
}

fn read_be_dim(cur: &mut Cursor<&[u8]>, what: &str) -> Result<usize> {
    let v = cur
        .read_u32::<BigEndian>()
        .map_err(|_| Error::Truncated(what.into()))?;
    Ok(v as usize)
}

/// Synthetic linear-regression data: features ~ N(0, I_d), a fixed weight
/// vector w_j = (-1)^j (1 + j/d) for j = 1..d, targets y = Xw + noise.
pub fn gen_synthetic(n: usize, d: usize, noise_std: f64, seed: u64) -> Result<Dataset> {
    if n == 0 || d == 0 {
        return Err(Error::Argument("n and d must be >= 1".into()));
    }
    if !(noise_std >= 0.0) {
        return Err(Error::Argument(format!(
            "noise_std must be >= 0, got {noise_std}"
        )));
    }
    let state = RngState::new(seed);
    let mut xs = state.stream("synthetic-features");
    let mut ns = state.stream("synthetic-noise");
    let features = DenseMatrix::from_vec(n, d, xs.gaussian_vec(n * d, 1.0))?;
    let w = synthetic_weights(d);
    let targets: Vec<f64> = (0..n)
        .map(|r| {
            let signal: f64 = features.row(r).iter().zip(&w).map(|(x, w)| x * w).sum();
            signal + ns.gaussian(noise_std)
        })
        .collect();
    Dataset::new(features, Targets::Regression(targets))
}

pub fn synthetic_weights(d: usize) -> Vec<f64> {
    (1..=d)
        .map(|j| {
            let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
            sign * (1.0 + j as f64 / d as f64)
        })
        .collect()
}

/// Z-score all datasets with the training split's per-column statistics.
/// Zero-variance columns pass through unchanged (std treated as 1).
pub fn standardize(train: &Dataset, others: &[&Dataset]) -> Result<(Dataset, Vec<Dataset>)> {
    if train.is_empty() {
        return Err(Error::Argument("training split is empty".into()));
    }
    let n = train.len() as f64;
    let d = train.dim();
    let mut stats = Vec::with_capacity(d);
    for c in 0..d {
        let mean = (0..train.len()).map(|r| train.features.get(r, c)).sum::<f64>() / n;
        let var = (0..train.len())
            .map(|r| {
                let v = train.features.get(r, c) - mean;
                v * v
            })
            .sum::<f64>()
            / n;
        let std = var.sqrt();
        // Zero-variance columns pass through unchanged: identity transform.
        stats.push(if std > 0.0 { (mean, std) } else { (0.0, 1.0) });
    }
    let apply = |ds: &Dataset| -> Result<Dataset> {
        if ds.dim() != d {
            return Err(Error::Shape(format!(
                "cannot standardize {}-column dataset with {}-column stats",
                ds.dim(),
                d
            )));
        }
        let mut features = ds.features.clone();
        for r in 0..features.rows() {
            for (c, &(mean, std)) in stats.iter().enumerate() {
                features.set(r, c, (features.get(r, c) - mean) / std);
            }
        }
        let mut out = ds.clone();
        out.features = features;
        out.standardization = Some(stats.clone());
        Ok(out)
    };
    let train_out = apply(train)?;
    let mut others_out = Vec::with_capacity(others.len());
    for o in others {
        others_out.push(apply(o)?);
    }
    Ok((train_out, others_out))
}

/// Invert a standardization using the recorded per-column stats.
pub fn unstandardize(ds: &Dataset) -> Result<Dataset> {
    let stats = ds
        .standardization
        .as_ref()
        .ok_or_else(|| Error::Argument("dataset carries no standardization stats".into()))?;
    let mut features = ds.features.clone();
    for r in 0..features.rows() {
        for (c, &(mean, std)) in stats.iter().enumerate() {
            features.set(r, c, features.get(r, c) * std + mean);
        }
    }
    let mut out = ds.clone();
    out.features = features;
    out.standardization = None;
    Ok(out)
}

/// Seeded shuffle, then split; the union of the two sides is a partition
/// of the original rows.
pub fn train_test_split(data: &Dataset, test_fraction: f64, seed: u64) -> Result<(Dataset, Dataset)> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(Error::Argument(format!(
            "test_fraction must be in (0, 1), got {test_fraction}"
        )));
    }
    let n = data.len();
    let n_test = ((n as f64) * test_fraction).round() as usize;
    if n_test == 0 || n_test == n {
        return Err(Error::Argument(format!(
            "split of {n} rows at fraction {test_fraction} leaves an empty side"
        )));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    let mut stream = RngState::new(seed).stream("train-test-split");
    stream.shuffle(&mut idx);
    let (test_idx, train_idx) = idx.split_at(n_test);
    Ok((data.select(train_idx), data.select(test_idx)))
}

/// Write a regression dataset as CSV (x0..x{d-1}, y) for external tools.
pub fn dataset_to_csv(ds: &Dataset, path: &Path) -> Result<()> {
    use std::io::Write;
    let targets = ds
        .regression_targets()
        .ok_or_else(|| Error::Argument("CSV export supports regression datasets".into()))?;
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    let header: Vec<String> = match &ds.feature_names {
        Some(names) => names.clone(),
        None => (0..ds.dim()).map(|c| format!("x{c}")).collect(),
    };
    writeln!(f, "{},y", header.join(","))?;
    for r in 0..ds.len() {
        let cells: Vec<String> = ds.features.row(r).iter().map(|v| v.to_string()).collect();
        writeln!(f, "{},{}", cells.join(","), targets[r])?;
    }
    Ok(())
}
