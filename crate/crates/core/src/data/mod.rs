//! Datasets: CSV and IDX readers, bundled fixtures, synthetic generators.

mod idx;
mod synthetic;

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

pub use idx::{load_idx, read_idx_images, read_idx_labels};
pub use synthetic::{heteroscedastic_sine, two_moons};

use crate::error::{Error, Result};
use crate::numerics::{Matrix, SeededRng};

/// Floor applied to per-feature standard deviations during standardization.
pub const STD_FLOOR: f64 = 1e-8;

/// Directory holding the fixtures that ship with the crate.
pub fn bundled_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("data")
}

/// Regression values or class indices, one per row.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Targets {
    Real { values: Vec<f64> },
    Class { labels: Vec<usize>, n_classes: usize },
}

impl Targets {
    pub fn len(&self) -> usize {
        match self {
            Targets::Real { values } => values.len(),
            Targets::Class { labels, .. } => labels.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn subset(&self, idx: &[usize]) -> Targets {
        match self {
            Targets::Real { values } => Targets::Real {
                values: idx.iter().map(|&i| values[i]).collect(),
            },
            Targets::Class { labels, n_classes } => Targets::Class {
                labels: idx.iter().map(|&i| labels[i]).collect(),
                n_classes: *n_classes,
            },
        }
    }
}

/// Statistics of the training split used to normalize every split.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Normalization {
    pub feature_mean: Vec<f64>,
    pub feature_std: Vec<f64>,
    /// Training-target range before min-max scaling (regression only).
    pub target_min: Option<f64>,
    pub target_max: Option<f64>,
}

impl Normalization {
    /// Width of the training-target range in original units.
    pub fn y_range(&self) -> Option<f64> {
        Some(self.target_max? - self.target_min?)
    }
}

/// Feature rows plus targets.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub x: Matrix,
    pub targets: Targets,
    pub norm: Option<Normalization>,
}

impl Dataset {
    pub fn new(x: Matrix, targets: Targets) -> Result<Self> {
        if x.rows() != targets.len() {
            return Err(Error::CountMismatch {
                images: x.rows(),
                labels: targets.len(),
            });
        }
        if let Targets::Class { labels, n_classes } = &targets {
            if let Some(&l) = labels.iter().find(|&&l| l >= *n_classes) {
                return Err(Error::InvalidParameter(format!("label {l} >= {n_classes} classes")));
            }
        }
        Ok(Dataset { x, targets, norm: None })
    }

    pub fn len(&self) -> usize {
        self.x.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn n_features(&self) -> usize {
        self.x.cols()
    }

    pub fn labels(&self) -> Option<&[usize]> {
        match &self.targets {
            Targets::Class { labels, .. } => Some(labels),
            Targets::Real { .. } => None,
        }
    }

    pub fn n_classes(&self) -> Option<usize> {
        match &self.targets {
            Targets::Class { n_classes, .. } => Some(*n_classes),
            Targets::Real { .. } => None,
        }
    }

    pub fn real_targets(&self) -> Option<&[f64]> {
        match &self.targets {
            Targets::Real { values } => Some(values),
            Targets::Class { .. } => None,
        }
    }

    /// Rows `idx`, in that order.
    pub fn subset(&self, idx: &[usize]) -> Dataset {
        let mut data = Vec::with_capacity(idx.len() * self.x.cols());
        for &i in idx {
            data.extend_from_slice(self.x.row(i));
        }
        Dataset {
            x: Matrix::from_vec_unchecked(idx.len(), self.x.cols(), data),
            targets: self.targets.subset(idx),
            norm: self.norm.clone(),
        }
    }

    /// The first `n` rows.
    pub fn head(&self, n: usize) -> Dataset {
        let idx: Vec<usize> = (0..n.min(self.len())).collect();
        self.subset(&idx)
    }

    pub fn shuffled(&self, rng: &mut SeededRng) -> Dataset {
        self.subset(&rng.permutation(self.len()))
    }

    /// Deterministic shuffled split with sizes `round(f₀·n)`, `round(f₁·n)`
    /// and the remainder. Feature statistics come from the first part only
    /// and are applied to all three; real targets are min-max scaled by the
    /// first part's range.
    pub fn split_normalized(&self, fractions: [f64; 3], seed: u64) -> Result<Splits> {
        let mut splits = self.split(fractions, seed)?;
        let norm = fit_normalization(&splits.train);
        for d in [&mut splits.train, &mut splits.val, &mut splits.test] {
            d.apply_normalization(&norm);
        }
        Ok(splits)
    }

    /// The same shuffled split as [`split_normalized`](Self::split_normalized)
    /// with features and targets left as they are. Suited to pixel data,
    /// where per-feature standardization would amplify pixels that happen to
    /// be blank throughout the training part.
    pub fn split(&self, fractions: [f64; 3], seed: u64) -> Result<Splits> {
        let total: f64 = fractions.iter().sum();
        if fractions.iter().any(|&f| f < 0.0) || (total - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidParameter(format!("split fractions {fractions:?} must be ≥ 0 and sum to 1")));
        }
        let n = self.len();
        let n_train = (fractions[0] * n as f64).round() as usize;
        let n_val = ((fractions[1] * n as f64).round() as usize).min(n - n_train);
        if n_train == 0 {
            return Err(Error::Empty);
        }
        let perm = SeededRng::new(seed).permutation(n);
        Ok(Splits {
            train: self.subset(&perm[..n_train]),
            val: self.subset(&perm[n_train..n_train + n_val]),
            test: self.subset(&perm[n_train + n_val..]),
        })
    }

    fn apply_normalization(&mut self, norm: &Normalization) {
        for r in 0..self.x.rows() {
            for ((v, m), s) in self.x.row_mut(r).iter_mut().zip(&norm.feature_mean).zip(&norm.feature_std) {
                *v = (*v - m) / s;
            }
        }
        if let (Targets::Real { values }, Some(lo), Some(range)) = (&mut self.targets, norm.target_min, norm.y_range()) {
            let range = if range > 0.0 { range } else { 1.0 };
            values.iter_mut().for_each(|v| *v = (*v - lo) / range);
        }
        self.norm = Some(norm.clone());
    }
}

fn fit_normalization(train: &Dataset) -> Normalization {
    let n = train.len() as f64;
    let d = train.n_features();
    let mut mean = vec![0.0; d];
    for row in train.x.rows_iter() {
        for (m, v) in mean.iter_mut().zip(row) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n);
    let mut var = vec![0.0; d];
    for row in train.x.rows_iter() {
        for ((s, v), m) in var.iter_mut().zip(row).zip(&mean) {
            *s += (v - m) * (v - m);
        }
    }
    var.iter_mut().for_each(|s| *s /= n);
    let (target_min, target_max) = match &train.targets {
        Targets::Real { values } => (
            values.iter().cloned().reduce(f64::min),
            values.iter().cloned().reduce(f64::max),
        ),
        Targets::Class { .. } => (None, None),
    };
    Normalization {
        feature_mean: mean,
        feature_std: var.into_iter().map(|v| v.sqrt().max(STD_FLOOR)).collect(),
        target_min,
        target_max,
    }
}

/// Train, validation and test parts of one dataset.
#[derive(Clone, Debug, PartialEq)]
pub struct Splits {
    pub train: Dataset,
    pub val: Dataset,
    pub test: Dataset,
}

/// How the target column of a CSV is read.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TargetKind {
    Regression,
    /// Non-negative integer class indices.
    Classification,
}

/// Reads a numeric CSV with a header row. All columns except `target_column`
/// become features.
pub fn read_csv(path: impl AsRef<Path>, target_column: &str, kind: TargetKind) -> Result<Dataset> {
    let mut reader = csv::Reader::from_path(path.as_ref())?;
    let headers = reader.headers()?.clone();
    let target_idx = headers
        .iter()
        .position(|h| h.trim() == target_column)
        .ok_or_else(|| Error::MissingColumn(target_column.to_string()))?;
    let n_cols = headers.len();
    let mut features = Vec::new();
    let mut targets = Vec::new();
    let mut rows = 0;
    for (line, record) in reader.records().enumerate() {
        let record = record?;
        if record.len() != n_cols {
            return Err(Error::Parse(format!("row {} has {} fields, expected {n_cols}", line + 2, record.len())));
        }
        for (c, field) in record.iter().enumerate() {
            let v: f64 = field
                .trim()
                .parse()
                .map_err(|_| Error::Parse(format!("row {}, column {:?}: {field:?} is not a number", line + 2, &headers[c])))?;
            if !v.is_finite() {
                return Err(Error::Parse(format!("row {}, column {:?}: non-finite value", line + 2, &headers[c])));
            }
            if c == target_idx {
                targets.push(v);
            } else {
                features.push(v);
            }
        }
        rows += 1;
    }
    if rows == 0 {
        return Err(Error::Empty);
    }
    let x = Matrix::new(rows, n_cols - 1, features)?;
    let targets = match kind {
        TargetKind::Regression => Targets::Real { values: targets },
        TargetKind::Classification => {
            let labels = targets
                .iter()
                .map(|&v| {
                    if v >= 0.0 && v.fract() == 0.0 {
                        Ok(v as usize)
                    } else {
                        Err(Error::Parse(format!("class label {v} is not a non-negative integer")))
                    }
                })
                .collect::<Result<Vec<usize>>>()?;
            let n_classes = labels.iter().max().map_or(0, |m| m + 1);
            Targets::Class { labels, n_classes }
        }
    };
    Dataset::new(x, targets)
}

/// [`read_csv`] followed by a normalized regression split.
pub fn load_csv(path: impl AsRef<Path>, target_column: &str, split_seed: u64, fractions: [f64; 3]) -> Result<Splits> {
    read_csv(path, target_column, TargetKind::Regression)?.split_normalized(fractions, split_seed)
}

/// The bundled Iris table (150 rows, 4 features, 3 classes).
pub fn iris() -> Result<Dataset> {
    read_csv(bundled_dir().join("iris.csv"), "species", TargetKind::Classification)
}

/// The bundled 5000-image digit subset, classes interleaved so that any
/// `limit` keeps them balanced.
pub fn mnist_subset(limit: Option<usize>) -> Result<Dataset> {
    let dir = bundled_dir();
    load_idx(
        dir.join("mnist5k-images-idx3-ubyte.gz"),
        dir.join("mnist5k-labels-idx1-ubyte.gz"),
        limit,
    )
}

/// The bundled 2080-image handwritten-style letter set used as
/// out-of-distribution input for the digit classifier.
pub fn letters_subset(limit: Option<usize>) -> Result<Dataset> {
    let dir = bundled_dir();
    load_idx(
        dir.join("letters-images-idx3-ubyte.gz"),
        dir.join("letters-labels-idx1-ubyte.gz"),
        limit,
    )
}

#[cfg(test)]
mod tests {
    use std::io::Write;

    use super::*;

    fn write_csv(body: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(body.as_bytes()).unwrap();
        f
    }

    fn ten_rows() -> tempfile::NamedTempFile {
        let mut s = String::from("a,const,y\n");
        for i in 0..10 {
            s.push_str(&format!("{},{},{}\n", i, 3.5, 2 * i + 1));
        }
        write_csv(&s)
    }

    #[test]
    fn split_sizes_and_determinism() {
        let f = ten_rows();
        let s = load_csv(f.path(), "y", 7, [0.6, 0.2, 0.2]).unwrap();
        assert_eq!((s.train.len(), s.val.len(), s.test.len()), (6, 2, 2));
        let again = load_csv(f.path(), "y", 7, [0.6, 0.2, 0.2]).unwrap();
        assert_eq!(s, again);
    }

    #[test]
    fn normalization_uses_training_split() {
        let f = ten_rows();
        let s = load_csv(f.path(), "y", 3, [0.6, 0.2, 0.2]).unwrap();
        // The constant column standardizes to exactly zero.
        assert!(s.train.x.column(1).iter().chain(&s.test.x.column(1)).all(|&v| v == 0.0));
        let a = s.train.x.column(0);
        let mean: f64 = a.iter().sum::<f64>() / a.len() as f64;
        assert!(mean.abs() < 1e-12);
        let y = s.train.real_targets().unwrap();
        let (lo, hi) = y.iter().fold((f64::MAX, f64::MIN), |(l, h), &v| (l.min(v), h.max(v)));
        assert_eq!((lo, hi), (0.0, 1.0));
        let norm = s.train.norm.as_ref().unwrap();
        assert_eq!(norm.feature_std[1], STD_FLOOR);
        assert!(norm.y_range().unwrap() > 0.0);
        assert_eq!(s.test.norm, s.train.norm);
    }

    #[test]
    fn csv_errors() {
        let f = ten_rows();
        assert!(matches!(load_csv(f.path(), "nope", 0, [0.6, 0.2, 0.2]), Err(Error::MissingColumn(_))));
        let bad = write_csv("a,y\n1,2\nx,3\n");
        assert!(matches!(read_csv(bad.path(), "y", TargetKind::Regression), Err(Error::Parse(_))));
        let frac = write_csv("a,y\n1,0.5\n");
        assert!(matches!(read_csv(frac.path(), "y", TargetKind::Classification), Err(Error::Parse(_))));
        assert!(load_csv(f.path(), "y", 0, [0.5, 0.2, 0.2]).is_err());
    }

    #[test]
    fn bundled_iris() {
        let d = iris().unwrap();
        assert_eq!((d.len(), d.n_features(), d.n_classes()), (150, 4, Some(3)));
        let counts = (0..3).map(|c| d.labels().unwrap().iter().filter(|&&l| l == c).count());
        assert!(counts.into_iter().all(|n| n == 50));
    }
}
