//! Datasets: in-memory handle, CSV and IDX ingestion, splitting.

mod csv_loader;
mod idx;

pub use csv_loader::{load_csv, load_preprocessed, save_preprocessed, ColumnKind, CsvSchema, MissingPolicy, Preprocessor};
pub use idx::{load_idx, IMAGES_MAGIC, LABELS_MAGIC};

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::layers::Target;
use crate::rng::RngState;
use crate::tensor::Tensor;

/// Tolerance on the enforced row-norm bound.
pub const ROW_NORM_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Labels {
    Classes { labels: Vec<usize>, num_classes: usize },
    Values(Vec<f64>),
}

impl Labels {
    pub fn len(&self) -> usize {
        match self {
            Labels::Classes { labels, .. } => labels.len(),
            Labels::Values(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn target(&self, i: usize) -> Target {
        match self {
            Labels::Classes { labels, .. } => Target::Class(labels[i]),
            Labels::Values(v) => Target::Value(v[i]),
        }
    }

    fn subset(&self, idx: &[usize]) -> Labels {
        match self {
            Labels::Classes { labels, num_classes } => Labels::Classes {
                labels: idx.iter().map(|&i| labels[i]).collect(),
                num_classes: *num_classes,
            },
            Labels::Values(v) => Labels::Values(idx.iter().map(|&i| v[i]).collect()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub source: String,
    /// Hex SHA-256 over the preprocessed features and labels.
    pub digest: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetHandle {
    rows: Vec<Tensor>,
    labels: Labels,
    x1: f64,
    provenance: Provenance,
}

impl DatasetHandle {
    /// Builds a handle from preprocessed rows. Every row must already satisfy
    /// `‖x‖ ≤ x1`.
    pub fn new(rows: Vec<Vec<f64>>, labels: Labels, x1: f64, source: impl Into<String>) -> Result<Self> {
        let source = source.into();
        if rows.len() != labels.len() {
            return Err(Error::Config(format!(
                "{} feature rows but {} labels",
                rows.len(),
                labels.len()
            )));
        }
        if rows.len() < 2 {
            return Err(Error::Config("a dataset needs at least two rows".into()));
        }
        if !(x1 > 0.0) {
            return Err(Error::Config(format!("input norm bound must be positive, got {x1}")));
        }
        let dim = rows[0].len();
        for (i, r) in rows.iter().enumerate() {
            if r.len() != dim {
                return Err(Error::Data {
                    path: source.clone().into(),
                    row: i,
                    reason: format!("row has {} features, expected {dim}", r.len()),
                });
            }
            if r.iter().any(|v| !v.is_finite()) {
                return Err(Error::Data {
                    path: source.clone().into(),
                    row: i,
                    reason: "non-finite feature".into(),
                });
            }
            let norm = r.iter().fold(0.0, |acc, v| acc + v * v).sqrt();
            if norm > x1 + ROW_NORM_TOLERANCE {
                return Err(Error::Data {
                    path: source.clone().into(),
                    row: i,
                    reason: format!("row norm {norm} exceeds bound {x1}"),
                });
            }
        }
        if let Labels::Classes { labels, num_classes } = &labels {
            if let Some((i, l)) = labels.iter().enumerate().find(|(_, l)| **l >= *num_classes) {
                return Err(Error::Data {
                    path: source.clone().into(),
                    row: i,
                    reason: format!("label {l} outside 0..{num_classes}"),
                });
            }
        }
        let digest = digest_of(&rows, &labels);
        Ok(Self {
            rows: rows.into_iter().map(Tensor::vector).collect(),
            labels,
            x1,
            provenance: Provenance { source, digest },
        })
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.rows[0].len()
    }

    pub fn x1(&self) -> f64 {
        self.x1
    }

    pub fn row(&self, i: usize) -> &Tensor {
        &self.rows[i]
    }

    pub fn target(&self, i: usize) -> Target {
        self.labels.target(i)
    }

    pub fn labels(&self) -> &Labels {
        &self.labels
    }

    pub fn num_classes(&self) -> Option<usize> {
        match &self.labels {
            Labels::Classes { num_classes, .. } => Some(*num_classes),
            Labels::Values(_) => None,
        }
    }

    pub fn provenance(&self) -> &Provenance {
        &self.provenance
    }

    pub fn max_row_norm(&self) -> f64 {
        self.rows
            .iter()
            .map(|r| r.sum_squares().sqrt())
            .fold(0.0, f64::max)
    }

    pub fn subset(&self, idx: &[usize], tag: &str) -> Result<Self> {
        let rows = idx.iter().map(|&i| self.rows[i].data().to_vec()).collect();
        Self::new(
            rows,
            self.labels.subset(idx),
            self.x1,
            format!("{}#{tag}", self.provenance.source),
        )
    }

    /// Seeded 80/20 split, stratified by class for classification data.
    pub fn stratified_split(&self, rng: &mut RngState) -> Result<(Self, Self)> {
        let mut buckets: Vec<Vec<usize>> = match &self.labels {
            Labels::Classes { labels, num_classes } => {
                let mut b = vec![Vec::new(); *num_classes];
                for (i, &l) in labels.iter().enumerate() {
                    b[l].push(i);
                }
                b
            }
            Labels::Values(v) => vec![(0..v.len()).collect()],
        };
        let mut train = Vec::new();
        let mut test = Vec::new();
        for bucket in &mut buckets {
            bucket.shuffle(rng.inner());
            let n_test = (bucket.len() as f64 * 0.2).round() as usize;
            test.extend_from_slice(&bucket[..n_test]);
            train.extend_from_slice(&bucket[n_test..]);
        }
        train.sort_unstable();
        test.sort_unstable();
        Ok((self.subset(&train, "train")?, self.subset(&test, "test")?))
    }
}

fn digest_of(rows: &[Vec<f64>], labels: &Labels) -> String {
    let mut h = Sha256::new();
    for r in rows {
        for v in r {
            h.update(v.to_le_bytes());
        }
    }
    match labels {
        Labels::Classes { labels, .. } => {
            for l in labels {
                h.update((*l as u64).to_le_bytes());
            }
        }
        Labels::Values(v) => {
            for x in v {
                h.update(x.to_le_bytes());
            }
        }
    }
    hex::encode(h.finalize())
}

/// Scales every row by `x1 / max_row_norm` so the largest row has norm `x1`.
pub fn rescale_to_bound(rows: &mut [Vec<f64>], x1: f64) {
    let max = rows
        .iter()
        .map(|r| r.iter().fold(0.0, |acc, v| acc + v * v).sqrt())
        .fold(0.0, f64::max);
    if max > 0.0 {
        let s = x1 / max;
        for r in rows.iter_mut() {
            r.iter_mut().for_each(|v| *v *= s);
        }
    }
}

/// Shrinks rows whose norm exceeds `x1` onto the ball; shorter rows are kept.
pub fn cap_row_norms(rows: &mut [Vec<f64>], x1: f64) {
    for r in rows.iter_mut() {
        let n = r.iter().fold(0.0, |acc, v| acc + v * v).sqrt();
        if n > x1 {
            let s = x1 / n;
            r.iter_mut().for_each(|v| *v *= s);
        }
    }
}
