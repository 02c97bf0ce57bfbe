//! Datasets, CSV ingestion, synthetic tasks and IID client partitions.

use std::path::Path;

use rand::seq::SliceRandom;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed::{derive_rng, Stream};

/// `m` samples of `dim` features, stored row-major, with one label each.
///
/// Class labels are stored as integral `f64` values.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    features: Vec<f64>,
    dim: usize,
    labels: Vec<f64>,
}

impl Dataset {
    pub fn new(features: Vec<f64>, dim: usize, labels: Vec<f64>) -> Result<Self> {
        if labels.is_empty() {
            return Err(Error::EmptyDataset);
        }
        if dim == 0 || features.len() != dim * labels.len() {
            return Err(Error::dim("feature matrix", dim * labels.len(), features.len()));
        }
        Ok(Dataset { features, dim, labels })
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

    pub fn row(&self, i: usize) -> &[f64] {
        &self.features[i * self.dim..(i + 1) * self.dim]
    }

    pub fn label(&self, i: usize) -> f64 {
        self.labels[i]
    }

    pub fn labels(&self) -> &[f64] {
        &self.labels
    }

    pub fn features(&self) -> &[f64] {
        &self.features
    }

    /// Copy of the rows at `indices`, in that order.
    pub fn subset(&self, indices: &[usize]) -> Result<Dataset> {
        let mut features = Vec::with_capacity(indices.len() * self.dim);
        let mut labels = Vec::with_capacity(indices.len());
        for &i in indices {
            if i >= self.len() {
                return Err(Error::InvalidArgs(format!("row {i} out of range {}", self.len())));
            }
            features.extend_from_slice(self.row(i));
            labels.push(self.labels[i]);
        }
        Dataset::new(features, self.dim, labels)
    }

    /// Splits off the last `test` rows (after a seeded shuffle) as a test set.
    pub fn train_test_split(&self, test: usize, seed: u64) -> Result<(Dataset, Dataset)> {
        if test == 0 || test >= self.len() {
            return Err(Error::InvalidArgs(format!(
                "test size {test} must be in 1..{}",
                self.len()
            )));
        }
        let mut idx: Vec<usize> = (0..self.len()).collect();
        idx.shuffle(&mut derive_rng(seed, Stream::Data, 1, 0));
        let cut = self.len() - test;
        Ok((self.subset(&idx[..cut])?, self.subset(&idx[cut..])?))
    }
}

/// Where the label lives in a CSV file.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CsvSchema {
    #[serde(default)]
    pub has_header: bool,
    /// Column index of the label; every other column is a feature.
    #[serde(default)]
    pub label_column: usize,
}

pub fn load_csv(path: impl AsRef<Path>, schema: CsvSchema) -> Result<Dataset> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(schema.has_header)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(file);

    let mut features = Vec::new();
    let mut labels = Vec::new();
    let mut width = None;
    for record in reader.records() {
        let record = record.map_err(|e| match e.kind() {
            csv::ErrorKind::Io(_) => Error::Io {
                path: path.into(),
                source: std::io::Error::other(e.to_string()),
            },
            _ => Error::Parse {
                line: e.position().map_or(0, |p| p.line()),
                message: e.to_string(),
            },
        })?;
        let line = record.position().map_or(0, |p| p.line());
        if record.len() == 1 && record[0].is_empty() {
            continue;
        }
        match width {
            None => width = Some(record.len()),
            Some(w) if w != record.len() => {
                return Err(Error::Parse {
                    line,
                    message: format!("expected {w} fields, found {}", record.len()),
                })
            }
            _ => {}
        }
        if schema.label_column >= record.len() {
            return Err(Error::Parse {
                line,
                message: format!("label column {} missing", schema.label_column),
            });
        }
        for (c, field) in record.iter().enumerate() {
            let v: f64 = field.parse().map_err(|_| Error::Parse {
                line,
                message: format!("column {c}: cannot parse {field:?} as a number"),
            })?;
            if c == schema.label_column {
                labels.push(v);
            } else {
                features.push(v);
            }
        }
    }
    let dim = width.map_or(0, |w| w - 1);
    Dataset::new(features, dim, labels)
}

/// Writes the label first, then the features, with enough digits to reload
/// every value bit-exactly.
pub fn write_csv(path: impl AsRef<Path>, data: &Dataset) -> Result<()> {
    let path = path.as_ref();
    let mut writer = csv::Writer::from_path(path).map_err(|e| Error::io(path, std::io::Error::other(e)))?;
    for i in 0..data.len() {
        let mut row = Vec::with_capacity(data.dim() + 1);
        row.push(format!("{:.16e}", data.label(i)));
        row.extend(data.row(i).iter().map(|v| format!("{v:.16e}")));
        writer
            .write_record(&row)
            .map_err(|e| Error::io(path, std::io::Error::other(e)))?;
    }
    writer.flush().map_err(|e| Error::io(path, e))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum SynthKind {
    /// Isotropic unit-variance Gaussian clusters, one per class, with centres
    /// at distance `separation` from the origin. Classes are balanced.
    Blobs { classes: usize, separation: f64 },
    /// `y = w*·x + 0.1·noise` with a hidden `w*`.
    Regression,
}

pub fn synth_dataset(kind: &SynthKind, m: usize, d: usize, seed: u64) -> Result<Dataset> {
    if m == 0 {
        return Err(Error::EmptyDataset);
    }
    if d == 0 {
        return Err(Error::InvalidArgs("synthetic dimension must be positive".into()));
    }
    let mut rng = derive_rng(seed, Stream::Data, 0, 0);
    let mut normal = move || -> f64 { StandardNormal.sample(&mut rng) };
    let mut features = Vec::with_capacity(m * d);
    let mut labels = Vec::with_capacity(m);
    match kind {
        SynthKind::Blobs { classes, separation } => {
            if *classes < 2 {
                return Err(Error::InvalidArgs("need at least two classes".into()));
            }
            let centres: Vec<Vec<f64>> = (0..*classes)
                .map(|_| {
                    let v: Vec<f64> = (0..d).map(|_| normal()).collect();
                    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
                    v.into_iter().map(|x| x * separation / norm).collect()
                })
                .collect();
            for i in 0..m {
                let k = i % classes;
                features.extend(centres[k].iter().map(|c| c + normal()));
                labels.push(k as f64);
            }
        }
        SynthKind::Regression => {
            let w: Vec<f64> = (0..d).map(|_| normal()).collect();
            for _ in 0..m {
                let x: Vec<f64> = (0..d).map(|_| normal()).collect();
                labels.push(x.iter().zip(&w).map(|(a, b)| a * b).sum::<f64>() + 0.1 * normal());
                features.extend(x);
            }
        }
    }
    Dataset::new(features, d, labels)
}

/// Disjoint client index sets over a shuffled dataset.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Partition {
    order: Vec<usize>,
    bounds: Vec<usize>,
}

/// Shuffle-then-split into `clients` parts whose sizes differ by at most one
/// (larger parts first).
pub fn partition_iid(m: usize, clients: usize, seed: u64) -> Result<Partition> {
    if clients == 0 || clients > m {
        return Err(Error::TooManyClients { samples: m, clients });
    }
    let mut order: Vec<usize> = (0..m).collect();
    order.shuffle(&mut derive_rng(seed, Stream::Partition, 0, 0));
    let (base, extra) = (m / clients, m % clients);
    let mut bounds = vec![0];
    for i in 0..clients {
        bounds.push(bounds[i] + base + usize::from(i < extra));
    }
    Ok(Partition { order, bounds })
}

impl Partition {
    pub fn clients(&self) -> usize {
        self.bounds.len() - 1
    }

    pub fn indices(&self, client: usize) -> &[usize] {
        &self.order[self.bounds[client]..self.bounds[client + 1]]
    }

    pub fn sizes(&self) -> Vec<usize> {
        self.bounds.windows(2).map(|b| b[1] - b[0]).collect()
    }

    pub fn total(&self) -> usize {
        *self.bounds.last().expect("non-empty bounds")
    }

    /// `cᵢ = |Dᵢ|/|D|`, each a single correctly rounded division.
    pub fn weights(&self) -> Vec<f64> {
        let total = self.total() as f64;
        self.sizes().into_iter().map(|s| s as f64 / total).collect()
    }

    /// Materialise each client's local dataset.
    pub fn split(&self, data: &Dataset) -> Result<Vec<Dataset>> {
        if data.len() != self.total() {
            return Err(Error::dim("partitioned dataset", self.total(), data.len()));
        }
        (0..self.clients()).map(|i| data.subset(self.indices(i))).collect()
    }
}
