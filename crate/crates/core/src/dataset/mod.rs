//! Labeled embedding datasets: class catalog, sample records, embedding
//! matrix, and optional per-class text embeddings.

pub(crate) mod container;
mod csv_io;

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{stream_rng, Stream};
use crate::scalar::{norm, Scalar};
use crate::Provenance;

pub use container::{read_container, write_container, DATASET_MAGIC};
pub use csv_io::{read_csv, write_csv, CLASSES_SIDECAR};
pub(crate) use csv_io::write_provenance_comment as write_provenance;

/// Tolerance on row norms for matrices flagged as normalized.
pub const UNIT_NORM_TOL: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClassCatalog {
    names: Vec<String>,
    index: HashMap<String, usize>,
}

impl ClassCatalog {
    pub fn new<S: Into<String>>(names: impl IntoIterator<Item = S>) -> Result<Self> {
        let names: Vec<String> = names.into_iter().map(Into::into).collect();
        if names.len() < 2 {
            return Err(Error::Catalog(format!(
                "need at least 2 classes, got {}",
                names.len()
            )));
        }
        let mut index = HashMap::with_capacity(names.len());
        for (i, name) in names.iter().enumerate() {
            if name.is_empty() {
                return Err(Error::Catalog(format!("class {i} has an empty name")));
            }
            if index.insert(name.clone(), i).is_some() {
                return Err(Error::Catalog(format!("duplicate class name {name:?}")));
            }
        }
        Ok(Self { names, index })
    }

    /// Classes named `"0"`, `"1"`, … for data that carries no names.
    pub fn numbered(k: usize) -> Result<Self> {
        Self::new((0..k).map(|i| i.to_string()))
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn name(&self, index: usize) -> Option<&str> {
        self.names.get(index).map(String::as_str)
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Split {
    Synthetic,
    RealTrain,
    RealTest,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Synthetic, Split::RealTrain, Split::RealTest];

    pub fn as_str(self) -> &'static str {
        match self {
            Split::Synthetic => "synthetic",
            Split::RealTrain => "real-train",
            Split::RealTest => "real-test",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Split {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        Split::ALL
            .into_iter()
            .find(|t| t.as_str() == s)
            .ok_or_else(|| s.to_string())
    }
}

/// Row-major `n × d` matrix of finite values.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingMatrix<F> {
    n: usize,
    d: usize,
    values: Vec<F>,
    normalized: bool,
}

impl<F: Scalar> EmbeddingMatrix<F> {
    pub fn new(n: usize, d: usize, values: Vec<F>) -> Result<Self> {
        if d == 0 {
            return Err(Error::DimensionMismatch("feature dimension is 0".into()));
        }
        if values.len() != n * d {
            return Err(Error::DimensionMismatch(format!(
                "{} values for a {n}x{d} matrix",
                values.len()
            )));
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                record: format!("row {}", pos / d),
            });
        }
        Ok(Self {
            n,
            d,
            values,
            normalized: false,
        })
    }

    pub fn from_rows(rows: &[Vec<F>]) -> Result<Self> {
        let d = rows.first().map_or(0, Vec::len);
        if let Some(i) = rows.iter().position(|r| r.len() != d) {
            return Err(Error::DimensionMismatch(format!(
                "row {i} has {} columns, expected {d}",
                rows[i].len()
            )));
        }
        Self::new(rows.len(), d, rows.concat())
    }

    /// Sets the normalized flag after checking every row norm.
    pub fn into_normalized(mut self) -> Result<Self> {
        for i in 0..self.n {
            let r = norm(self.row(i)).as_f64();
            if (r - 1.0).abs() > UNIT_NORM_TOL {
                return Err(Error::NotNormalized {
                    what: format!("row {i}"),
                    norm: r,
                });
            }
        }
        self.normalized = true;
        Ok(self)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    pub fn values(&self) -> &[F] {
        &self.values
    }

    pub fn row(&self, i: usize) -> &[F] {
        &self.values[i * self.d..(i + 1) * self.d]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[F]> {
        self.values.chunks_exact(self.d)
    }

    /// Scales every row to unit Euclidean norm.
    pub fn l2_normalize(&self) -> Result<Self> {
        let mut values = Vec::with_capacity(self.values.len());
        for (i, row) in self.rows().enumerate() {
            let r = norm(row);
            if r == F::zero() {
                return Err(Error::ZeroRow(i));
            }
            values.extend(row.iter().map(|&v| v / r));
        }
        Ok(Self {
            n: self.n,
            d: self.d,
            values,
            normalized: true,
        })
    }

    fn gather(&self, rows: &[usize]) -> Self {
        let mut values = Vec::with_capacity(rows.len() * self.d);
        for &r in rows {
            values.extend_from_slice(self.row(r));
        }
        Self {
            n: rows.len(),
            d: self.d,
            values,
            normalized: self.normalized,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SampleRecord {
    pub id: String,
    pub label: usize,
    pub split: Split,
    /// Index into the embedding matrix. Always equals the record's position
    /// once the record is inside a [`Dataset`].
    pub row: usize,
}

impl SampleRecord {
    pub fn new(id: impl Into<String>, label: usize, split: Split, row: usize) -> Self {
        Self {
            id: id.into(),
            label,
            split,
            row,
        }
    }
}

/// Immutable labeled embedding dataset.
///
/// Construction canonicalizes the layout so that sample `i` owns embedding
/// row `i`; two datasets with the same records and row contents compare
/// equal regardless of how they were assembled.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset<F> {
    catalog: ClassCatalog,
    samples: Vec<SampleRecord>,
    embeddings: EmbeddingMatrix<F>,
    class_text: Option<EmbeddingMatrix<F>>,
}

impl<F: Scalar> Dataset<F> {
    pub fn new(
        catalog: ClassCatalog,
        samples: Vec<SampleRecord>,
        embeddings: EmbeddingMatrix<F>,
        class_text: Option<EmbeddingMatrix<F>>,
    ) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::EmptyDataset);
        }
        let k = catalog.len();
        let mut seen = HashSet::with_capacity(samples.len());
        for s in &samples {
            if s.label >= k {
                return Err(Error::UnknownClass {
                    record: s.id.clone(),
                    label: s.label,
                });
            }
            if s.row >= embeddings.n() {
                return Err(Error::DimensionMismatch(format!(
                    "record {} points at row {} of a {}-row matrix",
                    s.id,
                    s.row,
                    embeddings.n()
                )));
            }
            if !seen.insert(s.id.as_str()) {
                return Err(Error::DuplicateId(s.id.clone()));
            }
        }
        if let Some(t) = &class_text {
            if t.n() != k || t.d() != embeddings.d() {
                return Err(Error::DimensionMismatch(format!(
                    "class text block is {}x{}, expected {k}x{}",
                    t.n(),
                    t.d(),
                    embeddings.d()
                )));
            }
        }

        let canonical = samples.iter().enumerate().all(|(i, s)| s.row == i)
            && embeddings.n() == samples.len();
        let (samples, embeddings) = if canonical {
            (samples, embeddings)
        } else {
            let rows: Vec<usize> = samples.iter().map(|s| s.row).collect();
            let m = embeddings.gather(&rows);
            let samples = samples
                .into_iter()
                .enumerate()
                .map(|(i, s)| SampleRecord { row: i, ..s })
                .collect();
            (samples, m)
        };

        Ok(Self {
            catalog,
            samples,
            embeddings,
            class_text,
        })
    }

    pub fn catalog(&self) -> &ClassCatalog {
        &self.catalog
    }

    pub fn samples(&self) -> &[SampleRecord] {
        &self.samples
    }

    pub fn embeddings(&self) -> &EmbeddingMatrix<F> {
        &self.embeddings
    }

    pub fn class_text(&self) -> Option<&EmbeddingMatrix<F>> {
        self.class_text.as_ref()
    }

    pub fn num_classes(&self) -> usize {
        self.catalog.len()
    }

    pub fn dim(&self) -> usize {
        self.embeddings.d()
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Embedding of the `i`-th sample.
    pub fn x(&self, i: usize) -> &[F] {
        self.embeddings.row(self.samples[i].row)
    }

    pub fn indices_in(&self, split: Split) -> Vec<usize> {
        self.samples
            .iter()
            .enumerate()
            .filter(|(_, s)| s.split == split)
            .map(|(i, _)| i)
            .collect()
    }

    pub fn count_in(&self, split: Split) -> usize {
        self.samples.iter().filter(|s| s.split == split).count()
    }

    /// Per-class sample counts.
    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.num_classes()];
        for s in &self.samples {
            counts[s.label] += 1;
        }
        counts
    }

    /// Same samples with every embedding row scaled to unit norm.
    pub fn l2_normalized(&self) -> Result<Self> {
        Ok(Self {
            embeddings: self.embeddings.l2_normalize()?,
            ..self.clone()
        })
    }

    pub fn with_class_text(&self, class_text: Option<EmbeddingMatrix<F>>) -> Result<Self> {
        Self::new(
            self.catalog.clone(),
            self.samples.clone(),
            self.embeddings.clone(),
            class_text,
        )
    }

    /// Samples at `indices`, in that order, with rows re-indexed.
    pub fn select(&self, indices: &[usize]) -> Result<Self> {
        if indices.is_empty() {
            return Err(Error::EmptySelection);
        }
        let rows: Vec<usize> = indices.iter().map(|&i| self.samples[i].row).collect();
        let samples = indices
            .iter()
            .enumerate()
            .map(|(new_row, &i)| SampleRecord {
                row: new_row,
                ..self.samples[i].clone()
            })
            .collect();
        Self::new(
            self.catalog.clone(),
            samples,
            self.embeddings.gather(&rows),
            self.class_text.clone(),
        )
    }

    pub fn subset(&self, predicate: impl Fn(&SampleRecord) -> bool) -> Result<Self> {
        let idx: Vec<usize> = self
            .samples
            .iter()
            .enumerate()
            .filter(|(_, s)| predicate(s))
            .map(|(i, _)| i)
            .collect();
        self.select(&idx)
    }

    /// Up to `per_class` samples of each class among those matching
    /// `predicate`, drawn by a seeded shuffle of each class's candidates.
    /// Selected samples keep their original relative order.
    pub fn k_shot(
        &self,
        per_class: usize,
        seed: u64,
        predicate: impl Fn(&SampleRecord) -> bool,
    ) -> Result<Self> {
        let mut rng = stream_rng(seed, Stream::KShot);
        let mut chosen = Vec::new();
        for class in 0..self.num_classes() {
            let mut members: Vec<usize> = self
                .samples
                .iter()
                .enumerate()
                .filter(|(_, s)| s.label == class && predicate(s))
                .map(|(i, _)| i)
                .collect();
            members.shuffle(&mut rng);
            members.truncate(per_class);
            chosen.extend(members);
        }
        chosen.sort_unstable();
        self.select(&chosen)
    }

    /// Concatenates two datasets over the same catalog and dimension.
    pub fn concat(&self, other: &Self) -> Result<Self> {
        if self.catalog != other.catalog {
            return Err(Error::Catalog("datasets use different class catalogs".into()));
        }
        if self.dim() != other.dim() {
            return Err(Error::DimensionMismatch(format!(
                "d={} vs d={}",
                self.dim(),
                other.dim()
            )));
        }
        let n = self.len();
        let mut samples = self.samples.clone();
        samples.extend(other.samples.iter().map(|s| SampleRecord {
            row: s.row + n,
            ..s.clone()
        }));
        let mut values = self.embeddings.values.clone();
        values.extend_from_slice(&other.embeddings.values);
        let m = EmbeddingMatrix::new(n + other.len(), self.dim(), values)?;
        Self::new(
            self.catalog.clone(),
            samples,
            m,
            self.class_text.clone().or_else(|| other.class_text.clone()),
        )
    }

    /// Rebuilds the dataset with different labels, keeping everything else.
    pub(crate) fn relabeled(&self, labels: &[usize]) -> Result<Self> {
        let samples = self
            .samples
            .iter()
            .zip(labels)
            .map(|(s, &label)| SampleRecord { label, ..s.clone() })
            .collect();
        Self::new(
            self.catalog.clone(),
            samples,
            self.embeddings.clone(),
            self.class_text.clone(),
        )
    }

    pub(crate) fn with_embeddings(&self, embeddings: EmbeddingMatrix<F>) -> Result<Self> {
        Self::new(
            self.catalog.clone(),
            self.samples.clone(),
            embeddings,
            self.class_text.clone(),
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FileFormat {
    Container,
    Csv,
}

impl FileFormat {
    /// `.csv` files are CSV, everything else is the binary container.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(ext) if ext.eq_ignore_ascii_case("csv") => FileFormat::Csv,
            _ => FileFormat::Container,
        }
    }
}

pub fn load_dataset<F: Scalar>(path: &Path, format: FileFormat) -> Result<Dataset<F>> {
    match format {
        FileFormat::Container => read_container(path),
        FileFormat::Csv => read_csv(path),
    }
}

pub fn save_dataset<F: Scalar>(
    dataset: &Dataset<F>,
    path: &Path,
    format: FileFormat,
    provenance: Option<&Provenance>,
) -> Result<()> {
    if dataset.is_empty() {
        return Err(Error::EmptyDataset);
    }
    match format {
        FileFormat::Container => write_container(dataset, path, provenance),
        FileFormat::Csv => write_csv(dataset, path, provenance),
    }
}
