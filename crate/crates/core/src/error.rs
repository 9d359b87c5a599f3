use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed file: {0}")]
    Format(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("non-finite value in record {record}")]
    NonFinite { record: String },

    #[error("unknown class index {label} in record {record}")]
    UnknownClass { record: String, label: usize },

    #[error("unknown split tag {tag:?} in record {record}")]
    UnknownSplit { record: String, tag: String },

    #[error("duplicate sample id {0}")]
    DuplicateId(String),

    #[error("invalid class catalog: {0}")]
    Catalog(String),

    #[error("empty dataset rejected")]
    EmptyDataset,

    #[error("empty selection")]
    EmptySelection,

    #[error("zero row at index {0} cannot be normalized")]
    ZeroRow(usize),

    #[error("{what} is not L2-normalized (norm {norm})")]
    NotNormalized { what: String, norm: f64 },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("dataset has no class text embeddings")]
    MissingClassText,

    #[error("dataset has no synthetic samples")]
    NoSyntheticSamples,

    #[error("uncertainty report has no row for sample {0}")]
    MissingReportRow(String),

    #[error("class {index} emptied ({name}): every synthetic sample would be dropped")]
    ClassEmptied { index: usize, name: String },

    #[error("batch contains dropped sample {0}")]
    DroppedSample(String),

    #[error("batch weight sum is zero")]
    ZeroWeight,

    #[error("training diverged at epoch {epoch}: loss {loss}")]
    Divergence { epoch: usize, loss: f64 },

    #[error("class {index} ({name}) has no samples")]
    EmptyClass { index: usize, name: String },

    #[error("classes {0} and {1} have coincident centroids")]
    CoincidentCentroids(usize, usize),

    #[error("cannot choose a bandwidth: all points identical")]
    DegenerateBandwidth,

    #[error("data has rank 0")]
    RankZero,

    #[error("description bank: {0}")]
    Bank(String),

    #[error("class not in bank: {0}")]
    ClassNotInBank(String),

    #[error("template: {0}")]
    Template(String),

    #[error("insufficient descriptions: wanted {wanted}, got {got} unique")]
    InsufficientDescriptions { wanted: usize, got: usize },

    #[error("provider failure: {0}")]
    Provider(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn param(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }

    /// Failures caused by the environment rather than by bad input or
    /// configuration: I/O, remote providers, numerical divergence.
    pub fn is_runtime(&self) -> bool {
        matches!(
            self,
            Error::Io { .. } | Error::Provider(_) | Error::Divergence { .. }
        )
    }
}
