//! Uncertainty-aware curation of synthetic training data.
//!
//! The pipeline scores synthetic samples by the entropy of their
//! similarity to class text embeddings, turns those scores into per-sample
//! label smoothing (or weighting / filtering), trains a linear probe on
//! frozen embeddings, and measures the synthetic–real gap. All numerics are
//! generic over [`Scalar`] (`f32`/`f64`); the aliases below fix `f64`, with
//! `*32` variants for single precision.

pub mod curation;
pub mod dataset;
pub mod diagnostics;
pub mod error;
pub mod experiment;
pub mod probe;
pub mod promptgen;
pub mod rng;
pub mod scalar;
pub mod simbench;
pub mod uncertainty;

/// Effective configuration echoed into output artifacts.
pub type Provenance = std::collections::BTreeMap<String, String>;

pub use curation::{PlanEntry, PlanParams, Strategy, TargetDistribution};
pub use dataset::{ClassCatalog, FileFormat, SampleRecord, Split};
pub use diagnostics::GapReport;
pub use error::{Error, Result};
pub use probe::EvalReport;
pub use scalar::Scalar;

pub type Dataset = dataset::Dataset<f64>;
pub type Dataset32 = dataset::Dataset<f32>;
pub type EmbeddingMatrix = dataset::EmbeddingMatrix<f64>;
pub type EmbeddingMatrix32 = dataset::EmbeddingMatrix<f32>;
pub type UncertaintyReport = uncertainty::UncertaintyReport<f64>;
pub type UncertaintyReport32 = uncertainty::UncertaintyReport<f32>;
pub type CurationPlan = curation::CurationPlan<f64>;
pub type CurationPlan32 = curation::CurationPlan<f32>;
pub type LinearProbe = probe::LinearProbe<f64>;
pub type LinearProbe32 = probe::LinearProbe<f32>;
pub type TrainConfig = probe::TrainConfig<f64>;
pub type TrainConfig32 = probe::TrainConfig<f32>;
pub type KernelSpec = diagnostics::KernelSpec<f64>;
pub type KernelSpec32 = diagnostics::KernelSpec<f32>;
