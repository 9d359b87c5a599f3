//! Distribution-gap and cluster-complexity metrics over embedding sets.

mod davies_bouldin;
mod kernel;
mod projection;

use std::fs;
use std::path::Path;

use serde::Serialize;

pub use davies_bouldin::{class_centroids, davies_bouldin};
pub use kernel::{median_bandwidth, mmd, Bandwidth, KernelKind, KernelSpec};
pub use projection::{pca_project, write_projection_csv, write_scatter_svg, Projection};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::Provenance;

/// Davies-Bouldin per dataset and pairwise MMD per kernel.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GapReport {
    pub names: Vec<String>,
    pub db_scores: Vec<f64>,
    pub kernels: Vec<String>,
    /// `mmd_matrix[kernel][i][j]`.
    pub mmd_matrix: Vec<Vec<Vec<f64>>>,
}

fn rows_of<F: Scalar>(ds: &Dataset<F>) -> Vec<&[F]> {
    (0..ds.len()).map(|i| ds.x(i)).collect()
}

pub fn gap_report<F: Scalar>(
    datasets: &[(String, &Dataset<F>)],
    kernels: &[KernelSpec<F>],
) -> Result<GapReport> {
    if datasets.is_empty() {
        return Err(Error::EmptySelection);
    }
    let db_scores = datasets
        .iter()
        .map(|(_, ds)| davies_bouldin(ds).map(Scalar::as_f64))
        .collect::<Result<Vec<_>>>()?;
    let rows: Vec<Vec<&[F]>> = datasets.iter().map(|(_, ds)| rows_of(ds)).collect();
    let m = datasets.len();
    let mut mmd_matrix = Vec::with_capacity(kernels.len());
    for kernel in kernels {
        let mut mat = vec![vec![0.0; m]; m];
        for i in 0..m {
            for j in i + 1..m {
                let v = mmd(&rows[i], &rows[j], kernel)?.as_f64();
                mat[i][j] = v;
                mat[j][i] = v;
            }
        }
        mmd_matrix.push(mat);
    }
    Ok(GapReport {
        names: datasets.iter().map(|(n, _)| n.clone()).collect(),
        db_scores,
        kernels: kernels.iter().map(|k| k.to_string()).collect(),
        mmd_matrix,
    })
}

/// Pretty JSON of the report with the effective config under `"config"`.
pub fn gap_json(report: &GapReport, provenance: Option<&Provenance>) -> Result<Vec<u8>> {
    #[derive(Serialize)]
    struct Out<'a> {
        #[serde(flatten)]
        report: &'a GapReport,
        #[serde(skip_serializing_if = "Option::is_none")]
        config: Option<&'a Provenance>,
    }
    let mut json = serde_json::to_vec_pretty(&Out {
        report,
        config: provenance,
    })?;
    json.push(b'\n');
    Ok(json)
}

pub fn write_gap_json(report: &GapReport, path: &Path, provenance: Option<&Provenance>) -> Result<()> {
    let json = gap_json(report, provenance)?;
    fs::write(path, json).map_err(|e| Error::io(path, e))
}
