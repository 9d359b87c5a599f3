//! Similarity-entropy uncertainty for synthetic samples.
//!
//! A sample's similarity profile is the softmax of its scaled cosine
//! similarities to every class text embedding. Its entropy (nats) is
//! min-max normalized over the synthetic split, and the per-sample
//! smoothing strength is `epsilon = w * entropy_norm`.

use std::fs;
use std::io::Write;
use std::path::Path;

use rayon::prelude::*;

use crate::dataset::{Dataset, Split};
use crate::error::{Error, Result};
use crate::scalar::{dot, norm, softmax, Scalar};
use crate::Provenance;

pub const DEFAULT_LOGIT_SCALE: f64 = 100.0;
pub const DEFAULT_W: f64 = 0.3;
/// Allowed deviation from unit norm for inputs to [`similarity_profile`].
pub const NORM_INPUT_TOL: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityProfile<F> {
    pub probs: Vec<F>,
    pub logit_scale: F,
}

pub fn similarity_profile<F: Scalar>(
    sample: &[F],
    class_text: &[&[F]],
    logit_scale: F,
) -> Result<SimilarityProfile<F>> {
    if class_text.len() < 2 {
        return Err(Error::param(format!(
            "need at least 2 classes, got {}",
            class_text.len()
        )));
    }
    if !(logit_scale > F::zero()) || !logit_scale.is_finite() {
        return Err(Error::param(format!("logit_scale must be > 0, got {logit_scale}")));
    }
    check_unit(sample, "sample")?;
    let mut logits = Vec::with_capacity(class_text.len());
    for (j, t) in class_text.iter().enumerate() {
        if t.len() != sample.len() {
            return Err(Error::DimensionMismatch(format!(
                "class {j} text has d={}, sample has d={}",
                t.len(),
                sample.len()
            )));
        }
        check_unit(t, &format!("class {j} text embedding"))?;
        logits.push(logit_scale * dot(sample, t));
    }
    Ok(SimilarityProfile {
        probs: softmax(&logits),
        logit_scale,
    })
}

fn check_unit<F: Scalar>(v: &[F], what: &str) -> Result<()> {
    let r = norm(v).as_f64();
    if (r - 1.0).abs() > NORM_INPUT_TOL {
        return Err(Error::NotNormalized {
            what: what.to_string(),
            norm: r,
        });
    }
    Ok(())
}

/// `-Σ p ln p` in nats, with `0 ln 0 = 0`.
pub fn entropy<F: Scalar>(profile: &SimilarityProfile<F>) -> F {
    entropy_of(&profile.probs)
}

pub fn entropy_of<F: Scalar>(probs: &[F]) -> F {
    let h = probs
        .iter()
        .filter(|&&p| p > F::zero())
        .fold(F::zero(), |acc, &p| acc - p * p.ln());
    h.max(F::zero())
}

/// Min-max normalization; a constant vector maps to all zeros.
pub fn normalize_uncertainties<F: Scalar>(entropies: &[F]) -> Vec<F> {
    let (lo, hi) = entropies
        .iter()
        .fold((F::infinity(), F::neg_infinity()), |(lo, hi), &h| {
            (lo.min(h), hi.max(h))
        });
    let span = hi - lo;
    if !(span > F::zero()) {
        return vec![F::zero(); entropies.len()];
    }
    entropies.iter().map(|&h| (h - lo) / span).collect()
}

/// `w` must keep the smoothed target's argmax on the hard label.
pub fn check_w<F: Scalar>(w: F, k: usize) -> Result<()> {
    let bound = F::count(k - 1) / F::count(k);
    if !(w > F::zero() && w < bound) {
        return Err(Error::param(format!(
            "w must lie in (0, {:.6}) for K={k}, got {w}",
            bound.as_f64()
        )));
    }
    Ok(())
}

pub fn epsilon_of<F: Scalar>(entropy_norm: F, w: F, k: usize) -> Result<F> {
    check_w(w, k)?;
    if !(entropy_norm >= F::zero() && entropy_norm <= F::one()) {
        return Err(Error::param(format!(
            "normalized entropy must lie in [0,1], got {entropy_norm}"
        )));
    }
    Ok(w * entropy_norm)
}

#[derive(Debug, Clone, PartialEq)]
pub struct UncertaintyRow<F> {
    pub id: String,
    pub entropy_raw: F,
    pub entropy_norm: F,
    pub epsilon: F,
}

#[derive(Debug, Clone, PartialEq)]
pub struct UncertaintyReport<F> {
    pub w: F,
    pub rows: Vec<UncertaintyRow<F>>,
}

impl<F: Scalar> UncertaintyReport<F> {
    pub fn get(&self, id: &str) -> Option<&UncertaintyRow<F>> {
        self.rows.iter().find(|r| r.id == id)
    }

    pub fn by_id(&self) -> std::collections::HashMap<&str, &UncertaintyRow<F>> {
        self.rows.iter().map(|r| (r.id.as_str(), r)).collect()
    }
}

/// Scores every synthetic sample. Sample rows are L2-normalized on the fly;
/// class text embeddings must already be unit vectors.
pub fn score_dataset<F: Scalar>(
    dataset: &Dataset<F>,
    logit_scale: F,
    w: F,
) -> Result<UncertaintyReport<F>> {
    let k = dataset.num_classes();
    check_w(w, k)?;
    let text = dataset.class_text().ok_or(Error::MissingClassText)?;
    let synthetic = dataset.indices_in(Split::Synthetic);
    if synthetic.is_empty() {
        return Err(Error::NoSyntheticSamples);
    }
    let text_rows: Vec<&[F]> = text.rows().collect();

    let raw: Vec<F> = synthetic
        .par_iter()
        .map(|&i| {
            let x = dataset.x(i);
            let r = norm(x);
            if r == F::zero() {
                return Err(Error::ZeroRow(dataset.samples()[i].row));
            }
            let unit: Vec<F> = x.iter().map(|&v| v / r).collect();
            let profile = similarity_profile(&unit, &text_rows, logit_scale)?;
            Ok(entropy(&profile))
        })
        .collect::<Result<_>>()?;

    let normed = normalize_uncertainties(&raw);
    let rows = synthetic
        .iter()
        .zip(raw.iter().zip(&normed))
        .map(|(&i, (&h, &hn))| UncertaintyRow {
            id: dataset.samples()[i].id.clone(),
            entropy_raw: h,
            entropy_norm: hn,
            epsilon: w * hn,
        })
        .collect();
    Ok(UncertaintyReport { w, rows })
}

/// Formats with 9 significant digits; scientific outside `[1e-4, 1e15)`.
pub(crate) fn sig9(v: f64) -> String {
    if v == 0.0 || !v.is_finite() {
        return v.to_string();
    }
    let r: f64 = format!("{v:.8e}").parse().unwrap_or(v);
    if (1e-4..1e15).contains(&r.abs()) {
        r.to_string()
    } else {
        format!("{r:e}")
    }
}

pub fn write_report_csv<F: Scalar>(
    report: &UncertaintyReport<F>,
    path: &Path,
    provenance: Option<&Provenance>,
) -> Result<()> {
    let mut buf = Vec::new();
    if let Some(p) = provenance {
        crate::dataset::write_provenance(&mut buf, p);
    }
    writeln!(buf, "id,entropy_raw,entropy_norm,epsilon").expect("vec write");
    {
        let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(&mut buf);
        for r in &report.rows {
            w.write_record([
                r.id.clone(),
                sig9(r.entropy_raw.as_f64()),
                sig9(r.entropy_norm.as_f64()),
                sig9(r.epsilon.as_f64()),
            ])?;
        }
        w.flush().map_err(|e| Error::io(path, e))?;
    }
    fs::write(path, buf).map_err(|e| Error::io(path, e))
}

/// Reads a report CSV. `w` is recovered as the largest epsilon/entropy_norm
/// ratio and falls back to `w_hint` when every normalized entropy is zero.
pub fn read_report_csv<F: Scalar>(path: &Path, w_hint: F) -> Result<UncertaintyReport<F>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_reader(text.as_bytes());
    let headers = reader.headers()?.clone();
    if headers.iter().collect::<Vec<_>>() != ["id", "entropy_raw", "entropy_norm", "epsilon"] {
        return Err(Error::Format(
            "uncertainty CSV header must be id,entropy_raw,entropy_norm,epsilon".into(),
        ));
    }
    let mut rows = Vec::new();
    let mut w = None;
    for rec in reader.records() {
        let rec = rec?;
        let num = |j: usize| -> Result<F> {
            rec[j]
                .parse::<f64>()
                .map(F::of)
                .map_err(|_| Error::Format(format!("record {}: bad number {:?}", &rec[0], &rec[j])))
        };
        let row = UncertaintyRow {
            id: rec[0].to_string(),
            entropy_raw: num(1)?,
            entropy_norm: num(2)?,
            epsilon: num(3)?,
        };
        if row.entropy_norm > F::zero() && w.is_none() {
            w = Some(row.epsilon / row.entropy_norm);
        }
        rows.push(row);
    }
    Ok(UncertaintyReport {
        w: w.unwrap_or(w_hint),
        rows,
    })
}
