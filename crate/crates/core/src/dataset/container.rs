//! Binary container: magic line, u64-LE length-prefixed JSON header, then
//! little-endian f32 payload.

use std::collections::HashSet;
use std::fs;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use super::{ClassCatalog, Dataset, EmbeddingMatrix, SampleRecord, Split};
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::Provenance;

pub const DATASET_MAGIC: &[u8] = b"SYCU1\n";

#[derive(Serialize, Deserialize)]
struct Header {
    n: usize,
    d: usize,
    class_names: Vec<String>,
    samples: Vec<HeaderSample>,
    has_class_text: bool,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    normalized: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    provenance: Option<Provenance>,
}

#[derive(Serialize, Deserialize)]
struct HeaderSample {
    id: String,
    label: usize,
    split: String,
}

/// Writes `magic`, the JSON header, and the payload as f32 LE.
pub(crate) fn write_framed<H: Serialize>(
    path: &Path,
    magic: &[u8],
    header: &H,
    payload: impl Iterator<Item = f32>,
) -> Result<()> {
    let json = serde_json::to_vec(header)?;
    let mut buf = Vec::with_capacity(magic.len() + 8 + json.len());
    buf.extend_from_slice(magic);
    buf.extend_from_slice(&(json.len() as u64).to_le_bytes());
    buf.extend_from_slice(&json);
    for v in payload {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    fs::write(path, buf).map_err(|e| Error::io(path, e))
}

/// Splits a framed file into its decoded header and the raw f32 payload.
pub(crate) fn read_framed<H: DeserializeOwned>(path: &Path, magic: &[u8]) -> Result<(H, Vec<f32>)> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let rest = bytes
        .strip_prefix(magic)
        .ok_or_else(|| Error::Format(format!("{} lacks the expected magic bytes", path.display())))?;
    if rest.len() < 8 {
        return Err(Error::Format("truncated header length".into()));
    }
    let (len_bytes, rest) = rest.split_at(8);
    let len = u64::from_le_bytes(len_bytes.try_into().expect("8 bytes")) as usize;
    if rest.len() < len {
        return Err(Error::Format("truncated header".into()));
    }
    let (json, payload) = rest.split_at(len);
    let header: H = serde_json::from_slice(json)?;
    if payload.len() % 4 != 0 {
        return Err(Error::DimensionMismatch(format!(
            "payload of {} bytes is not a whole number of f32 values",
            payload.len()
        )));
    }
    let values = payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
        .collect();
    Ok((header, values))
}

pub fn write_container<F: Scalar>(
    dataset: &Dataset<F>,
    path: &Path,
    provenance: Option<&Provenance>,
) -> Result<()> {
    let header = Header {
        n: dataset.len(),
        d: dataset.dim(),
        class_names: dataset.catalog().names().to_vec(),
        samples: dataset
            .samples()
            .iter()
            .map(|s| HeaderSample {
                id: s.id.clone(),
                label: s.label,
                split: s.split.to_string(),
            })
            .collect(),
        has_class_text: dataset.class_text().is_some(),
        normalized: dataset.embeddings().is_normalized(),
        provenance: provenance.cloned(),
    };
    let rows = (0..dataset.len()).flat_map(|i| dataset.x(i).iter().map(|v| v.as_f32()));
    let text = dataset
        .class_text()
        .into_iter()
        .flat_map(|t| t.values().iter().map(|v| v.as_f32()));
    write_framed(path, DATASET_MAGIC, &header, rows.chain(text))
}

pub fn read_container<F: Scalar>(path: &Path) -> Result<Dataset<F>> {
    let (header, payload): (Header, Vec<f32>) = read_framed(path, DATASET_MAGIC)?;
    let Header {
        n,
        d,
        class_names,
        samples,
        has_class_text,
        normalized,
        ..
    } = header;
    let k = class_names.len();
    let expected = n * d + if has_class_text { k * d } else { 0 };
    if payload.len() != expected || samples.len() != n {
        return Err(Error::DimensionMismatch(format!(
            "header declares n={n}, d={d} ({} records) but payload holds {} values, expected {expected}",
            samples.len(),
            payload.len()
        )));
    }
    let catalog = ClassCatalog::new(class_names)?;
    let records = validate_records(samples, k, &payload, d)?;

    let widen = |v: &[f32]| v.iter().map(|&x| F::from_f32_exact(x)).collect::<Vec<F>>();
    let mut embeddings = EmbeddingMatrix::new(n, d, widen(&payload[..n * d]))?;
    if normalized {
        embeddings = embeddings.into_normalized()?;
    }
    let class_text = if has_class_text {
        let t = &payload[n * d..];
        if let Some(pos) = t.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                record: format!("class text row {}", pos / d),
            });
        }
        Some(EmbeddingMatrix::new(k, d, widen(t))?)
    } else {
        None
    };
    Dataset::new(catalog, records, embeddings, class_text)
}

/// Checks records in file order so the first offending one is reported.
fn validate_records(
    samples: Vec<HeaderSample>,
    k: usize,
    rows: &[f32],
    d: usize,
) -> Result<Vec<SampleRecord>> {
    let mut seen = HashSet::with_capacity(samples.len());
    let mut out = Vec::with_capacity(samples.len());
    for (i, s) in samples.into_iter().enumerate() {
        if s.label >= k {
            return Err(Error::UnknownClass {
                record: s.id,
                label: s.label,
            });
        }
        let split: Split = s.split.parse().map_err(|tag| Error::UnknownSplit {
            record: s.id.clone(),
            tag,
        })?;
        if rows[i * d..(i + 1) * d].iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite { record: s.id });
        }
        if !seen.insert(s.id.clone()) {
            return Err(Error::DuplicateId(s.id));
        }
        out.push(SampleRecord::new(s.id, s.label, split, i));
    }
    Ok(out)
}
