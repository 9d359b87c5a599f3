//! CSV layout: `id,label,split,f0..f{d-1}` with an optional `classes.txt`
//! next to the file. Values are written in shortest round-trip form of
//! their f32 narrowing.

use std::collections::HashSet;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use super::{ClassCatalog, Dataset, EmbeddingMatrix, SampleRecord, Split};
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::Provenance;

pub const CLASSES_SIDECAR: &str = "classes.txt";

fn sidecar_path(path: &Path) -> PathBuf {
    path.with_file_name(CLASSES_SIDECAR)
}

pub fn write_csv<F: Scalar>(
    dataset: &Dataset<F>,
    path: &Path,
    provenance: Option<&Provenance>,
) -> Result<()> {
    if dataset.class_text().is_some() {
        return Err(Error::param(
            "CSV cannot carry class text embeddings; use the container format",
        ));
    }
    let mut buf = Vec::new();
    if let Some(p) = provenance {
        write_provenance_comment(&mut buf, p);
    }
    {
        let mut w = csv::Writer::from_writer(&mut buf);
        let mut head = vec!["id".to_string(), "label".into(), "split".into()];
        head.extend((0..dataset.dim()).map(|j| format!("f{j}")));
        w.write_record(&head)?;
        for (i, s) in dataset.samples().iter().enumerate() {
            let mut rec = vec![s.id.clone(), s.label.to_string(), s.split.to_string()];
            rec.extend(dataset.x(i).iter().map(|v| v.as_f32().to_string()));
            w.write_record(&rec)?;
        }
        w.flush().map_err(|e| Error::io(path, e))?;
    }
    fs::write(path, buf).map_err(|e| Error::io(path, e))?;

    let mut names = dataset.catalog().names().join("\n");
    names.push('\n');
    let side = sidecar_path(path);
    fs::write(&side, names).map_err(|e| Error::io(side, e))
}

pub(crate) fn write_provenance_comment(buf: &mut Vec<u8>, p: &Provenance) {
    let line = p
        .iter()
        .map(|(k, v)| format!("{k}={v}"))
        .collect::<Vec<_>>()
        .join(" ");
    let _ = writeln!(buf, "# {line}");
}

pub fn read_csv<F: Scalar>(path: &Path) -> Result<Dataset<F>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_reader(text.as_bytes());
    let headers = reader.headers()?.clone();
    if headers.len() < 4 || &headers[0] != "id" || &headers[1] != "label" || &headers[2] != "split"
    {
        return Err(Error::Format(
            "CSV header must be id,label,split,f0..f{d-1}".into(),
        ));
    }
    let d = headers.len() - 3;
    for (j, h) in headers.iter().skip(3).enumerate() {
        if h != format!("f{j}") {
            return Err(Error::Format(format!("column {} should be f{j}, got {h}", j + 3)));
        }
    }

    let side = sidecar_path(path);
    let catalog_names: Option<Vec<String>> = if side.exists() {
        let names = fs::read_to_string(&side).map_err(|e| Error::io(&side, e))?;
        Some(
            names
                .lines()
                .map(str::trim)
                .filter(|l| !l.is_empty())
                .map(String::from)
                .collect(),
        )
    } else {
        None
    };
    let k_known = catalog_names.as_ref().map(Vec::len);

    let mut records = Vec::new();
    let mut values: Vec<F> = Vec::new();
    let mut seen = HashSet::new();
    let mut max_label = 0;
    for row in reader.records() {
        let row = row?;
        let id = row.get(0).unwrap_or_default().to_string();
        if row.len() != d + 3 {
            return Err(Error::DimensionMismatch(format!(
                "record {id} has {} features, header declares {d}",
                row.len().saturating_sub(3)
            )));
        }
        let label: usize = row[1]
            .trim()
            .parse()
            .map_err(|_| Error::Format(format!("record {id}: bad label {:?}", &row[1])))?;
        if k_known.is_some_and(|k| label >= k) {
            return Err(Error::UnknownClass { record: id, label });
        }
        let split: Split = row[2].trim().parse().map_err(|tag| Error::UnknownSplit {
            record: id.clone(),
            tag,
        })?;
        for field in row.iter().skip(3) {
            let v: f32 = field
                .trim()
                .parse()
                .map_err(|_| Error::Format(format!("record {id}: bad value {field:?}")))?;
            if !v.is_finite() {
                return Err(Error::NonFinite { record: id });
            }
            values.push(F::from_f32_exact(v));
        }
        if !seen.insert(id.clone()) {
            return Err(Error::DuplicateId(id));
        }
        max_label = max_label.max(label);
        let r = records.len();
        records.push(SampleRecord::new(id, label, split, r));
    }
    if records.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let catalog = match catalog_names {
        Some(names) => ClassCatalog::new(names)?,
        None => ClassCatalog::numbered((max_label + 1).max(2))?,
    };
    let m = EmbeddingMatrix::new(records.len(), d, values)?;
    Dataset::new(catalog, records, m, None)
}
