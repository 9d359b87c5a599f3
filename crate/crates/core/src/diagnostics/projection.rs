//! PCA projection for 2-D inspection of embedding sets, with CSV and SVG
//! scatter export.

use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::Path;

use nalgebra::{DMatrix, SymmetricEigen};

use crate::dataset::{Dataset, EmbeddingMatrix};
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::Provenance;

#[derive(Debug, Clone, PartialEq)]
pub struct Projection<F> {
    pub out_dim: usize,
    /// `n × out_dim`, row-major.
    pub coords: Vec<F>,
    /// Fraction of total variance per axis, non-increasing.
    pub explained: Vec<F>,
    /// Unit principal axes, one per output dimension.
    pub axes: Vec<Vec<F>>,
}

impl<F: Scalar> Projection<F> {
    pub fn point(&self, i: usize) -> &[F] {
        &self.coords[i * self.out_dim..(i + 1) * self.out_dim]
    }
}

/// Projects mean-centred rows onto the top `out_dim` principal axes. Each
/// axis is signed so that its largest-magnitude loading is positive.
pub fn pca_project<F: Scalar>(m: &EmbeddingMatrix<F>, out_dim: usize) -> Result<Projection<F>> {
    let (n, d) = (m.n(), m.d());
    if n <= 2 || d < 2 {
        return Err(Error::param(format!("PCA needs n > 2 and d >= 2, got n={n}, d={d}")));
    }
    if out_dim == 0 || out_dim > d {
        return Err(Error::param(format!("out_dim must lie in 1..={d}, got {out_dim}")));
    }
    let x = DMatrix::from_row_iterator(n, d, m.values().iter().map(|v| v.as_f64()));
    let mean = x.row_mean();
    let mut centred = x;
    for mut row in centred.row_iter_mut() {
        row -= &mean;
    }
    let cov = centred.transpose() * &centred / (n - 1) as f64;
    let eig = SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| {
        eig.eigenvalues[b]
            .partial_cmp(&eig.eigenvalues[a])
            .expect("finite eigenvalues")
            .then(a.cmp(&b))
    });
    let values: Vec<f64> = eig.eigenvalues.iter().map(|&l| l.max(0.0)).collect();
    let total: f64 = values.iter().sum();
    if !(total > 0.0) {
        return Err(Error::RankZero);
    }

    let mut axes = Vec::with_capacity(out_dim);
    let mut explained = Vec::with_capacity(out_dim);
    for &j in order.iter().take(out_dim) {
        let mut v: Vec<f64> = eig.eigenvectors.column(j).iter().copied().collect();
        let pivot = v
            .iter()
            .enumerate()
            .fold((0, 0.0f64), |best, (i, &c)| {
                if c.abs() > best.1.abs() {
                    (i, c)
                } else {
                    best
                }
            })
            .1;
        if pivot < 0.0 {
            v.iter_mut().for_each(|c| *c = -*c);
        }
        axes.push(v);
        explained.push(values[j] / total);
    }

    let mut coords = Vec::with_capacity(n * out_dim);
    for row in centred.row_iter() {
        for axis in &axes {
            let s: f64 = row.iter().zip(axis).map(|(a, b)| a * b).sum();
            coords.push(F::of(s));
        }
    }
    Ok(Projection {
        out_dim,
        coords,
        explained: explained.into_iter().map(F::of).collect(),
        axes: axes
            .into_iter()
            .map(|a| a.into_iter().map(F::of).collect())
            .collect(),
    })
}

/// `id,label,x,y` rows in dataset order.
pub fn write_projection_csv<F: Scalar>(
    dataset: &Dataset<F>,
    proj: &Projection<F>,
    path: &Path,
    provenance: Option<&Provenance>,
) -> Result<()> {
    let mut buf = Vec::new();
    if let Some(p) = provenance {
        crate::dataset::write_provenance(&mut buf, p);
    }
    writeln!(buf, "id,label,x,y").expect("vec write");
    {
        let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(&mut buf);
        for (i, s) in dataset.samples().iter().enumerate() {
            let p = proj.point(i);
            let y = p.get(1).copied().unwrap_or_else(F::zero);
            w.write_record([
                s.id.clone(),
                s.label.to_string(),
                p[0].as_f64().to_string(),
                y.as_f64().to_string(),
            ])?;
        }
        w.flush().map_err(|e| Error::io(path, e))?;
    }
    fs::write(path, buf).map_err(|e| Error::io(path, e))
}

const PALETTE: [&str; 10] = [
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f",
    "#bcbd22", "#17becf",
];

fn class_color(c: usize) -> String {
    if c < PALETTE.len() {
        return PALETTE[c].to_string();
    }
    // golden-angle hues past the fixed palette
    let hue = (c as f64 * 137.508) % 360.0;
    format!("hsl({hue:.1},65%,45%)")
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Scatter of the first two projected coordinates, one colour per class,
/// with a legend built from the class catalog.
pub fn write_scatter_svg<F: Scalar>(
    dataset: &Dataset<F>,
    proj: &Projection<F>,
    path: &Path,
) -> Result<()> {
    if proj.out_dim < 2 {
        return Err(Error::param("scatter export needs a 2-D projection"));
    }
    let (w, h, margin, legend_w) = (640.0, 480.0, 30.0, 160.0);
    let pts: Vec<(f64, f64)> = (0..dataset.len())
        .map(|i| (proj.point(i)[0].as_f64(), proj.point(i)[1].as_f64()))
        .collect();
    let (mut x0, mut x1, mut y0, mut y1) = (f64::MAX, f64::MIN, f64::MAX, f64::MIN);
    for &(x, y) in &pts {
        x0 = x0.min(x);
        x1 = x1.max(x);
        y0 = y0.min(y);
        y1 = y1.max(y);
    }
    let sx = if x1 > x0 { (w - 2.0 * margin) / (x1 - x0) } else { 1.0 };
    let sy = if y1 > y0 { (h - 2.0 * margin) / (y1 - y0) } else { 1.0 };

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{}" height="{h}" viewBox="0 0 {} {h}">"#,
        w + legend_w,
        w + legend_w
    );
    let _ = writeln!(svg, r#"<rect width="100%" height="100%" fill="white"/>"#);
    for (s, &(x, y)) in dataset.samples().iter().zip(&pts) {
        let cx = margin + (x - x0) * sx;
        let cy = h - margin - (y - y0) * sy;
        let _ = writeln!(
            svg,
            r#"<circle cx="{cx:.2}" cy="{cy:.2}" r="2.5" fill="{}" fill-opacity="0.75"/>"#,
            class_color(s.label)
        );
    }
    for (c, name) in dataset.catalog().names().iter().enumerate() {
        let y = margin + 16.0 * c as f64;
        let _ = writeln!(
            svg,
            r#"<rect x="{}" y="{:.1}" width="10" height="10" fill="{}"/><text x="{}" y="{:.1}" font-size="11" font-family="sans-serif">{}</text>"#,
            w + 10.0,
            y,
            class_color(c),
            w + 26.0,
            y + 9.0,
            escape(name)
        );
    }
    svg.push_str("</svg>\n");
    fs::write(path, svg).map_err(|e| Error::io(path, e))
}
