//! Seeded Gaussian-mixture scenarios.
//!
//! Class centers sit at exact mutual distance `inter_sep`: scaled standard
//! basis vertices when `d >= K`, and the centered (Helmert) simplex when
//! `d == K - 1`. Samples are isotropic Gaussians around their center,
//! rounded through `f32` so a saved scenario reloads bit-exactly.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::Rng as _;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::dataset::{ClassCatalog, Dataset, EmbeddingMatrix, SampleRecord, Split};
use crate::error::{Error, Result};
use crate::rng::{split_seed, stream_rng, Rng, Stream};
use crate::scalar::Scalar;

/// Offset magnitude of an outlier shift, in units of `inter_sep`.
pub const OUTLIER_SHIFT_FACTOR: f64 = 3.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CorruptMode {
    LabelFlip,
    OutlierShift,
}

impl fmt::Display for CorruptMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CorruptMode::LabelFlip => "label_flip",
            CorruptMode::OutlierShift => "outlier_shift",
        })
    }
}

impl FromStr for CorruptMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "label_flip" => Ok(CorruptMode::LabelFlip),
            "outlier_shift" => Ok(CorruptMode::OutlierShift),
            _ => Err(Error::param(format!(
                "unknown corrupt mode {s:?} (label_flip, outlier_shift)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Preset {
    RealLike,
    IeLike,
    BasicLike,
}

impl Preset {
    pub const ALL: [Preset; 3] = [Preset::RealLike, Preset::IeLike, Preset::BasicLike];

    /// `(intra_std, inter_sep)`.
    pub fn geometry(self) -> (f64, f64) {
        match self {
            Preset::RealLike => (2.0, 4.0),
            Preset::IeLike => (1.2, 5.0),
            Preset::BasicLike => (0.5, 6.0),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Preset::RealLike => "real-like",
            Preset::IeLike => "ie-like",
            Preset::BasicLike => "basic-like",
        }
    }
}

impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Preset::ALL
            .into_iter()
            .find(|p| p.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| {
                Error::param(format!("unknown preset {s:?} (real-like, ie-like, basic-like)"))
            })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub k: usize,
    pub d: usize,
    pub n_per_class: usize,
    pub intra_std: f64,
    pub inter_sep: f64,
    pub corrupt_fraction: f64,
    pub corrupt_mode: CorruptMode,
    pub seed: u64,
    /// Split tag given to every generated sample.
    pub split: Split,
}

impl ScenarioSpec {
    pub fn preset(preset: Preset, seed: u64) -> Self {
        let (intra_std, inter_sep) = preset.geometry();
        Self {
            k: 10,
            d: 16,
            n_per_class: 100,
            intra_std,
            inter_sep,
            corrupt_fraction: 0.0,
            corrupt_mode: CorruptMode::OutlierShift,
            seed,
            split: Split::Synthetic,
        }
    }

    pub fn with_split(mut self, split: Split) -> Self {
        self.split = split;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.k < 2 {
            return Err(Error::param(format!("need at least 2 classes, got {}", self.k)));
        }
        if self.d + 1 < self.k {
            return Err(Error::param(format!(
                "d = {} < K - 1 = {}: the simplex does not fit",
                self.d,
                self.k - 1
            )));
        }
        if self.n_per_class == 0 {
            return Err(Error::param("n_per_class must be >= 1"));
        }
        if !(self.intra_std > 0.0 && self.intra_std.is_finite()) {
            return Err(Error::param(format!("intra_std must be > 0, got {}", self.intra_std)));
        }
        if !(self.inter_sep > 0.0 && self.inter_sep.is_finite()) {
            return Err(Error::param(format!("inter_sep must be > 0, got {}", self.inter_sep)));
        }
        if !(0.0..1.0).contains(&self.corrupt_fraction) {
            return Err(Error::param(format!(
                "corrupt fraction must lie in [0,1), got {}",
                self.corrupt_fraction
            )));
        }
        Ok(())
    }
}

/// `K` centers with pairwise distance exactly `sep`.
pub fn simplex_centers(k: usize, d: usize, sep: f64) -> Result<Vec<Vec<f64>>> {
    if k < 2 || d + 1 < k {
        return Err(Error::param(format!("cannot place {k} simplex vertices in {d} dimensions")));
    }
    let a = sep / std::f64::consts::SQRT_2;
    let mut centers = vec![vec![0.0; d]; k];
    if d >= k {
        for (i, c) in centers.iter_mut().enumerate() {
            c[i] = a;
        }
    } else {
        // coordinates of a·(e_i − 1/K) in the Helmert basis of the sum-zero plane
        for j in 1..k {
            let norm = ((j * (j + 1)) as f64).sqrt();
            for (i, c) in centers.iter_mut().enumerate() {
                let h = match i.cmp(&j) {
                    std::cmp::Ordering::Less => 1.0,
                    std::cmp::Ordering::Equal => -(j as f64),
                    std::cmp::Ordering::Greater => 0.0,
                };
                c[j - 1] = a * h / norm;
            }
        }
    }
    Ok(centers)
}

fn id_prefix(split: Split) -> &'static str {
    match split {
        Split::Synthetic => "syn",
        Split::RealTrain => "rtr",
        Split::RealTest => "rte",
    }
}

fn round_f32<F: Scalar>(v: f64) -> F {
    F::from_f32_exact(v as f32)
}

fn unit_gaussian(rng: &mut Rng, d: usize) -> Vec<f64> {
    loop {
        let u: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
        let n = u.iter().map(|v| v * v).sum::<f64>().sqrt();
        if n > 1e-12 {
            return u.into_iter().map(|v| v / n).collect();
        }
    }
}

pub fn make_mixture<F: Scalar>(spec: &ScenarioSpec) -> Result<Dataset<F>> {
    spec.validate()?;
    let centers = simplex_centers(spec.k, spec.d, spec.inter_sep)?;
    // each split gets its own noise so paired train/test draws stay independent
    let mut rng = stream_rng(split_seed(spec.seed, spec.split as u64), Stream::MixtureNoise);
    let n = spec.k * spec.n_per_class;
    let mut values = Vec::with_capacity(n * spec.d);
    let mut samples = Vec::with_capacity(n);
    let prefix = id_prefix(spec.split);
    for (label, c) in centers.iter().enumerate() {
        for _ in 0..spec.n_per_class {
            let row = samples.len();
            for &mu in c {
                let z: f64 = rng.sample(StandardNormal);
                values.push(round_f32::<F>(mu + spec.intra_std * z));
            }
            samples.push(SampleRecord::new(format!("{prefix}-{row:05}"), label, spec.split, row));
        }
    }
    let text: Vec<Vec<F>> = centers
        .iter()
        .map(|c| {
            let norm = c.iter().map(|v| v * v).sum::<f64>().sqrt();
            c.iter().map(|v| round_f32::<F>(v / norm)).collect()
        })
        .collect();
    Dataset::new(
        ClassCatalog::numbered(spec.k)?,
        samples,
        EmbeddingMatrix::new(n, spec.d, values)?,
        Some(EmbeddingMatrix::from_rows(&text)?),
    )
}

#[derive(Debug, Clone)]
pub struct Corrupted<F> {
    pub dataset: Dataset<F>,
    /// Altered sample ids, in dataset order.
    pub corrupted_ids: Vec<String>,
}

/// Number of synthetic samples `corrupt` alters.
pub fn corrupt_count(n_synthetic: usize, fraction: f64) -> usize {
    (fraction * n_synthetic as f64 + 1e-9).floor() as usize
}

pub fn corrupt<F: Scalar>(dataset: &Dataset<F>, spec: &ScenarioSpec) -> Result<Corrupted<F>> {
    let synthetic = dataset.indices_in(Split::Synthetic);
    if synthetic.is_empty() {
        return Err(Error::NoSyntheticSamples);
    }
    if !(0.0..1.0).contains(&spec.corrupt_fraction) {
        return Err(Error::param(format!(
            "corrupt fraction must lie in [0,1), got {}",
            spec.corrupt_fraction
        )));
    }
    let m = corrupt_count(synthetic.len(), spec.corrupt_fraction);
    if spec.corrupt_fraction > 0.0 && m == 0 {
        return Err(Error::param(format!(
            "corrupt fraction {} selects no sample out of {}",
            spec.corrupt_fraction,
            synthetic.len()
        )));
    }
    if m == 0 {
        return Ok(Corrupted {
            dataset: dataset.clone(),
            corrupted_ids: Vec::new(),
        });
    }

    let mut rng = stream_rng(spec.seed, Stream::Corruption);
    let mut picked: Vec<usize> = rand::seq::index::sample(&mut rng, synthetic.len(), m)
        .into_iter()
        .map(|i| synthetic[i])
        .collect();
    picked.sort_unstable();
    let corrupted_ids = picked.iter().map(|&i| dataset.samples()[i].id.clone()).collect();

    let out = match spec.corrupt_mode {
        CorruptMode::LabelFlip => {
            let k = dataset.num_classes();
            let mut labels: Vec<usize> = dataset.samples().iter().map(|s| s.label).collect();
            for &i in &picked {
                let r = rng.random_range(0..k - 1);
                labels[i] = if r >= labels[i] { r + 1 } else { r };
            }
            dataset.relabeled(&labels)?
        }
        CorruptMode::OutlierShift => {
            let d = dataset.dim();
            let mag = OUTLIER_SHIFT_FACTOR * spec.inter_sep;
            let mut values = dataset.embeddings().values().to_vec();
            for &i in &picked {
                let u = unit_gaussian(&mut rng, d);
                let row = &mut values[i * d..(i + 1) * d];
                for (x, du) in row.iter_mut().zip(&u) {
                    *x = round_f32::<F>(x.as_f64() + mag * du);
                }
            }
            dataset.with_embeddings(EmbeddingMatrix::new(dataset.len(), d, values)?)?
        }
    };
    Ok(Corrupted {
        dataset: out,
        corrupted_ids,
    })
}

pub fn write_corruption_sidecar(ids: &[String], path: &Path) -> Result<()> {
    let mut json = serde_json::to_vec_pretty(ids)?;
    json.push(b'\n');
    std::fs::write(path, json).map_err(|e| Error::io(path, e))
}

pub fn read_corruption_sidecar(path: &Path) -> Result<Vec<String>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scalar::sq_dist;
    use crate::uncertainty::{score_dataset, DEFAULT_LOGIT_SCALE, DEFAULT_W};

    fn spec(k: usize, d: usize, n: usize) -> ScenarioSpec {
        ScenarioSpec {
            k,
            d,
            n_per_class: n,
            ..ScenarioSpec::preset(Preset::IeLike, 4)
        }
    }

    #[test]
    fn counts() {
        let ds: Dataset<f64> = make_mixture(&spec(3, 8, 100)).unwrap();
        assert_eq!(ds.len(), 300);
        assert_eq!(ds.num_classes(), 3);
        assert_eq!(ds.class_counts(), vec![100, 100, 100]);
        assert_eq!(ds.count_in(Split::Synthetic), 300);
    }

    #[test]
    fn centers_are_equidistant() {
        for (k, d) in [(3, 8), (10, 16), (10, 10), (5, 4), (2, 1)] {
            let c = simplex_centers(k, d, 5.0).unwrap();
            for i in 0..k {
                for j in 0..i {
                    assert!((sq_dist(&c[i], &c[j]).sqrt() - 5.0).abs() < 1e-12, "{k} {d}");
                }
            }
        }
        assert!(simplex_centers(5, 3, 1.0).is_err());
        assert!(make_mixture::<f64>(&spec(5, 3, 2)).is_err());
    }

    #[test]
    fn tiny_spread_stays_on_centers() {
        let s = ScenarioSpec {
            intra_std: 1e-12,
            ..spec(4, 6, 20)
        };
        let ds: Dataset<f64> = make_mixture(&s).unwrap();
        let c = simplex_centers(4, 6, s.inter_sep).unwrap();
        for (i, rec) in ds.samples().iter().enumerate() {
            let dist = sq_dist(ds.x(i), &c[rec.label]).sqrt();
            assert!(dist <= 1e-6 * s.inter_sep, "{dist}");
        }
    }

    #[test]
    fn deterministic_and_split_dependent() {
        let s = spec(4, 6, 20);
        let a: Dataset<f32> = make_mixture(&s).unwrap();
        let b: Dataset<f32> = make_mixture(&s).unwrap();
        let bits = |d: &Dataset<f32>| -> Vec<u32> {
            d.embeddings().values().iter().map(|v| v.to_bits()).collect()
        };
        assert_eq!(bits(&a), bits(&b));
        let t: Dataset<f32> = make_mixture(&s.clone().with_split(Split::RealTest)).unwrap();
        assert_ne!(bits(&a), bits(&t));
        assert!(t.samples()[0].id.starts_with("rte-"));
        // f64 pipeline sees exactly the f32 values
        let w: Dataset<f64> = make_mixture(&s).unwrap();
        assert!(w
            .embeddings()
            .values()
            .iter()
            .zip(a.embeddings().values())
            .all(|(x, y)| *x == f64::from(*y)));
    }

    #[test]
    fn corrupt_exact_count() {
        let ds: Dataset<f64> = make_mixture(&spec(3, 8, 100)).unwrap();
        let s = ScenarioSpec {
            corrupt_fraction: 0.1,
            ..spec(3, 8, 100)
        };
        let c = corrupt(&ds, &s).unwrap();
        assert_eq!(c.corrupted_ids.len(), 30);
        let changed = (0..ds.len()).filter(|&i| ds.x(i) != c.dataset.x(i)).count();
        assert_eq!(changed, 30);
    }

    #[test]
    fn zero_fraction_is_identity() {
        let ds: Dataset<f64> = make_mixture(&spec(3, 8, 10)).unwrap();
        let c = corrupt(&ds, &spec(3, 8, 10)).unwrap();
        assert!(c.corrupted_ids.is_empty());
        assert_eq!(c.dataset.embeddings().values(), ds.embeddings().values());
        assert_eq!(c.dataset.samples(), ds.samples());
    }

    #[test]
    fn label_flip_always_changes_label() {
        let ds: Dataset<f64> = make_mixture(&spec(3, 8, 100)).unwrap();
        let s = ScenarioSpec {
            corrupt_fraction: 0.5,
            corrupt_mode: CorruptMode::LabelFlip,
            ..spec(3, 8, 100)
        };
        let c = corrupt(&ds, &s).unwrap();
        let ids: std::collections::HashSet<&str> =
            c.corrupted_ids.iter().map(String::as_str).collect();
        for (a, b) in ds.samples().iter().zip(c.dataset.samples()) {
            assert_eq!(ids.contains(a.id.as_str()), a.label != b.label);
        }
        assert_eq!(c.dataset.embeddings().values(), ds.embeddings().values());
    }

    #[test]
    fn too_small_fraction_and_no_synthetic_fail() {
        let ds: Dataset<f64> = make_mixture(&spec(2, 4, 3)).unwrap();
        let s = ScenarioSpec {
            corrupt_fraction: 0.1,
            ..spec(2, 4, 3)
        };
        assert!(corrupt(&ds, &s).is_err());
        let real: Dataset<f64> = make_mixture(&spec(2, 4, 3).with_split(Split::RealTest)).unwrap();
        assert!(matches!(corrupt(&real, &s), Err(Error::NoSyntheticSamples)));
    }

    #[test]
    fn outliers_are_more_uncertain() {
        for seed in 0..10 {
            let s = ScenarioSpec {
                corrupt_fraction: 0.2,
                ..ScenarioSpec::preset(Preset::BasicLike, seed)
            };
            let ds: Dataset<f64> = make_mixture(&s).unwrap();
            let c = corrupt(&ds, &s).unwrap();
            let report = score_dataset(&c.dataset, DEFAULT_LOGIT_SCALE, DEFAULT_W).unwrap();
            let bad: std::collections::HashSet<&str> =
                c.corrupted_ids.iter().map(String::as_str).collect();
            let (mut hb, mut nb, mut hc, mut nc) = (0.0, 0, 0.0, 0);
            for row in &report.rows {
                if bad.contains(row.id.as_str()) {
                    hb += row.entropy_raw;
                    nb += 1;
                } else {
                    hc += row.entropy_raw;
                    nc += 1;
                }
            }
            assert!(hb / nb as f64 > hc / nc as f64, "seed {seed}");
        }
    }

    #[test]
    fn sidecar_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.json");
        let ids = vec!["syn-00001".to_string(), "syn-00007".to_string()];
        write_corruption_sidecar(&ids, &p).unwrap();
        assert_eq!(read_corruption_sidecar(&p).unwrap(), ids);
    }
}
