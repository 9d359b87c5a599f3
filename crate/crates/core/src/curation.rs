//! Per-sample training directives derived from uncertainty reports.
//!
//! Strategies:
//! - `None`: one-hot targets, unit weights, everything kept.
//! - `Ls`: one fixed smoothing strength for every synthetic sample.
//! - `Uw`: one-hot targets, loss weight `1 - entropy_norm`.
//! - `Uf`: drop the most uncertain fraction of synthetic samples.
//! - `Ul`: per-sample smoothing `epsilon = w * entropy_norm`.
//!
//! Real samples always get one-hot targets with weight 1.

use std::collections::HashMap;
use std::fmt;
use std::fs;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, Split};
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::uncertainty::{sig9, UncertaintyReport, UncertaintyRow};
use crate::Provenance;

pub const DEFAULT_DROP_FRACTION: f64 = 0.2;
pub const DEFAULT_LS_EPSILON: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Strategy {
    #[serde(rename = "NONE")]
    None,
    #[serde(rename = "LS")]
    Ls,
    #[serde(rename = "UW")]
    Uw,
    #[serde(rename = "UF")]
    Uf,
    #[serde(rename = "UL")]
    Ul,
}

impl Strategy {
    /// Column order used in every summary table.
    pub const ALL: [Strategy; 5] = [
        Strategy::None,
        Strategy::Ls,
        Strategy::Uw,
        Strategy::Uf,
        Strategy::Ul,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Strategy::None => "NONE",
            Strategy::Ls => "LS",
            Strategy::Uw => "UW",
            Strategy::Uf => "UF",
            Strategy::Ul => "UL",
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Strategy::ALL
            .into_iter()
            .find(|t| t.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::param(format!("unknown strategy {s:?} (NONE, LS, UW, UF, UL)")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetDistribution<F> {
    pub q: Vec<F>,
    pub hard_label: usize,
}

/// `1 - ε` on `y`, `ε / (K - 1)` elsewhere.
pub fn smooth_label<F: Scalar>(y: usize, k: usize, epsilon: F) -> Result<TargetDistribution<F>> {
    if k < 2 {
        return Err(Error::param(format!("need K >= 2, got {k}")));
    }
    if y >= k {
        return Err(Error::param(format!("label {y} outside 0..{k}")));
    }
    check_epsilon(epsilon, k)?;
    let off = epsilon / F::count(k - 1);
    let mut q = vec![off; k];
    q[y] = F::one() - epsilon;
    Ok(TargetDistribution { q, hard_label: y })
}

/// Admissible smoothing: `0 <= ε < (K-1)/K`.
pub fn check_epsilon<F: Scalar>(epsilon: F, k: usize) -> Result<()> {
    let bound = F::count(k - 1) / F::count(k);
    if !(epsilon >= F::zero() && epsilon < bound) {
        return Err(Error::param(format!(
            "epsilon must lie in [0, {:.6}) for K={k}, got {epsilon}",
            bound.as_f64()
        )));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanEntry<F> {
    pub id: String,
    pub target: TargetDistribution<F>,
    pub weight: F,
    pub keep: bool,
    pub epsilon_used: F,
}

/// One entry per dataset sample, in dataset order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurationPlan<F> {
    pub strategy: Strategy,
    pub entries: Vec<PlanEntry<F>>,
}

impl<F: Scalar> CurationPlan<F> {
    pub fn kept(&self) -> impl Iterator<Item = usize> + '_ {
        self.entries
            .iter()
            .enumerate()
            .filter(|(_, e)| e.keep)
            .map(|(i, _)| i)
    }

    pub fn kept_count(&self) -> usize {
        self.entries.iter().filter(|e| e.keep).count()
    }
}

fn entry<F: Scalar>(id: &str, y: usize, k: usize, eps: F, weight: F, keep: bool) -> Result<PlanEntry<F>> {
    Ok(PlanEntry {
        id: id.to_string(),
        target: smooth_label(y, k, eps)?,
        weight,
        keep,
        epsilon_used: eps,
    })
}

fn build<F: Scalar>(
    dataset: &Dataset<F>,
    strategy: Strategy,
    mut synthetic: impl FnMut(usize) -> Result<(F, F, bool)>,
) -> Result<CurationPlan<F>> {
    let k = dataset.num_classes();
    let entries = dataset
        .samples()
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let (eps, weight, keep) = if s.split == Split::Synthetic {
                synthetic(i)?
            } else {
                (F::zero(), F::one(), true)
            };
            entry(&s.id, s.label, k, eps, weight, keep)
        })
        .collect::<Result<Vec<_>>>()?;
    if !entries.iter().any(|e| e.keep) {
        return Err(Error::EmptySelection);
    }
    Ok(CurationPlan { strategy, entries })
}

/// One-hot targets, unit weights, everything kept.
pub fn plan_none<F: Scalar>(dataset: &Dataset<F>) -> Result<CurationPlan<F>> {
    build(dataset, Strategy::None, |_| Ok((F::zero(), F::one(), true)))
}

pub fn plan_ls<F: Scalar>(dataset: &Dataset<F>, epsilon: F) -> Result<CurationPlan<F>> {
    check_epsilon(epsilon, dataset.num_classes())?;
    build(dataset, Strategy::Ls, |_| Ok((epsilon, F::one(), true)))
}

fn report_rows<'a, F: Scalar>(
    dataset: &Dataset<F>,
    report: &'a UncertaintyReport<F>,
) -> Result<Vec<Option<&'a UncertaintyRow<F>>>> {
    let by_id: HashMap<&str, &UncertaintyRow<F>> = report.by_id();
    dataset
        .samples()
        .iter()
        .map(|s| {
            if s.split != Split::Synthetic {
                return Ok(None);
            }
            by_id
                .get(s.id.as_str())
                .copied()
                .map(Some)
                .ok_or_else(|| Error::MissingReportRow(s.id.clone()))
        })
        .collect()
}

pub fn plan_ul<F: Scalar>(
    dataset: &Dataset<F>,
    report: &UncertaintyReport<F>,
) -> Result<CurationPlan<F>> {
    let rows = report_rows(dataset, report)?;
    build(dataset, Strategy::Ul, |i| {
        let r = rows[i].expect("synthetic sample has a row");
        Ok((r.epsilon, F::one(), true))
    })
}

pub fn plan_uw<F: Scalar>(
    dataset: &Dataset<F>,
    report: &UncertaintyReport<F>,
) -> Result<CurationPlan<F>> {
    let rows = report_rows(dataset, report)?;
    build(dataset, Strategy::Uw, |i| {
        let r = rows[i].expect("synthetic sample has a row");
        let w = (F::one() - r.entropy_norm).max(F::zero()).min(F::one());
        Ok((F::zero(), w, true))
    })
}

/// Number of synthetic samples kept by [`plan_uf`]: `⌈(1 - f)·n⌉`.
pub fn uf_keep_count(n_synthetic: usize, drop_fraction: f64) -> usize {
    let raw = (1.0 - drop_fraction) * n_synthetic as f64;
    // absorb representation error such as (1 - 0.2) * 10 = 8.000000000000002
    ((raw - 1e-9).ceil().max(0.0) as usize).min(n_synthetic)
}

pub fn check_drop_fraction(drop_fraction: f64) -> Result<()> {
    if !(drop_fraction > 0.0 && drop_fraction < 1.0) {
        return Err(Error::param(format!(
            "drop fraction must lie in (0,1), got {drop_fraction}"
        )));
    }
    Ok(())
}

pub fn plan_uf<F: Scalar>(
    dataset: &Dataset<F>,
    report: &UncertaintyReport<F>,
    drop_fraction: f64,
) -> Result<CurationPlan<F>> {
    check_drop_fraction(drop_fraction)?;
    let rows = report_rows(dataset, report)?;
    let synthetic = dataset.indices_in(Split::Synthetic);
    let keep_n = uf_keep_count(synthetic.len(), drop_fraction);

    let mut order = synthetic.clone();
    order.sort_by(|&a, &b| {
        let ha = rows[a].expect("row").entropy_norm;
        let hb = rows[b].expect("row").entropy_norm;
        hb.partial_cmp(&ha)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then_with(|| dataset.samples()[a].id.cmp(&dataset.samples()[b].id))
    });
    let mut dropped = vec![false; dataset.len()];
    for &i in &order[..synthetic.len() - keep_n] {
        dropped[i] = true;
    }

    let k = dataset.num_classes();
    let mut had = vec![false; k];
    let mut kept = vec![false; k];
    for &i in &synthetic {
        let y = dataset.samples()[i].label;
        had[y] = true;
        kept[y] |= !dropped[i];
    }
    if let Some(c) = (0..k).find(|&c| had[c] && !kept[c]) {
        return Err(Error::ClassEmptied {
            index: c,
            name: dataset.catalog().name(c).unwrap_or_default().to_string(),
        });
    }
    build(dataset, Strategy::Uf, |i| Ok((F::zero(), F::one(), !dropped[i])))
}

/// Parameters needed to build any strategy's plan.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlanParams<F> {
    pub ls_epsilon: F,
    pub drop_fraction: f64,
}

impl<F: Scalar> Default for PlanParams<F> {
    fn default() -> Self {
        Self {
            ls_epsilon: F::of(DEFAULT_LS_EPSILON),
            drop_fraction: DEFAULT_DROP_FRACTION,
        }
    }
}

pub fn make_plan<F: Scalar>(
    strategy: Strategy,
    dataset: &Dataset<F>,
    report: Option<&UncertaintyReport<F>>,
    params: &PlanParams<F>,
) -> Result<CurationPlan<F>> {
    let need = || {
        report.ok_or_else(|| Error::param(format!("strategy {strategy} needs an uncertainty report")))
    };
    match strategy {
        Strategy::None => plan_none(dataset),
        Strategy::Ls => plan_ls(dataset, params.ls_epsilon),
        Strategy::Uw => plan_uw(dataset, need()?),
        Strategy::Uf => plan_uf(dataset, need()?, params.drop_fraction),
        Strategy::Ul => plan_ul(dataset, need()?),
    }
}

pub fn write_plan_csv<F: Scalar>(
    plan: &CurationPlan<F>,
    path: &Path,
    provenance: Option<&Provenance>,
) -> Result<()> {
    let mut buf = Vec::new();
    if let Some(p) = provenance {
        crate::dataset::write_provenance(&mut buf, p);
    }
    writeln!(buf, "id,keep,weight,epsilon_used,strategy").expect("vec write");
    {
        let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(&mut buf);
        for e in &plan.entries {
            w.write_record([
                e.id.clone(),
                e.keep.to_string(),
                sig9(e.weight.as_f64()),
                sig9(e.epsilon_used.as_f64()),
                plan.strategy.to_string(),
            ])?;
        }
        w.flush().map_err(|e| Error::io(path, e))?;
    }
    fs::write(path, buf).map_err(|e| Error::io(path, e))
}

/// Rebuilds a plan from its CSV export; targets are recomputed from each
/// sample's label and `epsilon_used`.
pub fn read_plan_csv<F: Scalar>(path: &Path, dataset: &Dataset<F>) -> Result<CurationPlan<F>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_reader(text.as_bytes());
    let mut by_id = HashMap::new();
    let mut strategy = None;
    for rec in reader.records() {
        let rec = rec?;
        if rec.len() != 5 {
            return Err(Error::Format("plan CSV rows need 5 fields".into()));
        }
        let bad = |what: &str| Error::Format(format!("record {}: bad {what}", &rec[0]));
        let keep: bool = rec[1].parse().map_err(|_| bad("keep"))?;
        let weight: f64 = rec[2].parse().map_err(|_| bad("weight"))?;
        let eps: f64 = rec[3].parse().map_err(|_| bad("epsilon_used"))?;
        strategy = Some(rec[4].parse::<Strategy>()?);
        by_id.insert(rec[0].to_string(), (keep, F::of(weight), F::of(eps)));
    }
    let strategy = strategy.ok_or(Error::EmptySelection)?;
    let k = dataset.num_classes();
    let entries = dataset
        .samples()
        .iter()
        .map(|s| {
            let &(keep, weight, eps) = by_id
                .get(&s.id)
                .ok_or_else(|| Error::Format(format!("plan has no row for sample {}", s.id)))?;
            entry(&s.id, s.label, k, eps, weight, keep)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(CurationPlan { strategy, entries })
}

pub fn write_plan_json<F: Scalar + Serialize>(plan: &CurationPlan<F>, path: &Path) -> Result<()> {
    let json = serde_json::to_vec_pretty(plan)?;
    fs::write(path, json).map_err(|e| Error::io(path, e))
}
