//! Linear probe on frozen embeddings, trained with weighted soft-target
//! cross-entropy and mini-batch momentum SGD.

use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::curation::{plan_none, CurationPlan};
use crate::dataset::container::{read_framed, write_framed};
use crate::dataset::{Dataset, Split};
use crate::error::{Error, Result};
use crate::rng::{stream_rng, Stream};
use crate::scalar::{dot, log_sum_exp, softmax, Scalar};
use crate::Provenance;

pub const PROBE_MAGIC: &[u8] = b"SYCUP\n";

/// Mean batch loss above `DIVERGENCE_FACTOR * ln K` counts as divergence.
pub const DIVERGENCE_FACTOR: f64 = 1e4;

/// `K × d` weights (row-major) and `K` biases.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearProbe<F> {
    k: usize,
    d: usize,
    pub w: Vec<F>,
    pub b: Vec<F>,
}

impl<F: Scalar> LinearProbe<F> {
    pub fn zeros(k: usize, d: usize) -> Self {
        Self {
            k,
            d,
            w: vec![F::zero(); k * d],
            b: vec![F::zero(); k],
        }
    }

    pub fn from_parts(k: usize, d: usize, w: Vec<F>, b: Vec<F>) -> Result<Self> {
        if w.len() != k * d || b.len() != k {
            return Err(Error::DimensionMismatch(format!(
                "probe parts {}+{} do not fit K={k}, d={d}",
                w.len(),
                b.len()
            )));
        }
        if w.iter().chain(&b).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                record: "probe parameters".into(),
            });
        }
        Ok(Self { k, d, w, b })
    }

    pub fn num_classes(&self) -> usize {
        self.k
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn weight_row(&self, class: usize) -> &[F] {
        &self.w[class * self.d..(class + 1) * self.d]
    }

    pub fn logits(&self, x: &[F]) -> Result<Vec<F>> {
        if x.len() != self.d {
            return Err(Error::DimensionMismatch(format!(
                "input has d={}, probe expects {}",
                x.len(),
                self.d
            )));
        }
        Ok((0..self.k)
            .map(|c| dot(self.weight_row(c), x) + self.b[c])
            .collect())
    }

    /// `softmax(Wx + b)`.
    pub fn forward(&self, x: &[F]) -> Result<Vec<F>> {
        Ok(softmax(&self.logits(x)?))
    }

    fn check_against(&self, dataset: &Dataset<F>) -> Result<()> {
        if self.k != dataset.num_classes() || self.d != dataset.dim() {
            return Err(Error::DimensionMismatch(format!(
                "probe is K={}, d={}; dataset is K={}, d={}",
                self.k,
                self.d,
                dataset.num_classes(),
                dataset.dim()
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig<F> {
    pub learning_rate: F,
    pub momentum: F,
    pub weight_decay: F,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
}

impl<F: Scalar> Default for TrainConfig<F> {
    fn default() -> Self {
        Self {
            learning_rate: F::of(0.1),
            momentum: F::of(0.9),
            weight_decay: F::of(1e-4),
            epochs: 30,
            batch_size: 64,
            seed: 0,
        }
    }
}

impl<F: Scalar> TrainConfig<F> {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > F::zero() && self.learning_rate.is_finite()) {
            return Err(Error::param(format!(
                "learning rate must be > 0, got {}",
                self.learning_rate
            )));
        }
        if !(self.momentum >= F::zero() && self.momentum < F::one()) {
            return Err(Error::param(format!(
                "momentum must lie in [0,1), got {}",
                self.momentum
            )));
        }
        if !(self.weight_decay >= F::zero() && self.weight_decay.is_finite()) {
            return Err(Error::param(format!(
                "weight decay must be >= 0, got {}",
                self.weight_decay
            )));
        }
        if self.epochs < 1 {
            return Err(Error::param("epochs must be >= 1"));
        }
        if self.batch_size < 1 {
            return Err(Error::param("batch size must be >= 1"));
        }
        Ok(())
    }
}

fn check_plan<F: Scalar>(dataset: &Dataset<F>, plan: &CurationPlan<F>) -> Result<()> {
    if plan.entries.len() != dataset.len() {
        return Err(Error::param(format!(
            "plan covers {} samples, dataset has {}",
            plan.entries.len(),
            dataset.len()
        )));
    }
    for (e, s) in plan.entries.iter().zip(dataset.samples()) {
        if e.id != s.id {
            return Err(Error::param(format!(
                "plan entry {} does not match sample {}",
                e.id, s.id
            )));
        }
        if e.target.q.len() != dataset.num_classes() {
            return Err(Error::DimensionMismatch(format!(
                "target for {} has {} classes",
                e.id,
                e.target.q.len()
            )));
        }
    }
    Ok(())
}

/// Weighted mean soft-target cross-entropy over `batch` plus
/// `weight_decay·‖W‖²/2`, and its exact gradient.
pub fn loss_and_grad<F: Scalar>(
    probe: &LinearProbe<F>,
    dataset: &Dataset<F>,
    batch: &[usize],
    plan: &CurationPlan<F>,
    weight_decay: F,
) -> Result<(F, LinearProbe<F>)> {
    probe.check_against(dataset)?;
    check_plan(dataset, plan)?;
    let mut total_w = F::zero();
    for &i in batch {
        let e = &plan.entries[i];
        if !e.keep {
            return Err(Error::DroppedSample(e.id.clone()));
        }
        total_w = total_w + e.weight;
    }
    if !(total_w > F::zero()) {
        return Err(Error::ZeroWeight);
    }
    Ok(accumulate(probe, dataset, batch, plan, weight_decay, total_w))
}

fn accumulate<F: Scalar>(
    probe: &LinearProbe<F>,
    dataset: &Dataset<F>,
    batch: &[usize],
    plan: &CurationPlan<F>,
    weight_decay: F,
    total_w: F,
) -> (F, LinearProbe<F>) {
    let (k, d) = (probe.k, probe.d);
    let mut grad = LinearProbe::zeros(k, d);
    let mut loss = F::zero();
    let mut z = vec![F::zero(); k];
    for &i in batch {
        let e = &plan.entries[i];
        let scale = e.weight / total_w;
        if scale == F::zero() {
            continue;
        }
        let x = dataset.x(i);
        for (c, zc) in z.iter_mut().enumerate() {
            *zc = dot(probe.weight_row(c), x) + probe.b[c];
        }
        let lse = log_sum_exp(&z);
        let q = &e.target.q;
        // CE(q, softmax z) = lse - q·z because q sums to one
        loss = loss + scale * (lse - dot(q, &z));
        for c in 0..k {
            let g = scale * ((z[c] - lse).exp() - q[c]);
            if g == F::zero() {
                continue;
            }
            grad.b[c] = grad.b[c] + g;
            for (gw, &xj) in grad.w[c * d..(c + 1) * d].iter_mut().zip(x) {
                *gw = *gw + g * xj;
            }
        }
    }
    if weight_decay > F::zero() {
        let sq: F = probe.w.iter().map(|&v| v * v).sum();
        loss = loss + weight_decay * sq / F::of(2.0);
        for (g, &v) in grad.w.iter_mut().zip(&probe.w) {
            *g = *g + weight_decay * v;
        }
    }
    (loss, grad)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome<F> {
    pub probe: LinearProbe<F>,
    /// Mean batch loss per epoch.
    pub loss_history: Vec<F>,
}

/// Trains from zero-initialized parameters.
pub fn train<F: Scalar>(
    dataset: &Dataset<F>,
    plan: &CurationPlan<F>,
    config: &TrainConfig<F>,
) -> Result<TrainOutcome<F>> {
    let init = LinearProbe::zeros(dataset.num_classes(), dataset.dim());
    train_from(init, dataset, plan, config)
}

/// Trains starting from `init`. Uses every kept sample outside the
/// real-test split; batches whose weights are all zero are skipped.
pub fn train_from<F: Scalar>(
    init: LinearProbe<F>,
    dataset: &Dataset<F>,
    plan: &CurationPlan<F>,
    config: &TrainConfig<F>,
) -> Result<TrainOutcome<F>> {
    config.validate()?;
    init.check_against(dataset)?;
    check_plan(dataset, plan)?;
    let mut order: Vec<usize> = plan
        .kept()
        .filter(|&i| dataset.samples()[i].split != Split::RealTest)
        .collect();
    if order.is_empty() {
        return Err(Error::EmptySelection);
    }

    let limit = DIVERGENCE_FACTOR * (dataset.num_classes() as f64).ln();
    let mut rng = stream_rng(config.seed, Stream::TrainShuffle);
    let mut probe = init;
    let mut vel = LinearProbe::zeros(probe.k, probe.d);
    let mut history = Vec::with_capacity(config.epochs);
    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = F::zero();
        let mut seen = 0usize;
        for batch in order.chunks(config.batch_size) {
            let total_w: F = batch.iter().map(|&i| plan.entries[i].weight).sum();
            if !(total_w > F::zero()) {
                continue;
            }
            let (loss, grad) =
                accumulate(&probe, dataset, batch, plan, config.weight_decay, total_w);
            let l = loss.as_f64();
            if !l.is_finite() || l > limit {
                return Err(Error::Divergence { epoch, loss: l });
            }
            epoch_loss = epoch_loss + loss * F::count(batch.len());
            seen += batch.len();
            step(&mut probe.w, &mut vel.w, &grad.w, config);
            step(&mut probe.b, &mut vel.b, &grad.b, config);
        }
        if probe.w.iter().chain(&probe.b).any(|v| !v.is_finite()) {
            return Err(Error::Divergence {
                epoch,
                loss: f64::INFINITY,
            });
        }
        history.push(if seen > 0 {
            epoch_loss / F::count(seen)
        } else {
            F::zero()
        });
    }
    Ok(TrainOutcome {
        probe,
        loss_history: history,
    })
}

/// Classical momentum: `v ← μv + g`, `θ ← θ − ηv`.
fn step<F: Scalar>(theta: &mut [F], vel: &mut [F], grad: &[F], config: &TrainConfig<F>) {
    for ((t, v), &g) in theta.iter_mut().zip(vel.iter_mut()).zip(grad) {
        *v = config.momentum * *v + g;
        *t = *t - config.learning_rate * *v;
    }
}

/// Pretrains on `pre` under `plan`, then fine-tunes on `fine` with one-hot
/// targets starting from the pretrained probe. A fine-tuning config with
/// zero epochs returns the pretrained probe unchanged.
pub fn two_stage<F: Scalar>(
    pre: &Dataset<F>,
    plan: &CurationPlan<F>,
    fine: &Dataset<F>,
    config_pre: &TrainConfig<F>,
    config_fine: &TrainConfig<F>,
) -> Result<LinearProbe<F>> {
    if pre.num_classes() != fine.num_classes() || pre.dim() != fine.dim() {
        return Err(Error::DimensionMismatch(format!(
            "pretraining set is K={}, d={}; fine-tuning set is K={}, d={}",
            pre.num_classes(),
            pre.dim(),
            fine.num_classes(),
            fine.dim()
        )));
    }
    let stage1 = train(pre, plan, config_pre)?.probe;
    if config_fine.epochs == 0 {
        return Ok(stage1);
    }
    let fine_plan = plan_none(fine)?;
    Ok(train_from(stage1, fine, &fine_plan, config_fine)?.probe)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub n: usize,
    pub top1: f64,
    pub top5: f64,
    /// `None` for classes without test samples.
    pub per_class_acc: Vec<Option<f64>>,
    /// `confusion[true][predicted]`.
    pub confusion: Vec<Vec<usize>>,
}

/// Position of `label` when classes are ordered by descending logit,
/// ties broken by ascending class index.
fn rank_of<F: Scalar>(logits: &[F], label: usize) -> usize {
    let zy = logits[label];
    logits
        .iter()
        .enumerate()
        .filter(|&(j, &z)| z > zy || (z == zy && j < label))
        .count()
}

/// Evaluates on the real-test split.
pub fn evaluate<F: Scalar>(probe: &LinearProbe<F>, dataset: &Dataset<F>) -> Result<EvalReport> {
    probe.check_against(dataset)?;
    let test = dataset.indices_in(Split::RealTest);
    if test.is_empty() {
        return Err(Error::param("empty test split"));
    }
    let k = probe.k;
    let mut confusion = vec![vec![0usize; k]; k];
    let (mut hit1, mut hit5) = (0usize, 0usize);
    for &i in &test {
        let y = dataset.samples()[i].label;
        let z = probe.logits(dataset.x(i))?;
        let pred = (0..k)
            .find(|&c| rank_of(&z, c) == 0)
            .expect("some class ranks first");
        confusion[y][pred] += 1;
        let r = rank_of(&z, y);
        hit1 += usize::from(r == 0);
        hit5 += usize::from(r < 5);
    }
    let per_class_acc = confusion
        .iter()
        .enumerate()
        .map(|(c, row)| {
            let total: usize = row.iter().sum();
            (total > 0).then(|| row[c] as f64 / total as f64)
        })
        .collect();
    let n = test.len();
    Ok(EvalReport {
        n,
        top1: hit1 as f64 / n as f64,
        top5: hit5 as f64 / n as f64,
        per_class_acc,
        confusion,
    })
}

/// `2ab / (a + b)`, defined as 0 when either input is 0.
pub fn harmonic_mean(a: f64, b: f64) -> f64 {
    if a == 0.0 || b == 0.0 {
        return 0.0;
    }
    2.0 * a * b / (a + b)
}

#[derive(Serialize, Deserialize)]
struct CheckpointHeader {
    #[serde(rename = "K")]
    k: usize,
    d: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    provenance: Option<Provenance>,
}

/// Writes W then b as f32 after a `SYCUP` header.
pub fn save_probe<F: Scalar>(
    probe: &LinearProbe<F>,
    path: &Path,
    provenance: Option<&Provenance>,
) -> Result<()> {
    let header = CheckpointHeader {
        k: probe.k,
        d: probe.d,
        provenance: provenance.cloned(),
    };
    let payload = probe.w.iter().chain(&probe.b).map(|v| v.as_f32());
    write_framed(path, PROBE_MAGIC, &header, payload)
}

pub fn load_probe<F: Scalar>(path: &Path) -> Result<LinearProbe<F>> {
    let (h, values): (CheckpointHeader, Vec<f32>) = read_framed(path, PROBE_MAGIC)?;
    if values.len() != h.k * h.d + h.k {
        return Err(Error::DimensionMismatch(format!(
            "checkpoint declares K={}, d={} but holds {} values",
            h.k,
            h.d,
            values.len()
        )));
    }
    let widen: Vec<F> = values.into_iter().map(F::from_f32_exact).collect();
    let (w, b) = widen.split_at(h.k * h.d);
    LinearProbe::from_parts(h.k, h.d, w.to_vec(), b.to_vec())
}

/// Pretty JSON of the report with the effective config under `"config"`.
pub fn eval_json(report: &EvalReport, provenance: Option<&Provenance>) -> Result<Vec<u8>> {
    #[derive(Serialize)]
    struct Out<'a> {
        #[serde(flatten)]
        report: &'a EvalReport,
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

pub fn write_eval_json(report: &EvalReport, path: &Path, provenance: Option<&Provenance>) -> Result<()> {
    let json = eval_json(report, provenance)?;
    fs::write(path, json).map_err(|e| Error::io(path, e))
}
