//! End-to-end seeded experiments: simulate → score → curate → train → eval.

use std::fmt::Write as _;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::curation::{make_plan, plan_ul, PlanParams, Strategy};
use crate::dataset::{Dataset, Split};
use crate::error::{Error, Result};
use crate::probe::{evaluate, train, two_stage, TrainConfig};
use crate::rng::split_seed;
use crate::simbench::{corrupt, make_mixture, CorruptMode, Preset, ScenarioSpec};
use crate::uncertainty::score_dataset;
use crate::Provenance;

/// Logit scale used on simulated embeddings, whose cosine similarities
/// spread far wider than those of a pretrained vision-language model.
pub const SIM_LOGIT_SCALE: f64 = 10.0;

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioParams {
    pub k: usize,
    pub d: usize,
    pub n_per_class: usize,
    pub n_test_per_class: usize,
    pub synthetic: Preset,
    pub real: Preset,
    pub corrupt_fraction: f64,
    pub corrupt_mode: CorruptMode,
}

impl Default for ScenarioParams {
    fn default() -> Self {
        Self {
            k: 10,
            d: 16,
            n_per_class: 100,
            n_test_per_class: 100,
            synthetic: Preset::BasicLike,
            real: Preset::RealLike,
            corrupt_fraction: 0.2,
            corrupt_mode: CorruptMode::OutlierShift,
        }
    }
}

impl ScenarioParams {
    fn spec(&self, preset: Preset, n_per_class: usize, seed: u64, split: Split) -> ScenarioSpec {
        ScenarioSpec {
            k: self.k,
            d: self.d,
            n_per_class,
            ..ScenarioSpec::preset(preset, seed)
        }
        .with_split(split)
    }

    /// Corrupted synthetic set plus a clean real-test set sharing its centers.
    pub fn build(&self, seed: u64) -> Result<(Dataset<f64>, Vec<String>)> {
        let syn_spec = ScenarioSpec {
            corrupt_fraction: self.corrupt_fraction,
            corrupt_mode: self.corrupt_mode,
            ..self.spec(self.synthetic, self.n_per_class, seed, Split::Synthetic)
        };
        let syn = corrupt(&make_mixture(&syn_spec)?, &syn_spec)?;
        let test = make_mixture(&self.spec(self.real, self.n_test_per_class, seed, Split::RealTest))?;
        Ok((syn.dataset.concat(&test)?, syn.corrupted_ids))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Table7Params {
    pub scenario: ScenarioParams,
    pub logit_scale: f64,
    pub w: f64,
    pub plan: PlanParams<f64>,
    pub train: TrainConfig<f64>,
}

impl Default for Table7Params {
    fn default() -> Self {
        Self {
            scenario: ScenarioParams::default(),
            logit_scale: SIM_LOGIT_SCALE,
            w: crate::uncertainty::DEFAULT_W,
            plan: PlanParams::default(),
            train: TrainConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrategySummary {
    pub strategy: Strategy,
    pub mean: f64,
    pub std: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Table7Result {
    pub seeds: Vec<u64>,
    /// `top1[seed][strategy]` in percent, strategies in `Strategy::ALL` order.
    pub top1: Vec<[f64; 5]>,
    pub summary: Vec<StrategySummary>,
    /// Mean UL − NONE, in points.
    pub ul_minus_none: f64,
    /// Fraction of seeds where UL strictly beats NONE.
    pub ul_win_rate: f64,
}

fn mean_std(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    if v.len() < 2 {
        return (mean, 0.0);
    }
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Seed of the `i`-th run of an experiment started from `base_seed`.
pub fn run_seed(base_seed: u64, i: usize) -> u64 {
    split_seed(base_seed, i as u64)
}

fn table7_seed(params: &Table7Params, seed: u64) -> Result<[f64; 5]> {
    let (ds, _) = params.scenario.build(seed)?;
    let report = score_dataset(&ds, params.logit_scale, params.w)?;
    let cfg = TrainConfig { seed, ..params.train };
    let mut row = [0.0; 5];
    for (slot, strategy) in row.iter_mut().zip(Strategy::ALL) {
        let plan = make_plan(strategy, &ds, Some(&report), &params.plan)?;
        let probe = train(&ds, &plan, &cfg)?.probe;
        *slot = 100.0 * evaluate(&probe, &ds)?.top1;
    }
    Ok(row)
}

/// Runs every curation strategy on the same corrupted scenario per seed.
pub fn table7(params: &Table7Params, seeds: usize, base_seed: u64) -> Result<Table7Result> {
    if seeds == 0 {
        return Err(Error::param("need at least one seed"));
    }
    params.train.validate()?;
    let seed_list: Vec<u64> = (0..seeds).map(|i| run_seed(base_seed, i)).collect();
    let top1 = seed_list
        .par_iter()
        .map(|&s| table7_seed(params, s))
        .collect::<Result<Vec<_>>>()?;
    let summary = Strategy::ALL
        .iter()
        .enumerate()
        .map(|(j, &strategy)| {
            let col: Vec<f64> = top1.iter().map(|r| r[j]).collect();
            let (mean, std) = mean_std(&col);
            StrategySummary { strategy, mean, std }
        })
        .collect();
    let none = Strategy::ALL.iter().position(|&s| s == Strategy::None).unwrap();
    let ul = Strategy::ALL.iter().position(|&s| s == Strategy::Ul).unwrap();
    let diffs: Vec<f64> = top1.iter().map(|r| r[ul] - r[none]).collect();
    Ok(Table7Result {
        seeds: seed_list,
        ul_minus_none: mean_std(&diffs).0,
        ul_win_rate: diffs.iter().filter(|&&d| d > 0.0).count() as f64 / diffs.len() as f64,
        top1,
        summary,
    })
}

impl Table7Result {
    pub fn mean_of(&self, strategy: Strategy) -> f64 {
        self.summary
            .iter()
            .find(|s| s.strategy == strategy)
            .map(|s| s.mean)
            .unwrap_or(f64::NAN)
    }

    /// Fixed-width summary table, columns in `Strategy::ALL` order.
    pub fn summary_table(&self) -> String {
        let mut out = format!("{:<10}", "strategy");
        for s in &self.summary {
            let _ = write!(out, "{:>14}", s.strategy.as_str());
        }
        out.push_str(&format!("\n{:<10}", "top1 (%)"));
        for s in &self.summary {
            let _ = write!(out, "{:>14}", format!("{:.2}±{:.2}", s.mean, s.std));
        }
        let wins = (self.ul_win_rate * self.seeds.len() as f64).round() as usize;
        let _ = write!(
            out,
            "\nUL - NONE: {:+.2} points; UL beats NONE on {}/{} seeds\n",
            self.ul_minus_none,
            wins,
            self.seeds.len()
        );
        out
    }

    /// Per-seed CSV: `seed,NONE,LS,UW,UF,UL`.
    pub fn write_csv(&self, path: &Path, provenance: Option<&Provenance>) -> Result<()> {
        let mut buf = Vec::new();
        if let Some(p) = provenance {
            crate::dataset::write_provenance(&mut buf, p);
        }
        let mut w = csv::Writer::from_writer(buf);
        let mut header = vec!["seed".to_string()];
        header.extend(Strategy::ALL.iter().map(|s| s.as_str().to_string()));
        w.write_record(&header)?;
        for (seed, row) in self.seeds.iter().zip(&self.top1) {
            let mut rec = vec![seed.to_string()];
            rec.extend(row.iter().map(|v| format!("{v:.4}")));
            w.write_record(&rec)?;
        }
        let buf = w.into_inner().map_err(|e| Error::io(path, e.into_error()))?;
        std::fs::write(path, buf).map_err(|e| Error::io(path, e))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PretrainParams {
    pub scenario: ScenarioParams,
    /// Real training pool size per class, from which the shots are drawn.
    pub pool_per_class: usize,
    pub shots: usize,
    pub logit_scale: f64,
    pub w: f64,
    pub pretrain: TrainConfig<f64>,
    pub finetune: TrainConfig<f64>,
}

impl Default for PretrainParams {
    fn default() -> Self {
        Self {
            scenario: ScenarioParams {
                synthetic: Preset::IeLike,
                ..ScenarioParams::default()
            },
            pool_per_class: 20,
            shots: 2,
            logit_scale: SIM_LOGIT_SCALE,
            w: crate::uncertainty::DEFAULT_W,
            pretrain: TrainConfig::default(),
            finetune: TrainConfig {
                learning_rate: 0.05,
                epochs: 20,
                batch_size: 8,
                ..TrainConfig::default()
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PretrainResult {
    pub seeds: Vec<u64>,
    /// `(pretrained, scratch)` top1 in percent per seed.
    pub top1: Vec<(f64, f64)>,
    pub pretrained_mean: f64,
    pub scratch_mean: f64,
}

impl PretrainResult {
    pub fn summary_table(&self) -> String {
        let wins = self.top1.iter().filter(|(p, s)| p > s).count();
        format!(
            "{:<12}{:>14}{:>14}\n{:<12}{:>14.2}{:>14.2}\npretrained beats scratch on {}/{} seeds\n",
            "variant",
            "pretrained",
            "scratch",
            "top1 (%)",
            self.pretrained_mean,
            self.scratch_mean,
            wins,
            self.seeds.len()
        )
    }
}

fn pretrain_seed(params: &PretrainParams, seed: u64) -> Result<(f64, f64)> {
    let sc = &params.scenario;
    let (syn_and_test, _) = sc.build(seed)?;
    let syn = syn_and_test.subset(|r| r.split == Split::Synthetic)?;
    let test = syn_and_test.subset(|r| r.split == Split::RealTest)?;
    let pool = make_mixture(&sc.spec(sc.real, params.pool_per_class, seed, Split::RealTrain))?;
    let shots = pool.k_shot(params.shots, seed, |r| r.split == Split::RealTrain)?;
    let fine = shots.concat(&test)?;

    let report = score_dataset(&syn, params.logit_scale, params.w)?;
    let plan = plan_ul(&syn, &report)?;
    let pre_cfg = TrainConfig { seed, ..params.pretrain };
    let fine_cfg = TrainConfig { seed, ..params.finetune };
    let pretrained = two_stage(&syn, &plan, &fine, &pre_cfg, &fine_cfg)?;
    let scratch = train(&fine, &crate::curation::plan_none(&fine)?, &fine_cfg)?.probe;
    Ok((
        100.0 * evaluate(&pretrained, &fine)?.top1,
        100.0 * evaluate(&scratch, &fine)?.top1,
    ))
}

/// Synthetic pretraining + few-shot fine-tuning vs few-shot from scratch.
pub fn pretrain(params: &PretrainParams, seeds: usize, base_seed: u64) -> Result<PretrainResult> {
    if seeds == 0 {
        return Err(Error::param("need at least one seed"));
    }
    if params.shots == 0 || params.shots > params.pool_per_class {
        return Err(Error::param(format!(
            "shots must lie in 1..={}, got {}",
            params.pool_per_class, params.shots
        )));
    }
    params.pretrain.validate()?;
    params.finetune.validate()?;
    let seed_list: Vec<u64> = (0..seeds).map(|i| run_seed(base_seed, i)).collect();
    let top1 = seed_list
        .par_iter()
        .map(|&s| pretrain_seed(params, s))
        .collect::<Result<Vec<_>>>()?;
    let n = top1.len() as f64;
    Ok(PretrainResult {
        seeds: seed_list,
        pretrained_mean: top1.iter().map(|t| t.0).sum::<f64>() / n,
        scratch_mean: top1.iter().map(|t| t.1).sum::<f64>() / n,
        top1,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mean_std_sample() {
        let (m, s) = mean_std(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(m, 2.5);
        assert!((s - 1.2909944487358056).abs() < 1e-12);
    }

    #[test]
    fn scenario_shape() {
        let (ds, bad) = ScenarioParams::default().build(3).unwrap();
        assert_eq!(ds.count_in(Split::Synthetic), 1000);
        assert_eq!(ds.count_in(Split::RealTest), 1000);
        assert_eq!(bad.len(), 200);
    }

    #[test]
    fn small_table7_is_deterministic() {
        let params = Table7Params {
            scenario: ScenarioParams {
                n_per_class: 20,
                n_test_per_class: 20,
                ..ScenarioParams::default()
            },
            train: TrainConfig {
                epochs: 5,
                ..TrainConfig::default()
            },
            ..Table7Params::default()
        };
        let a = table7(&params, 3, 11).unwrap();
        let b = table7(&params, 3, 11).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.summary.len(), 5);
        let table = a.summary_table();
        let header = table.lines().next().unwrap();
        let cols: Vec<&str> = header.split_whitespace().skip(1).collect();
        assert_eq!(cols, ["NONE", "LS", "UW", "UF", "UL"]);
    }
}
