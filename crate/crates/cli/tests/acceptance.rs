//! One pass/fail line per acceptance criterion, each within its runtime budget.

use std::collections::HashMap;
use std::process::Command;
use std::time::{Duration, Instant};

use rand::Rng;
use synthcurate::curation::{smooth_label, PlanEntry};
use synthcurate::diagnostics::{davies_bouldin, mmd};
use synthcurate::experiment::{self, run_seed, PretrainParams};
use synthcurate::probe::{harmonic_mean, loss_and_grad, train};
use synthcurate::promptgen::{
    build_manifest, write_manifest_jsonl, BankSource, ClassDescriptions, DescriptionBank,
    PromptStrategy, PromptTemplate,
};
use synthcurate::rng::{stream_rng, Stream};
use synthcurate::simbench::{make_mixture, Preset, ScenarioSpec};
use synthcurate::uncertainty::{entropy, entropy_of, similarity_profile};
use synthcurate::{
    ClassCatalog, CurationPlan, Dataset, EmbeddingMatrix, FileFormat, KernelSpec, LinearProbe,
    SampleRecord, Split, Strategy, TrainConfig,
};

struct Outcome {
    pass: bool,
    detail: String,
}

fn check(cond: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass: cond,
        detail: detail.into(),
    }
}

fn c1_entropy() -> Outcome {
    let h: f64 = entropy_of(&[0.7, 0.2, 0.1]);
    let third = 1.0f64 / 3.0;
    let uniform = entropy_of(&[third, third, third]);
    let one_hot = entropy_of(&[1.0, 0.0, 0.0]);
    // a sharp profile from the similarity path: cosines 1, 0.5, 0 at scale 1000
    let text = [[1.0, 0.0], [0.5, 0.75f64.sqrt()], [0.0, 1.0]];
    let rows: Vec<&[f64]> = text.iter().map(|r| r.as_slice()).collect();
    let sharp = entropy(&similarity_profile(&[1.0, 0.0], &rows, 1000.0).unwrap());
    check(
        (h - 0.8018186).abs() <= 1e-6
            && (uniform - 3f64.ln()).abs() <= 1e-9
            && one_hot <= 1e-6
            && sharp <= 1e-6,
        format!("H(0.7,0.2,0.1)={h:.9} H(uniform3)-ln3={:.1e} H(one-hot)={one_hot:.1e} H(sharp)={sharp:.1e}", uniform - 3f64.ln()),
    )
}

fn c2_smoothing() -> Outcome {
    let mut rng = stream_rng(2, Stream::Corruption);
    let mut worst_sum = 0.0f64;
    let mut argmax_ok = true;
    for _ in 0..1000 {
        let k = rng.random_range(2..=101);
        let y = rng.random_range(0..k);
        let eps = rng.random_range(0.0..=0.3);
        let t = smooth_label::<f64>(y, k, eps).unwrap();
        worst_sum = worst_sum.max((t.q.iter().sum::<f64>() - 1.0).abs());
        let arg = t
            .q
            .iter()
            .enumerate()
            .fold(0, |best, (j, &v)| if v > t.q[best] { j } else { best });
        argmax_ok &= arg == y && t.q.iter().enumerate().all(|(j, &v)| j == y || v < t.q[y]);
    }
    check(
        worst_sum <= 1e-9 && argmax_ok,
        format!("max |sum-1|={worst_sum:.1e}, argmax=y for all 1000"),
    )
}

fn random_dataset(rng: &mut impl Rng, n: usize, k: usize, d: usize) -> Dataset {
    let samples = (0..n)
        .map(|i| SampleRecord::new(format!("s{i}"), rng.random_range(0..k), Split::Synthetic, i))
        .collect();
    let values = (0..n * d).map(|_| rng.random_range(-1.0..1.0)).collect();
    Dataset::new(
        ClassCatalog::numbered(k).unwrap(),
        samples,
        EmbeddingMatrix::new(n, d, values).unwrap(),
        None,
    )
    .unwrap()
}

fn c3_gradient() -> Outcome {
    let mut rng = stream_rng(3, Stream::ProbeInit);
    let mut worst = 0.0f64;
    for _ in 0..10 {
        let k = rng.random_range(2..=6);
        let d = rng.random_range(1..=8);
        let n = rng.random_range(2..=10);
        let ds = random_dataset(&mut rng, n, k, d);
        let entries = ds
            .samples()
            .iter()
            .map(|s| {
                let eps = rng.random_range(0.0..0.3);
                PlanEntry {
                    id: s.id.clone(),
                    target: smooth_label(s.label, k, eps).unwrap(),
                    weight: rng.random_range(0.1..1.0),
                    keep: true,
                    epsilon_used: eps,
                }
            })
            .collect();
        let plan = CurationPlan {
            strategy: Strategy::Ul,
            entries,
        };
        let mut probe = LinearProbe::zeros(k, d);
        probe.w.iter_mut().for_each(|v| *v = rng.random_range(-1.0..1.0));
        probe.b.iter_mut().for_each(|v| *v = rng.random_range(-1.0..1.0));
        let batch: Vec<usize> = (0..n).collect();
        let wd = 1e-3;
        let (_, g) = loss_and_grad(&probe, &ds, &batch, &plan, wd).unwrap();
        let loss = |p: &LinearProbe| loss_and_grad(p, &ds, &batch, &plan, wd).unwrap().0;
        let analytic: Vec<f64> = g.w.iter().chain(&g.b).copied().collect();
        let h = 1e-5;
        for (idx, &a) in analytic.iter().enumerate() {
            let (mut plus, mut minus) = (probe.clone(), probe.clone());
            if idx < k * d {
                plus.w[idx] += h;
                minus.w[idx] -= h;
            } else {
                plus.b[idx - k * d] += h;
                minus.b[idx - k * d] -= h;
            }
            let fd = (loss(&plus) - loss(&minus)) / (2.0 * h);
            worst = worst.max((fd - a).abs() / fd.abs().max(a.abs()).max(1e-8));
        }
    }
    check(worst < 1e-4, format!("max relative error {worst:.2e} over 10 instances"))
}

fn c4_mmd() -> Outcome {
    let mut rng = stream_rng(4, Stream::MixtureNoise);
    let x: Vec<Vec<f64>> = (0..60)
        .map(|_| (0..4).map(|_| rng.random_range(-2.0..2.0)).collect())
        .collect();
    let xv: Vec<&[f64]> = x.iter().map(Vec::as_slice).collect();
    let self_max = KernelSpec::standard_set()
        .iter()
        .map(|k| mmd(&xv, &xv, k).unwrap().abs())
        .fold(0.0, f64::max);
    let single = mmd(&[&[0.0, 0.0][..]], &[&[1.0, 0.0][..]], &KernelSpec::Linear).unwrap();

    let delta = [1.0, -0.5, 0.5, 0.25];
    let norm2: f64 = delta.iter().map(|v| v * v).sum();
    let mut normal = || -> f64 { rand_distr::Distribution::sample(&rand_distr::StandardNormal, &mut rng) };
    let a: Vec<Vec<f64>> = (0..2000).map(|_| (0..4).map(|_| normal()).collect()).collect();
    let b: Vec<Vec<f64>> = (0..2000)
        .map(|_| delta.iter().map(|m| m + normal()).collect())
        .collect();
    let av: Vec<&[f64]> = a.iter().map(Vec::as_slice).collect();
    let bv: Vec<&[f64]> = b.iter().map(Vec::as_slice).collect();
    let shift = mmd(&av, &bv, &KernelSpec::Linear).unwrap();
    let rel = (shift - norm2).abs() / norm2;
    check(
        self_max <= 1e-7 && single == 1.0 && rel <= 0.1,
        format!("self max {self_max:.1e}, singleton {single}, mean-shift {shift:.4} vs {norm2} ({:.1}%)", 100.0 * rel),
    )
}

fn one_d(points: &[(f64, usize)], k: usize) -> Dataset {
    let samples = points
        .iter()
        .enumerate()
        .map(|(i, &(_, y))| SampleRecord::new(format!("p{i}"), y, Split::RealTest, i))
        .collect();
    Dataset::new(
        ClassCatalog::numbered(k).unwrap(),
        samples,
        EmbeddingMatrix::new(points.len(), 1, points.iter().map(|p| p.0).collect()).unwrap(),
        None,
    )
    .unwrap()
}

fn c5_davies_bouldin() -> Outcome {
    let hand = davies_bouldin(&one_d(&[(0.0, 0), (2.0, 0), (4.0, 1), (6.0, 1)], 2)).unwrap();
    let singles = davies_bouldin(&one_d(&[(0.0, 0), (5.0, 1), (9.0, 2)], 3)).unwrap();
    check(
        (hand - 0.5).abs() <= 1e-9 && singles == 0.0,
        format!("hand case {hand}, singletons {singles}"),
    )
}

fn c6_gap_direction() -> Outcome {
    let mut db_ok = 0;
    let mut mmd_ok = 0;
    for i in 0..10 {
        let seed = run_seed(6, i);
        let make = |p: Preset, j: u64| -> Dataset {
            make_mixture(&ScenarioSpec::preset(p, synthcurate::rng::split_seed(seed, j))).unwrap()
        };
        let real = make(Preset::RealLike, 0);
        let ie = make(Preset::IeLike, 1);
        let basic = make(Preset::BasicLike, 2);
        let db = |d: &Dataset| davies_bouldin(d).unwrap();
        if db(&real) > db(&ie) && db(&ie) > db(&basic) {
            db_ok += 1;
        }
        let rows = |d: &Dataset| (0..d.len()).map(|r| d.x(r).to_vec()).collect::<Vec<_>>();
        let (r, e, b) = (rows(&real), rows(&ie), rows(&basic));
        fn view(m: &[Vec<f64>]) -> Vec<&[f64]> {
            m.iter().map(Vec::as_slice).collect()
        }
        let all = KernelSpec::standard_set().iter().all(|k| {
            mmd(&view(&b), &view(&r), k).unwrap() > mmd(&view(&e), &view(&r), k).unwrap()
        });
        if all {
            mmd_ok += 1;
        }
    }
    check(
        db_ok >= 9 && mmd_ok >= 9,
        format!("DB ordering {db_ok}/10 seeds, MMD ordering (lin, rbf, poly) {mmd_ok}/10 seeds"),
    )
}

fn c7_table7() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("table7.json");
    let o = Command::new(env!("CARGO_BIN_EXE_synthcurate"))
        .args(["experiment", "--preset", "table7", "--seeds", "20", "--out"])
        .arg(&out)
        .output()
        .unwrap();
    if !o.status.success() {
        return check(false, format!("experiment failed: {}", String::from_utf8_lossy(&o.stderr)));
    }
    let json: serde_json::Value = serde_json::from_slice(&std::fs::read(&out).unwrap()).unwrap();
    let means: HashMap<String, f64> = json["summary"]
        .as_array()
        .unwrap()
        .iter()
        .map(|s| (s["strategy"].as_str().unwrap().to_string(), s["mean"].as_f64().unwrap()))
        .collect();
    let (none, ls, ul) = (means["NONE"], means["LS"], means["UL"]);
    let diff = json["ul_minus_none"].as_f64().unwrap();
    let win = json["ul_win_rate"].as_f64().unwrap();
    check(
        ul >= ls && ls >= none && diff >= 1.0 && win >= 0.7,
        format!(
            "NONE {none:.2} LS {ls:.2} UW {:.2} UF {:.2} UL {ul:.2}; UL-NONE {diff:+.2} pts, win rate {:.0}%",
            means["UW"],
            means["UF"],
            100.0 * win
        ),
    )
}

fn c8_pretrain() -> Outcome {
    let r = experiment::pretrain(&PretrainParams::default(), 20, 8).unwrap();
    check(
        r.pretrained_mean > r.scratch_mean,
        format!(
            "pretrained {:.2} vs scratch {:.2} over 20 seeds",
            r.pretrained_mean, r.scratch_mean
        ),
    )
}

fn c9_harmonic_mean() -> Outcome {
    let a = harmonic_mean(74.1, 58.0);
    let b = harmonic_mean(95.4, 81.6);
    check(
        (a - 65.1).abs() <= 0.05 && (b - 88.0).abs() <= 0.05,
        format!("HM(74.1,58.0)={a:.3}, HM(95.4,81.6)={b:.3}"),
    )
}

fn c10_manifest() -> Outcome {
    let names: Vec<String> = (0..51).map(|c| format!("action {c}")).collect();
    let bank = DescriptionBank {
        classes: names
            .iter()
            .map(|n| {
                (
                    n.clone(),
                    ClassDescriptions {
                        env: (0..4).map(|i| format!("{n} scene {i}")).collect(),
                        char: (0..16).map(|i| format!("{n} person {i}")).collect(),
                    },
                )
            })
            .collect(),
        source: BankSource::Provider("acceptance".into()),
    };
    let catalog = ClassCatalog::new(names).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let mut files = Vec::new();
    let mut counts_ok = true;
    let mut total = 0;
    for run in 0..2 {
        let m = build_manifest(&catalog, &bank, PromptStrategy::Ie, 128, 10, &PromptTemplate::default())
            .unwrap();
        total = m.records.len();
        let mut pairs: HashMap<(String, usize, usize), usize> = HashMap::new();
        for r in &m.records {
            *pairs
                .entry((r.class_name.clone(), r.env_index.unwrap(), r.char_index.unwrap()))
                .or_default() += 1;
        }
        counts_ok &= pairs.len() == 51 * 64 && pairs.values().all(|&c| c == 2);
        let p = dir.path().join(format!("m{run}.jsonl"));
        write_manifest_jsonl(&m, &p, None).unwrap();
        files.push(std::fs::read(&p).unwrap());
    }
    check(
        counts_ok && total == 6528 && files[0] == files[1],
        format!(
            "{total} records, each pair twice per class: {counts_ok}, byte-identical: {}",
            files[0] == files[1]
        ),
    )
}

fn c11_round_trip() -> Outcome {
    let ds: Dataset = make_mixture(&ScenarioSpec {
        corrupt_fraction: 0.0,
        ..ScenarioSpec::preset(Preset::IeLike, 11)
    })
    .unwrap();
    let dir = tempfile::tempdir().unwrap();
    let mut io_ok = true;
    for (name, fmt, text) in [
        ("d.sycu", FileFormat::Container, true),
        ("d.csv", FileFormat::Csv, false),
    ] {
        let src = if text { ds.clone() } else { ds.with_class_text(None).unwrap() };
        let p = dir.path().join(name);
        synthcurate::dataset::save_dataset(&src, &p, fmt, None).unwrap();
        let back: Dataset = synthcurate::dataset::load_dataset(&p, fmt).unwrap();
        io_ok &= back.samples() == src.samples()
            && back
                .embeddings()
                .values()
                .iter()
                .zip(src.embeddings().values())
                .all(|(a, b)| a.to_bits() == b.to_bits());
    }
    let plan = synthcurate::curation::plan_none(&ds).unwrap();
    let cfg = TrainConfig {
        epochs: 5,
        seed: 11,
        ..TrainConfig::default()
    };
    let a = train(&ds, &plan, &cfg).unwrap().probe;
    let b = train(&ds, &plan, &cfg).unwrap().probe;
    let train_ok = a
        .w
        .iter()
        .chain(&a.b)
        .zip(b.w.iter().chain(&b.b))
        .all(|(x, y)| x.to_bits() == y.to_bits());
    check(
        io_ok && train_ok,
        format!("bit-exact save/load (container, csv): {io_ok}; bitwise-equal probes: {train_ok}"),
    )
}

fn main() {
    let criteria: [(&str, Duration, fn() -> Outcome); 11] = [
        ("entropy oracle", Duration::from_secs(1), c1_entropy),
        ("smoothed-label suite", Duration::from_secs(5), c2_smoothing),
        ("gradient check", Duration::from_secs(10), c3_gradient),
        ("MMD oracles", Duration::from_secs(30), c4_mmd),
        ("Davies-Bouldin oracle", Duration::from_secs(1), c5_davies_bouldin),
        ("synthetic-real gap direction", Duration::from_secs(120), c6_gap_direction),
        ("curation strategy direction", Duration::from_secs(300), c7_table7),
        ("pretraining direction", Duration::from_secs(180), c8_pretrain),
        ("harmonic mean", Duration::from_secs(1), c9_harmonic_mean),
        ("manifest combinatorics", Duration::from_secs(5), c10_manifest),
        ("round trip and determinism", Duration::from_secs(30), c11_round_trip),
    ];
    let mut failed = Vec::new();
    for (i, (name, budget, f)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = f();
        let took = start.elapsed();
        let pass = outcome.pass && took <= *budget;
        println!(
            "[{}] criterion {:>2} {name}: {} ({:.2?} of {:?})",
            if pass { "PASS" } else { "FAIL" },
            i + 1,
            outcome.detail,
            took,
            budget
        );
        if !pass {
            failed.push(i + 1);
        }
    }
    if failed.is_empty() {
        println!("acceptance: all {} criteria passed", criteria.len());
    } else {
        eprintln!("acceptance: failed criteria {failed:?}");
        std::process::exit(1);
    }
}
