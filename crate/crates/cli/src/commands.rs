use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use synthcurate::curation::{make_plan, plan_none, read_plan_csv, write_plan_csv, PlanParams};
use synthcurate::dataset::{load_dataset, save_dataset};
use synthcurate::diagnostics::{
    gap_json, gap_report, pca_project, write_gap_json, write_projection_csv, write_scatter_svg,
};
use synthcurate::experiment::{self, PretrainParams, ScenarioParams, Table7Params};
use synthcurate::probe::{eval_json, evaluate, load_probe, save_probe, train_from, write_eval_json};
use synthcurate::promptgen::{
    build_manifest, fetch_bank, validate_bank, write_manifest_jsonl, DescriptionBank,
    HttpProvider, CANONICAL_CHAR_COUNT, CANONICAL_ENV_COUNT,
};
use synthcurate::simbench::{corrupt, make_mixture, write_corruption_sidecar, ScenarioSpec};
use synthcurate::uncertainty::{check_w, read_report_csv, score_dataset, write_report_csv};
use synthcurate::{
    ClassCatalog, Dataset, Error, FileFormat, LinearProbe, Provenance, Result, Strategy,
};

use crate::config::RunConfig;
use crate::{
    Command, CurateArgs, DiagnoseArgs, EvalArgs, ExperimentArgs, ExperimentPreset,
    GenPromptsArgs, ProjectArgs, ScoreArgs, SimulateArgs, TrainArgs, TrainFlags,
};

fn overlay<T>(slot: &mut T, flag: Option<T>) {
    if let Some(v) = flag {
        *slot = v;
    }
}

fn overlay_some<T>(slot: &mut Option<T>, flag: Option<T>) {
    if flag.is_some() {
        *slot = flag;
    }
}

fn overlay_parsed<T: std::str::FromStr<Err = Error>>(slot: &mut T, flag: Option<String>) -> Result<()> {
    if let Some(s) = flag {
        *slot = s.parse()?;
    }
    Ok(())
}

fn overlay_train(cfg: &mut RunConfig, t: TrainFlags) {
    overlay(&mut cfg.train.learning_rate, t.learning_rate);
    overlay(&mut cfg.train.momentum, t.momentum);
    overlay(&mut cfg.train.weight_decay, t.weight_decay);
    overlay(&mut cfg.train.epochs, t.epochs);
    overlay(&mut cfg.train.batch_size, t.batch_size);
}

fn required<'a, T>(v: &'a Option<T>, what: &str) -> Result<&'a T> {
    v.as_ref()
        .ok_or_else(|| Error::InvalidParameter(format!("missing --{what}")))
}

fn one_dataset(cfg: &RunConfig) -> Result<&Path> {
    match cfg.paths.dataset.as_slice() {
        [p] => Ok(p),
        [] => Err(Error::InvalidParameter("missing --dataset".into())),
        _ => Err(Error::InvalidParameter("expected exactly one dataset".into())),
    }
}

fn load(path: &Path) -> Result<Dataset> {
    load_dataset(path, FileFormat::from_path(path))
}

fn out_path(cfg: &RunConfig) -> Result<&Path> {
    required(&cfg.paths.out, "out").map(PathBuf::as_path)
}

/// Writes to `--out` when given, standard output otherwise.
fn emit(cfg: &RunConfig, bytes: &[u8]) -> Result<()> {
    match &cfg.paths.out {
        Some(p) => fs::write(p, bytes).map_err(|e| Error::Io {
            path: p.clone(),
            source: e,
        }),
        None => std::io::stdout().write_all(bytes).map_err(|e| Error::Io {
            path: "<stdout>".into(),
            source: e,
        }),
    }
}

pub fn dispatch(command: Command, cfg: RunConfig) -> Result<()> {
    match command {
        Command::GenPrompts(a) => gen_prompts(a, cfg),
        Command::Score(a) => score(a, cfg),
        Command::Curate(a) => curate(a, cfg),
        Command::Train(a) => train(a, cfg),
        Command::Eval(a) => eval(a, cfg),
        Command::Diagnose(a) => diagnose(a, cfg),
        Command::Project(a) => project(a, cfg),
        Command::Simulate(a) => simulate(a, cfg),
        Command::Experiment(a) => experiment(a, cfg),
    }
}

fn read_class_list(path: &Path) -> Result<ClassCatalog> {
    let text = fs::read_to_string(path).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    ClassCatalog::new(text.lines().map(str::trim).filter(|l| !l.is_empty()))
}

fn gen_prompts(a: GenPromptsArgs, mut cfg: RunConfig) -> Result<()> {
    overlay_some(&mut cfg.paths.bank, a.bank);
    overlay_some(&mut cfg.paths.endpoint, a.endpoint);
    overlay_some(&mut cfg.paths.classes, a.classes);
    overlay_parsed(&mut cfg.prompt_strategy, a.strategy)?;
    overlay(&mut cfg.per_class_count, a.per_class_count);
    overlay(&mut cfg.template.text, a.template);
    overlay(&mut cfg.template.version, a.template_version);
    overlay(&mut cfg.provider_timeout_secs, a.provider_timeout_secs);
    cfg.validate()?;
    let out = out_path(&cfg)?;
    let strategy = cfg.prompt_strategy;

    let bank = match (&cfg.paths.bank, &cfg.paths.endpoint) {
        (Some(path), _) => DescriptionBank::load(path)?,
        (None, Some(endpoint)) => {
            let classes = required(&cfg.paths.classes, "classes")?;
            let catalog = read_class_list(classes)?;
            let provider = HttpProvider::new(endpoint.clone(), cfg.provider_timeout());
            let env = if strategy.needs_env() { CANONICAL_ENV_COUNT } else { 0 };
            let chr = if strategy.needs_char() { CANONICAL_CHAR_COUNT } else { 0 };
            fetch_bank(&provider, &catalog, env, chr)?
        }
        (None, None) => {
            return Err(Error::InvalidParameter(
                "missing --bank (or --endpoint with --classes)".into(),
            ))
        }
    };
    let catalog = match &cfg.paths.classes {
        Some(p) => read_class_list(p)?,
        None => bank.catalog()?,
    };
    for w in validate_bank(&bank, &catalog, strategy)? {
        eprintln!("warning: {w}");
    }
    let manifest = build_manifest(
        &catalog,
        &bank,
        strategy,
        cfg.per_class_count,
        cfg.seed,
        &cfg.template,
    )?;
    write_manifest_jsonl(&manifest, out, Some(&cfg.provenance("gen-prompts")))?;
    if let Some(p) = a.save_bank {
        bank.save(&p)?;
    }
    eprintln!(
        "wrote {} prompts for {} classes to {}",
        manifest.records.len(),
        catalog.len(),
        out.display()
    );
    Ok(())
}

fn score(a: ScoreArgs, mut cfg: RunConfig) -> Result<()> {
    if let Some(d) = a.dataset {
        cfg.paths.dataset = vec![d];
    }
    overlay_some(&mut cfg.logit_scale, a.logit_scale);
    overlay(&mut cfg.w, a.w);
    cfg.validate()?;
    let out = out_path(&cfg)?;
    let ds = load(one_dataset(&cfg)?)?;
    check_w(cfg.w, ds.num_classes())?;
    let report = score_dataset(&ds, cfg.scoring_logit_scale(), cfg.w)?;
    write_report_csv(&report, out, Some(&cfg.provenance("score")))?;
    eprintln!("scored {} synthetic samples", report.rows.len());
    Ok(())
}

fn curate(a: CurateArgs, mut cfg: RunConfig) -> Result<()> {
    if let Some(d) = a.dataset {
        cfg.paths.dataset = vec![d];
    }
    overlay_some(&mut cfg.paths.report, a.report);
    overlay_parsed(&mut cfg.strategy, a.strategy)?;
    overlay(&mut cfg.drop_fraction, a.drop_fraction);
    overlay(&mut cfg.ls_epsilon, a.ls_epsilon);
    overlay(&mut cfg.w, a.w);
    cfg.validate()?;
    let out = out_path(&cfg)?;
    let ds = load(one_dataset(&cfg)?)?;
    let report = match (&cfg.paths.report, cfg.strategy) {
        (Some(p), _) => Some(read_report_csv(p, cfg.w)?),
        (None, Strategy::None | Strategy::Ls) => None,
        (None, s) => {
            return Err(Error::InvalidParameter(format!(
                "strategy {s} needs --report"
            )))
        }
    };
    let params = PlanParams {
        ls_epsilon: cfg.ls_epsilon,
        drop_fraction: cfg.drop_fraction,
    };
    let plan = make_plan(cfg.strategy, &ds, report.as_ref(), &params)?;
    write_plan_csv(&plan, out, Some(&cfg.provenance("curate")))?;
    eprintln!(
        "{} plan keeps {} of {} samples",
        cfg.strategy,
        plan.kept_count(),
        ds.len()
    );
    Ok(())
}

fn train(a: TrainArgs, mut cfg: RunConfig) -> Result<()> {
    if let Some(d) = a.dataset {
        cfg.paths.dataset = vec![d];
    }
    overlay_some(&mut cfg.paths.plan, a.plan);
    overlay_some(&mut cfg.paths.init, a.init);
    overlay_train(&mut cfg, a.train);
    cfg.train.seed = cfg.seed;
    cfg.validate()?;
    let out = out_path(&cfg)?;
    let ds = load(one_dataset(&cfg)?)?;
    let plan = match &cfg.paths.plan {
        Some(p) => read_plan_csv(p, &ds)?,
        None => plan_none(&ds)?,
    };
    let init = match &cfg.paths.init {
        Some(p) => load_probe(p)?,
        None => LinearProbe::zeros(ds.num_classes(), ds.dim()),
    };
    let outcome = train_from(init, &ds, &plan, &cfg.train)?;
    save_probe(&outcome.probe, out, Some(&cfg.provenance("train")))?;
    if let Some(last) = outcome.loss_history.last() {
        eprintln!("final epoch loss {last:.6}");
    }
    Ok(())
}

fn eval(a: EvalArgs, mut cfg: RunConfig) -> Result<()> {
    if let Some(d) = a.dataset {
        cfg.paths.dataset = vec![d];
    }
    overlay_some(&mut cfg.paths.probe, a.probe);
    cfg.validate()?;
    let ds = load(one_dataset(&cfg)?)?;
    let probe: LinearProbe = load_probe(required(&cfg.paths.probe, "probe")?)?;
    let report = evaluate(&probe, &ds)?;
    let prov = cfg.provenance("eval");
    match &cfg.paths.out {
        Some(p) => write_eval_json(&report, p, Some(&prov))?,
        None => emit(&cfg, &eval_json(&report, Some(&prov))?)?,
    }
    eprintln!("top1 {:.4} top5 {:.4} over {} samples", report.top1, report.top5, report.n);
    Ok(())
}

fn diagnose(a: DiagnoseArgs, mut cfg: RunConfig) -> Result<()> {
    let mut named: Vec<(String, PathBuf)> = Vec::new();
    let specs: Vec<String> = if a.datasets.is_empty() {
        cfg.paths.dataset.iter().map(|p| p.display().to_string()).collect()
    } else {
        a.datasets
    };
    for spec in &specs {
        let (name, path) = match spec.split_once('=') {
            Some((n, p)) => (n.to_string(), PathBuf::from(p)),
            None => {
                let p = PathBuf::from(spec);
                let stem = p
                    .file_stem()
                    .map(|s| s.to_string_lossy().into_owned())
                    .unwrap_or_else(|| spec.clone());
                (stem, p)
            }
        };
        named.push((name, path));
    }
    cfg.paths.dataset = named.iter().map(|(_, p)| p.clone()).collect();
    if let Some(k) = a.kernels {
        cfg.set("kernels", &k)?;
    }
    cfg.validate()?;
    if named.is_empty() {
        return Err(Error::InvalidParameter("missing --dataset".into()));
    }
    let loaded = named
        .iter()
        .map(|(n, p)| Ok((n.clone(), load(p)?)))
        .collect::<Result<Vec<_>>>()?;
    let refs: Vec<(String, &Dataset)> = loaded.iter().map(|(n, d)| (n.clone(), d)).collect();
    let report = gap_report(&refs, &cfg.kernels)?;
    let prov = cfg.provenance("diagnose");
    match &cfg.paths.out {
        Some(p) => write_gap_json(&report, p, Some(&prov)),
        None => emit(&cfg, &gap_json(&report, Some(&prov))?),
    }
}

fn project(a: ProjectArgs, mut cfg: RunConfig) -> Result<()> {
    if let Some(d) = a.dataset {
        cfg.paths.dataset = vec![d];
    }
    cfg.validate()?;
    let out = out_path(&cfg)?;
    let ds = load(one_dataset(&cfg)?)?;
    let proj = pca_project(ds.embeddings(), 2)?;
    write_projection_csv(&ds, &proj, out, Some(&cfg.provenance("project")))?;
    if let Some(svg) = a.svg {
        write_scatter_svg(&ds, &proj, &svg)?;
    }
    eprintln!(
        "explained variance: {}",
        proj.explained
            .iter()
            .map(|v| format!("{v:.4}"))
            .collect::<Vec<_>>()
            .join(", ")
    );
    Ok(())
}

fn simulate(a: SimulateArgs, mut cfg: RunConfig) -> Result<()> {
    overlay_parsed(&mut cfg.preset, a.preset)?;
    overlay(&mut cfg.k, a.k);
    overlay(&mut cfg.d, a.d);
    overlay(&mut cfg.n_per_class, a.n_per_class);
    overlay_some(&mut cfg.intra_std, a.intra_std);
    overlay_some(&mut cfg.inter_sep, a.inter_sep);
    overlay(&mut cfg.corrupt_fraction, a.corrupt_fraction);
    overlay_parsed(&mut cfg.corrupt_mode, a.corrupt_mode)?;
    if let Some(s) = a.split {
        cfg.set("split", &s)?;
    }
    cfg.validate()?;
    let out = out_path(&cfg)?;
    let (intra_std, inter_sep) = cfg.geometry();
    let spec = ScenarioSpec {
        k: cfg.k,
        d: cfg.d,
        n_per_class: cfg.n_per_class,
        intra_std,
        inter_sep,
        corrupt_fraction: cfg.corrupt_fraction,
        corrupt_mode: cfg.corrupt_mode,
        seed: cfg.seed,
        split: cfg.split,
    };
    spec.validate()?;
    let clean: Dataset = make_mixture(&spec)?;
    let prov = cfg.provenance("simulate");
    if spec.corrupt_fraction > 0.0 {
        let c = corrupt(&clean, &spec)?;
        save_dataset(&c.dataset, out, FileFormat::from_path(out), Some(&prov))?;
        let sidecar = a.sidecar.unwrap_or_else(|| {
            let mut name = out.file_name().unwrap_or_default().to_os_string();
            name.push(".corrupted.json");
            out.with_file_name(name)
        });
        write_corruption_sidecar(&c.corrupted_ids, &sidecar)?;
        eprintln!("{} samples, {} corrupted", c.dataset.len(), c.corrupted_ids.len());
    } else {
        save_dataset(&clean, out, FileFormat::from_path(out), Some(&prov))?;
        eprintln!("{} samples", clean.len());
    }
    Ok(())
}

#[derive(serde::Serialize)]
struct WithConfig<'a, T> {
    #[serde(flatten)]
    result: &'a T,
    config: &'a Provenance,
}

fn write_json<T: serde::Serialize>(path: &Path, result: &T, prov: &Provenance) -> Result<()> {
    let mut json = serde_json::to_vec_pretty(&WithConfig {
        result,
        config: prov,
    })?;
    json.push(b'\n');
    fs::write(path, json).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

fn experiment(a: ExperimentArgs, mut cfg: RunConfig) -> Result<()> {
    overlay(&mut cfg.seeds, a.seeds);
    overlay_some(&mut cfg.logit_scale, a.logit_scale);
    overlay(&mut cfg.w, a.w);
    overlay(&mut cfg.ls_epsilon, a.ls_epsilon);
    overlay(&mut cfg.drop_fraction, a.drop_fraction);
    let explicit_train = a.train.learning_rate.is_some()
        || a.train.momentum.is_some()
        || a.train.weight_decay.is_some()
        || a.train.epochs.is_some()
        || a.train.batch_size.is_some();
    overlay_train(&mut cfg, a.train);
    cfg.validate()?;
    let tag = match a.preset {
        ExperimentPreset::Table7 => "experiment-table7",
        ExperimentPreset::Pretrain => "experiment-pretrain",
    };
    let prov = cfg.provenance(tag);
    match a.preset {
        ExperimentPreset::Table7 => {
            let params = Table7Params {
                scenario: ScenarioParams::default(),
                logit_scale: cfg.experiment_logit_scale(),
                w: cfg.w,
                plan: PlanParams {
                    ls_epsilon: cfg.ls_epsilon,
                    drop_fraction: cfg.drop_fraction,
                },
                train: cfg.train,
            };
            let result = experiment::table7(&params, cfg.seeds, cfg.seed)?;
            print!("{}", result.summary_table());
            if let Some(p) = &cfg.paths.out {
                write_json(p, &result, &prov)?;
            }
            if let Some(p) = &a.csv {
                result.write_csv(p, Some(&prov))?;
            }
        }
        ExperimentPreset::Pretrain => {
            let defaults = PretrainParams::default();
            let params = PretrainParams {
                logit_scale: cfg.experiment_logit_scale(),
                w: cfg.w,
                pretrain: cfg.train,
                // training flags retune the fine-tuning stage too
                finetune: if explicit_train { cfg.train } else { defaults.finetune },
                ..defaults
            };
            let result = experiment::pretrain(&params, cfg.seeds, cfg.seed)?;
            print!("{}", result.summary_table());
            if let Some(p) = &cfg.paths.out {
                write_json(p, &result, &prov)?;
            }
        }
    }
    Ok(())
}
