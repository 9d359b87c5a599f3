//! Effective run configuration: defaults, then an INI-style file, then flags.

use std::path::{Path, PathBuf};
use std::time::Duration;

use synthcurate::curation::{check_drop_fraction, DEFAULT_DROP_FRACTION, DEFAULT_LS_EPSILON};
use synthcurate::experiment::SIM_LOGIT_SCALE;
use synthcurate::promptgen::{PromptStrategy, PromptTemplate, DEFAULT_PER_CLASS_COUNT};
use synthcurate::simbench::{CorruptMode, Preset};
use synthcurate::uncertainty::{DEFAULT_LOGIT_SCALE, DEFAULT_W};
use synthcurate::{Error, KernelSpec, Provenance, Result, Split, Strategy, TrainConfig};

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub seed: u64,
    /// `None` means the command's own default (100 on real embeddings, 10 in simulation).
    pub logit_scale: Option<f64>,
    pub w: f64,
    pub strategy: Strategy,
    pub drop_fraction: f64,
    pub ls_epsilon: f64,
    pub train: TrainConfig,
    pub seeds: usize,
    pub prompt_strategy: PromptStrategy,
    pub per_class_count: usize,
    pub template: PromptTemplate,
    pub provider_timeout_secs: u64,
    pub kernels: Vec<KernelSpec>,
    pub preset: Preset,
    pub k: usize,
    pub d: usize,
    pub n_per_class: usize,
    /// `None` takes the preset's value.
    pub intra_std: Option<f64>,
    pub inter_sep: Option<f64>,
    pub corrupt_fraction: f64,
    pub corrupt_mode: CorruptMode,
    pub split: Split,
    pub paths: Paths,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Paths {
    pub dataset: Vec<PathBuf>,
    pub report: Option<PathBuf>,
    pub plan: Option<PathBuf>,
    pub probe: Option<PathBuf>,
    pub init: Option<PathBuf>,
    pub bank: Option<PathBuf>,
    pub classes: Option<PathBuf>,
    pub endpoint: Option<String>,
    pub out: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            logit_scale: None,
            w: DEFAULT_W,
            strategy: Strategy::Ul,
            drop_fraction: DEFAULT_DROP_FRACTION,
            ls_epsilon: DEFAULT_LS_EPSILON,
            train: TrainConfig::default(),
            seeds: 20,
            prompt_strategy: PromptStrategy::Ie,
            per_class_count: DEFAULT_PER_CLASS_COUNT,
            template: PromptTemplate::default(),
            provider_timeout_secs: 30,
            kernels: KernelSpec::standard_set(),
            preset: Preset::BasicLike,
            k: 10,
            d: 16,
            n_per_class: 100,
            intra_std: None,
            inter_sep: None,
            corrupt_fraction: 0.0,
            corrupt_mode: CorruptMode::OutlierShift,
            split: Split::Synthetic,
            paths: Paths::default(),
        }
    }
}

fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    value
        .trim()
        .parse()
        .map_err(|e| Error::InvalidParameter(format!("config key {key}: cannot parse {value:?}: {e}")))
}

fn parse_kernels(value: &str) -> Result<Vec<KernelSpec>> {
    value
        .split(',')
        .map(|s| s.trim().parse::<KernelSpec>())
        .collect()
}

impl RunConfig {
    /// Defaults overlaid with `path`, if given.
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let mut cfg = Self::default();
        if let Some(path) = path {
            let text = std::fs::read_to_string(path).map_err(|e| Error::Io {
                path: path.to_path_buf(),
                source: e,
            })?;
            cfg.apply_ini(&text)?;
        }
        Ok(cfg)
    }

    /// Applies every `key = value` line. `#`/`;` start comments and
    /// `[section]` headers only group keys; each key may appear once.
    pub fn apply_ini(&mut self, text: &str) -> Result<()> {
        let mut seen = std::collections::HashSet::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') || line.starts_with(';') {
                continue;
            }
            if line.starts_with('[') && line.ends_with(']') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::InvalidParameter(format!(
                    "config line {}: expected key = value, got {line:?}",
                    lineno + 1
                ))
            })?;
            let key = key.trim().replace('-', "_");
            if !seen.insert(key.clone()) {
                return Err(Error::InvalidParameter(format!("config key {key} set twice")));
            }
            self.set(&key, value)?;
        }
        Ok(())
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        match key {
            "seed" => self.seed = parse(key, v)?,
            "logit_scale" => self.logit_scale = Some(parse(key, v)?),
            "w" => self.w = parse(key, v)?,
            "strategy" => self.strategy = v.parse()?,
            "drop_fraction" => self.drop_fraction = parse(key, v)?,
            "ls_epsilon" => self.ls_epsilon = parse(key, v)?,
            "learning_rate" | "lr" => self.train.learning_rate = parse(key, v)?,
            "momentum" => self.train.momentum = parse(key, v)?,
            "weight_decay" => self.train.weight_decay = parse(key, v)?,
            "epochs" => self.train.epochs = parse(key, v)?,
            "batch_size" => self.train.batch_size = parse(key, v)?,
            "seeds" => self.seeds = parse(key, v)?,
            "prompt_strategy" => self.prompt_strategy = v.parse()?,
            "per_class_count" => self.per_class_count = parse(key, v)?,
            "template" => self.template.text = v.to_string(),
            "template_version" => self.template.version = v.to_string(),
            "provider_timeout_secs" => self.provider_timeout_secs = parse(key, v)?,
            "kernels" => self.kernels = parse_kernels(v)?,
            "preset" => self.preset = v.parse()?,
            "k" => self.k = parse(key, v)?,
            "d" => self.d = parse(key, v)?,
            "n_per_class" => self.n_per_class = parse(key, v)?,
            "intra_std" => self.intra_std = Some(parse(key, v)?),
            "inter_sep" => self.inter_sep = Some(parse(key, v)?),
            "corrupt_fraction" => self.corrupt_fraction = parse(key, v)?,
            "corrupt_mode" => self.corrupt_mode = v.parse()?,
            "split" => {
                self.split = v
                    .parse()
                    .map_err(|e: String| Error::InvalidParameter(format!("config key split: {e}")))?
            }
            "dataset" => {
                self.paths.dataset = v
                    .split(',')
                    .map(|p| PathBuf::from(p.trim()))
                    .filter(|p| !p.as_os_str().is_empty())
                    .collect()
            }
            "report" => self.paths.report = Some(v.into()),
            "plan" => self.paths.plan = Some(v.into()),
            "probe" => self.paths.probe = Some(v.into()),
            "init" => self.paths.init = Some(v.into()),
            "bank" => self.paths.bank = Some(v.into()),
            "classes" => self.paths.classes = Some(v.into()),
            "endpoint" => self.paths.endpoint = Some(v.to_string()),
            "out" => self.paths.out = Some(v.into()),
            _ => return Err(Error::InvalidParameter(format!("unknown config key {key:?}"))),
        }
        Ok(())
    }

    /// Checks every setting against the owning module's preconditions.
    pub fn validate(&self) -> Result<()> {
        if let Some(s) = self.logit_scale {
            if !(s > 0.0 && s.is_finite()) {
                return Err(Error::InvalidParameter(format!("logit scale must be > 0, got {s}")));
            }
        }
        // the upper bound (K-1)/K is checked once K is known
        if !(self.w > 0.0 && self.w < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "w must lie in (0, (K-1)/K), got {}",
                self.w
            )));
        }
        check_drop_fraction(self.drop_fraction)?;
        if !(self.ls_epsilon >= 0.0 && self.ls_epsilon < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "ls epsilon must lie in [0, (K-1)/K), got {}",
                self.ls_epsilon
            )));
        }
        self.train.validate()?;
        if self.seeds == 0 {
            return Err(Error::InvalidParameter("seeds must be >= 1".into()));
        }
        if self.per_class_count == 0 {
            return Err(Error::InvalidParameter("per-class count must be >= 1".into()));
        }
        if self.provider_timeout_secs == 0 {
            return Err(Error::InvalidParameter("provider timeout must be >= 1 s".into()));
        }
        for k in &self.kernels {
            k.validate()?;
        }
        if !(0.0..1.0).contains(&self.corrupt_fraction) {
            return Err(Error::InvalidParameter(format!(
                "corrupt fraction must lie in [0,1), got {}",
                self.corrupt_fraction
            )));
        }
        Ok(())
    }

    pub fn provider_timeout(&self) -> Duration {
        Duration::from_secs(self.provider_timeout_secs)
    }

    /// Effective settings relevant to `command`, echoed into its outputs.
    pub fn provenance(&self, command: &str) -> Provenance {
        let mut p = Provenance::new();
        let mut put = |k: &str, v: String| {
            p.insert(k.to_string(), v);
        };
        put("command", command.to_string());
        put("seed", self.seed.to_string());
        let train = |put: &mut dyn FnMut(&str, String)| {
            put("learning_rate", self.train.learning_rate.to_string());
            put("momentum", self.train.momentum.to_string());
            put("weight_decay", self.train.weight_decay.to_string());
            put("epochs", self.train.epochs.to_string());
            put("batch_size", self.train.batch_size.to_string());
        };
        match command {
            "gen-prompts" => {
                put("prompt_strategy", self.prompt_strategy.to_string());
                put("per_class_count", self.per_class_count.to_string());
                put("template", self.template.text.clone());
                put("template_version", self.template.version.clone());
            }
            "score" => {
                put("logit_scale", self.scoring_logit_scale().to_string());
                put("w", self.w.to_string());
            }
            "curate" => {
                put("strategy", self.strategy.to_string());
                put("w", self.w.to_string());
                put("drop_fraction", self.drop_fraction.to_string());
                put("ls_epsilon", self.ls_epsilon.to_string());
            }
            "train" => train(&mut put),
            "diagnose" => put(
                "kernels",
                self.kernels.iter().map(|k| k.to_string()).collect::<Vec<_>>().join(","),
            ),
            "simulate" => {
                put("preset", self.preset.to_string());
                put("k", self.k.to_string());
                put("d", self.d.to_string());
                put("n_per_class", self.n_per_class.to_string());
                let (std, sep) = self.geometry();
                put("intra_std", std.to_string());
                put("inter_sep", sep.to_string());
                put("corrupt_fraction", self.corrupt_fraction.to_string());
                put("corrupt_mode", self.corrupt_mode.to_string());
                put("split", self.split.to_string());
            }
            c if c.starts_with("experiment") => {
                put("logit_scale", self.experiment_logit_scale().to_string());
                put("seeds", self.seeds.to_string());
                put("w", self.w.to_string());
                put("ls_epsilon", self.ls_epsilon.to_string());
                put("drop_fraction", self.drop_fraction.to_string());
                train(&mut put);
            }
            _ => {}
        }
        let paths = &self.paths;
        if !paths.dataset.is_empty() {
            put(
                "dataset",
                paths
                    .dataset
                    .iter()
                    .map(|p| p.display().to_string())
                    .collect::<Vec<_>>()
                    .join(","),
            );
        }
        for (k, v) in [
            ("report", &paths.report),
            ("plan", &paths.plan),
            ("probe", &paths.probe),
            ("init", &paths.init),
            ("bank", &paths.bank),
            ("classes", &paths.classes),
        ] {
            if let Some(v) = v {
                put(k, v.display().to_string());
            }
        }
        if let Some(e) = &paths.endpoint {
            put("endpoint", e.clone());
        }
        p
    }

    pub fn scoring_logit_scale(&self) -> f64 {
        self.logit_scale.unwrap_or(DEFAULT_LOGIT_SCALE)
    }

    pub fn experiment_logit_scale(&self) -> f64 {
        self.logit_scale.unwrap_or(SIM_LOGIT_SCALE)
    }

    /// `(intra_std, inter_sep)` after preset fallback.
    pub fn geometry(&self) -> (f64, f64) {
        let (std, sep) = self.preset.geometry();
        (self.intra_std.unwrap_or(std), self.inter_sep.unwrap_or(sep))
    }
}
