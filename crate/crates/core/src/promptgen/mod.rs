//! Prompt manifests for external text-to-video generators.
//!
//! A description bank holds, per class, environment and character
//! descriptions. A manifest enumerates composed prompts per class: for IE,
//! every `(env, char)` pair in row-major order (env outer), cycled with a
//! replicate counter until the per-class count is reached, each with its
//! own generator seed.

mod provider;

use std::fmt;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use indexmap::IndexMap;
use rand::RngCore;
use serde::{Deserialize, Serialize};

pub use provider::{
    fetch_bank, fetch_descriptions, DescriptionKind, DescriptionProvider, FileProvider,
    HttpProvider, CHAR_REQUEST_TEMPLATE, ENV_REQUEST_TEMPLATE, TOKEN_ENV_VAR,
};

use crate::dataset::ClassCatalog;
use crate::error::{Error, Result};
use crate::rng::{stream_rng, Stream};
use crate::Provenance;

pub const CANONICAL_ENV_COUNT: usize = 4;
pub const CANONICAL_CHAR_COUNT: usize = 16;
pub const DEFAULT_PER_CLASS_COUNT: usize = 128;
/// Sampling steps for the downstream generator, carried as metadata.
pub const DEFAULT_INFERENCE_STEPS: usize = 50;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PromptStrategy {
    Basic,
    Env,
    Cha,
    #[serde(rename = "IE")]
    Ie,
}

impl PromptStrategy {
    pub fn needs_env(self) -> bool {
        matches!(self, PromptStrategy::Env | PromptStrategy::Ie)
    }

    pub fn needs_char(self) -> bool {
        matches!(self, PromptStrategy::Cha | PromptStrategy::Ie)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            PromptStrategy::Basic => "Basic",
            PromptStrategy::Env => "Env",
            PromptStrategy::Cha => "Cha",
            PromptStrategy::Ie => "IE",
        }
    }
}

impl fmt::Display for PromptStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PromptStrategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        [
            PromptStrategy::Basic,
            PromptStrategy::Env,
            PromptStrategy::Cha,
            PromptStrategy::Ie,
        ]
        .into_iter()
        .find(|p| p.as_str().eq_ignore_ascii_case(s))
        .ok_or_else(|| Error::param(format!("unknown prompt strategy {s:?} (Basic, Env, Cha, IE)")))
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassDescriptions {
    #[serde(default)]
    pub env: Vec<String>,
    #[serde(default)]
    pub char: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum BankSource {
    File(PathBuf),
    Provider(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DescriptionBank {
    pub classes: IndexMap<String, ClassDescriptions>,
    pub source: BankSource,
}

impl DescriptionBank {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let classes: IndexMap<String, ClassDescriptions> = serde_json::from_str(&text)?;
        Ok(Self {
            classes,
            source: BankSource::File(path.to_path_buf()),
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut json = serde_json::to_vec_pretty(&self.classes)?;
        json.push(b'\n');
        fs::write(path, json).map_err(|e| Error::io(path, e))
    }

    /// Catalog in bank order.
    pub fn catalog(&self) -> Result<ClassCatalog> {
        ClassCatalog::new(self.classes.keys().cloned())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BankWarning {
    pub class_name: String,
    pub message: String,
}

impl fmt::Display for BankWarning {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "class {:?}: {}", self.class_name, self.message)
    }
}

fn check_list(class: &str, kind: &str, list: &[String]) -> Result<()> {
    for (i, entry) in list.iter().enumerate() {
        if entry.trim().is_empty() {
            return Err(Error::Bank(format!("class {class:?}: {kind} entry {i} is empty")));
        }
        if list[..i].contains(entry) {
            return Err(Error::Bank(format!(
                "class {class:?}: duplicate {kind} entry {entry:?}"
            )));
        }
    }
    Ok(())
}

/// Checks that every catalog class has the descriptions `strategy` needs.
/// Counts other than 4 env / 16 char produce warnings, not errors.
pub fn validate_bank(
    bank: &DescriptionBank,
    catalog: &ClassCatalog,
    strategy: PromptStrategy,
) -> Result<Vec<BankWarning>> {
    let mut warnings = Vec::new();
    for (name, desc) in &bank.classes {
        check_list(name, "env", &desc.env)?;
        check_list(name, "char", &desc.char)?;
    }
    if strategy == PromptStrategy::Basic {
        return Ok(warnings);
    }
    for name in catalog.names() {
        let desc = bank
            .classes
            .get(name)
            .ok_or_else(|| Error::Bank(format!("missing class {name:?}")))?;
        let mut check = |needed: bool, kind: &str, n: usize, canonical: usize| -> Result<()> {
            if !needed {
                return Ok(());
            }
            if n == 0 {
                return Err(Error::Bank(format!("class {name:?} has no {kind} descriptions")));
            }
            if n != canonical {
                warnings.push(BankWarning {
                    class_name: name.clone(),
                    message: format!("non-canonical {kind} count {n} (expected {canonical})"),
                });
            }
            Ok(())
        };
        check(strategy.needs_env(), "env", desc.env.len(), CANONICAL_ENV_COUNT)?;
        check(strategy.needs_char(), "char", desc.char.len(), CANONICAL_CHAR_COUNT)?;
    }
    Ok(warnings)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptTemplate {
    pub version: String,
    pub text: String,
}

impl Default for PromptTemplate {
    fn default() -> Self {
        Self {
            version: "action-v1".into(),
            text: "A video of a person {action}. {character} {environment}".into(),
        }
    }
}

const SLOTS: [&str; 3] = ["action", "environment", "character"];

enum Piece<'a> {
    Text(&'a str),
    Slot(&'a str),
}

fn parse_template(text: &str) -> Result<Vec<Piece<'_>>> {
    let mut pieces = Vec::new();
    let mut rest = text;
    while let Some(open) = rest.find(['{', '}']) {
        if rest.as_bytes()[open] == b'}' {
            return Err(Error::Template(format!("unbalanced '}}' in {text:?}")));
        }
        pieces.push(Piece::Text(&rest[..open]));
        let close = rest[open..]
            .find('}')
            .ok_or_else(|| Error::Template(format!("unclosed slot in {text:?}")))?;
        let name = &rest[open + 1..open + close];
        if !SLOTS.contains(&name) {
            return Err(Error::Template(format!("unknown slot {{{name}}}")));
        }
        pieces.push(Piece::Slot(name));
        rest = &rest[open + close + 1..];
    }
    pieces.push(Piece::Text(rest));
    if !pieces.iter().any(|p| matches!(p, Piece::Slot("action"))) {
        return Err(Error::Template("template has no {action} slot".into()));
    }
    Ok(pieces)
}

/// Substitutes `{action}`, `{environment}` and `{character}`; slots the
/// strategy does not use become empty and whitespace is collapsed.
pub fn compose_prompt(
    class_name: &str,
    strategy: PromptStrategy,
    env: Option<&str>,
    character: Option<&str>,
    template: &PromptTemplate,
) -> Result<String> {
    let pieces = parse_template(&template.text)?;
    match (strategy.needs_env(), env) {
        (true, None) => return Err(Error::Template(format!("{strategy} needs an environment"))),
        (false, Some(_)) => {
            return Err(Error::Template(format!("{strategy} takes no environment")))
        }
        _ => {}
    }
    match (strategy.needs_char(), character) {
        (true, None) => return Err(Error::Template(format!("{strategy} needs a character"))),
        (false, Some(_)) => return Err(Error::Template(format!("{strategy} takes no character"))),
        _ => {}
    }
    let mut out = String::new();
    for piece in pieces {
        out.push_str(match piece {
            Piece::Text(t) => t,
            Piece::Slot("action") => class_name,
            Piece::Slot("environment") => env.unwrap_or_default(),
            Piece::Slot(_) => character.unwrap_or_default(),
        });
    }
    Ok(out.split_whitespace().collect::<Vec<_>>().join(" "))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptRecord {
    pub class_name: String,
    pub strategy: PromptStrategy,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub env_index: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub char_index: Option<usize>,
    pub replicate: usize,
    pub seed: u64,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestHeader {
    pub strategy: PromptStrategy,
    pub per_class_count: usize,
    pub template_version: String,
    pub seed: u64,
    pub inference_steps: usize,
    pub num_records: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config: Option<Provenance>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptManifest {
    pub strategy: PromptStrategy,
    pub per_class_count: usize,
    pub template_version: String,
    pub seed: u64,
    pub records: Vec<PromptRecord>,
}

pub fn build_manifest(
    catalog: &ClassCatalog,
    bank: &DescriptionBank,
    strategy: PromptStrategy,
    per_class_count: usize,
    seed: u64,
    template: &PromptTemplate,
) -> Result<PromptManifest> {
    if per_class_count < 1 {
        return Err(Error::param("per-class count must be >= 1"));
    }
    validate_bank(bank, catalog, strategy)?;
    let mut rng = stream_rng(seed, Stream::ManifestSeeds);
    let mut records = Vec::with_capacity(catalog.len() * per_class_count);
    let empty = ClassDescriptions::default();
    for name in catalog.names() {
        let desc = bank.classes.get(name).unwrap_or(&empty);
        let envs: Vec<Option<usize>> = if strategy.needs_env() {
            (0..desc.env.len()).map(Some).collect()
        } else {
            vec![None]
        };
        let chars: Vec<Option<usize>> = if strategy.needs_char() {
            (0..desc.char.len()).map(Some).collect()
        } else {
            vec![None]
        };
        let pairs: Vec<(Option<usize>, Option<usize>)> = envs
            .iter()
            .flat_map(|&e| chars.iter().map(move |&c| (e, c)))
            .collect();
        for r in 0..per_class_count {
            let (env_index, char_index) = pairs[r % pairs.len()];
            let text = compose_prompt(
                name,
                strategy,
                env_index.map(|i| desc.env[i].as_str()),
                char_index.map(|i| desc.char[i].as_str()),
                template,
            )?;
            records.push(PromptRecord {
                class_name: name.clone(),
                strategy,
                env_index,
                char_index,
                replicate: r / pairs.len(),
                seed: rng.next_u64(),
                text,
            });
        }
    }
    Ok(PromptManifest {
        strategy,
        per_class_count,
        template_version: template.version.clone(),
        seed,
        records,
    })
}

/// Sidecar holding manifest-level metadata next to `path`.
pub fn manifest_meta_path(path: &Path) -> PathBuf {
    let mut name = path.file_name().unwrap_or_default().to_os_string();
    name.push(".meta.json");
    path.with_file_name(name)
}

/// JSON Lines, one record per line; metadata and config go to the sidecar.
pub fn write_manifest_jsonl(
    manifest: &PromptManifest,
    path: &Path,
    provenance: Option<&Provenance>,
) -> Result<()> {
    let header = ManifestHeader {
        strategy: manifest.strategy,
        per_class_count: manifest.per_class_count,
        template_version: manifest.template_version.clone(),
        seed: manifest.seed,
        inference_steps: DEFAULT_INFERENCE_STEPS,
        num_records: manifest.records.len(),
        config: provenance.cloned(),
    };
    let mut buf = Vec::new();
    for r in &manifest.records {
        serde_json::to_writer(&mut buf, r)?;
        buf.push(b'\n');
    }
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&buf).map_err(|e| Error::io(path, e))?;
    let meta = manifest_meta_path(path);
    let mut json = serde_json::to_vec_pretty(&header)?;
    json.push(b'\n');
    fs::write(&meta, json).map_err(|e| Error::io(&meta, e))
}

pub fn read_manifest_jsonl(path: &Path) -> Result<PromptManifest> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let records = text
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(serde_json::from_str)
        .collect::<std::result::Result<Vec<PromptRecord>, _>>()?;
    let meta = manifest_meta_path(path);
    let h: ManifestHeader = match fs::read_to_string(&meta) {
        Ok(t) => serde_json::from_str(&t)?,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
            let first = records
                .first()
                .ok_or_else(|| Error::Format("empty manifest without metadata".into()))?;
            let per_class = records
                .iter()
                .filter(|r| r.class_name == first.class_name)
                .count();
            ManifestHeader {
                strategy: first.strategy,
                per_class_count: per_class,
                template_version: String::new(),
                seed: 0,
                inference_steps: DEFAULT_INFERENCE_STEPS,
                num_records: records.len(),
                config: None,
            }
        }
        Err(e) => return Err(Error::io(&meta, e)),
    };
    if records.len() != h.num_records {
        return Err(Error::Format(format!(
            "manifest metadata declares {} records, found {}",
            h.num_records,
            records.len()
        )));
    }
    Ok(PromptManifest {
        strategy: h.strategy,
        per_class_count: h.per_class_count,
        template_version: h.template_version,
        seed: h.seed,
        records,
    })
}
