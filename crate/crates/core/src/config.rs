//! Pipeline configuration.
//!
//! Values are layered: built-in defaults, then a TOML file, then
//! `SUBALIGN_<KEY>` environment variables, then command-line overrides.
//! Relative paths in the file are resolved against the file's directory.
//!
//! ```toml
//! source = "source.conll"
//! target = "target.txt"
//! lexicon = "lexicon.tsv"
//! vocab = "vocab.txt"
//! output_dir = "out"
//! label_space = ["PER", "LOC", "ORG"]
//! objective_mode = "conditional"
//! gamma = 0.1
//! seed = 13
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::corpus::LabelSpace;
use crate::error::{Error, Result};
use crate::estimate::{ObjectiveMode, SubwordCardinality, DEFAULT_ALPHA, DEFAULT_GAMMA};
use crate::segment::{DEFAULT_SEGMENTATION_CAP, DEFAULT_UNK};
use crate::sinkhorn::{SolverConfig, Stabilization};

pub const ENV_PREFIX: &str = "SUBALIGN_";

pub const ANNOTATED_TARGET_FILE: &str = "target.annotated.conll";
pub const POLICY_FILE: &str = "policy.jsonl";
pub const TRACE_FILE: &str = "solver_trace.csv";
pub const INSTANCE_STATS_FILE: &str = "instance_stats.json";
pub const INSTANCE_DUMP_FILE: &str = "instance.txt";
pub const RETOKENIZED_FILE: &str = "source.retok.conll";
pub const REPORT_JSON_FILE: &str = "kl_report.json";
pub const REPORT_TEXT_FILE: &str = "kl_report.txt";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    /// Labeled source corpus (CoNLL).
    pub source: Option<PathBuf>,
    /// Unlabeled target text, one sentence per line.
    pub target: Option<PathBuf>,
    pub lexicon: Option<PathBuf>,
    pub vocab: Option<PathBuf>,
    pub output_dir: PathBuf,
    /// Defaults to `<output_dir>/target.annotated.conll`.
    pub annotated_target: Option<PathBuf>,
    /// Defaults to `<output_dir>/policy.jsonl`.
    pub policy: Option<PathBuf>,
    /// Defaults to `<output_dir>/source.retok.conll`.
    pub retokenized: Option<PathBuf>,
    pub label_space: Vec<String>,
    pub objective_mode: ObjectiveMode,
    pub subword_cardinality: SubwordCardinality,
    pub gamma: f64,
    pub smoothing_alpha: f64,
    pub seg_cap: usize,
    pub tolerance: f64,
    pub max_iters: usize,
    pub stabilization: Stabilization,
    pub seed: u64,
    /// Number of sampled passes written by `retokenize`.
    pub epoch_seeds: usize,
    pub case_insensitive_lexicon: bool,
    pub repair_bio: bool,
    pub strict: bool,
    pub unk_token: String,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            source: None,
            target: None,
            lexicon: None,
            vocab: None,
            output_dir: PathBuf::from("out"),
            annotated_target: None,
            policy: None,
            retokenized: None,
            label_space: Vec::new(),
            objective_mode: ObjectiveMode::Conditional,
            subword_cardinality: SubwordCardinality::default(),
            gamma: DEFAULT_GAMMA,
            smoothing_alpha: DEFAULT_ALPHA,
            seg_cap: DEFAULT_SEGMENTATION_CAP,
            tolerance: 1e-8,
            max_iters: 10_000,
            stabilization: Stabilization::Auto,
            seed: 0,
            epoch_seeds: 1,
            case_insensitive_lexicon: false,
            repair_bio: false,
            strict: false,
            unk_token: DEFAULT_UNK.to_string(),
        }
    }
}

/// Keys accepted by [`PipelineConfig::set`], in file order.
pub const KEYS: &[&str] = &[
    "source",
    "target",
    "lexicon",
    "vocab",
    "output_dir",
    "annotated_target",
    "policy",
    "retokenized",
    "label_space",
    "objective_mode",
    "subword_cardinality",
    "gamma",
    "smoothing_alpha",
    "seg_cap",
    "tolerance",
    "max_iters",
    "stabilization",
    "seed",
    "epoch_seeds",
    "case_insensitive_lexicon",
    "repair_bio",
    "strict",
    "unk_token",
];

fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .trim()
        .parse()
        .map_err(|_| Error::Config(format!("invalid value `{value}` for `{key}`")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value.trim().to_ascii_lowercase().as_str() {
        "1" | "true" | "yes" | "on" => Ok(true),
        "0" | "false" | "no" | "off" => Ok(false),
        _ => Err(Error::Config(format!("invalid boolean `{value}` for `{key}`"))),
    }
}

impl PipelineConfig {
    /// Reads a TOML file. Relative paths inside it are anchored at the
    /// file's directory.
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
        let mut cfg = Self::from_toml(&text)?;
        if let Some(base) = path.parent() {
            cfg.anchor_paths(base);
        }
        Ok(cfg)
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.message().to_string()))
    }

    fn anchor_paths(&mut self, base: &Path) {
        let anchor = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        for p in [
            &mut self.source,
            &mut self.target,
            &mut self.lexicon,
            &mut self.vocab,
            &mut self.annotated_target,
            &mut self.policy,
            &mut self.retokenized,
        ]
        .into_iter()
        .flatten()
        {
            anchor(p);
        }
        anchor(&mut self.output_dir);
    }

    /// Sets one key from its string form. `label_space` takes a
    /// comma-separated list.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let path = || Some(PathBuf::from(value));
        match key {
            "source" => self.source = path(),
            "target" => self.target = path(),
            "lexicon" => self.lexicon = path(),
            "vocab" => self.vocab = path(),
            "output_dir" => self.output_dir = PathBuf::from(value),
            "annotated_target" => self.annotated_target = path(),
            "policy" => self.policy = path(),
            "retokenized" => self.retokenized = path(),
            "label_space" => {
                self.label_space = value
                    .split(',')
                    .map(str::trim)
                    .filter(|s| !s.is_empty())
                    .map(String::from)
                    .collect()
            }
            "objective_mode" => self.objective_mode = value.trim().parse()?,
            "subword_cardinality" => {
                self.subword_cardinality = match value.trim() {
                    "possible_subwords" => SubwordCardinality::PossibleSubwords,
                    "default_length" => SubwordCardinality::DefaultLength,
                    other => return Err(Error::Config(format!("unknown subword_cardinality `{other}`"))),
                }
            }
            "gamma" => self.gamma = parse(key, value)?,
            "smoothing_alpha" => self.smoothing_alpha = parse(key, value)?,
            "seg_cap" => self.seg_cap = parse(key, value)?,
            "tolerance" => self.tolerance = parse(key, value)?,
            "max_iters" => self.max_iters = parse(key, value)?,
            "stabilization" => self.stabilization = value.trim().parse()?,
            "seed" => self.seed = parse(key, value)?,
            "epoch_seeds" => self.epoch_seeds = parse(key, value)?,
            "case_insensitive_lexicon" => self.case_insensitive_lexicon = parse_bool(key, value)?,
            "repair_bio" => self.repair_bio = parse_bool(key, value)?,
            "strict" => self.strict = parse_bool(key, value)?,
            "unk_token" => self.unk_token = value.to_string(),
            other => return Err(Error::Config(format!("unknown config key `{other}`"))),
        }
        Ok(())
    }

    /// Applies `SUBALIGN_<KEY>` variables from the given lookup.
    pub fn apply_env_with(&mut self, lookup: impl Fn(&str) -> Option<String>) -> Result<()> {
        for key in KEYS {
            let var = format!("{ENV_PREFIX}{}", key.to_ascii_uppercase());
            if let Some(value) = lookup(&var) {
                self.set(key, &value)?;
            }
        }
        Ok(())
    }

    pub fn apply_env(&mut self) -> Result<()> {
        self.apply_env_with(|k| std::env::var(k).ok())
    }

    pub fn labels(&self) -> Result<LabelSpace> {
        LabelSpace::new(&self.label_space).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn solver(&self) -> SolverConfig {
        SolverConfig {
            gamma: self.gamma,
            max_iters: self.max_iters,
            tolerance: self.tolerance,
            stabilization: self.stabilization,
            record_trace: true,
        }
    }

    pub fn annotated_target_path(&self) -> PathBuf {
        self.annotated_target
            .clone()
            .unwrap_or_else(|| self.output_dir.join(ANNOTATED_TARGET_FILE))
    }

    pub fn policy_path(&self) -> PathBuf {
        self.policy.clone().unwrap_or_else(|| self.output_dir.join(POLICY_FILE))
    }

    /// Output of epoch `e`. A single pass is written to the plain file name;
    /// several passes get an `.e<N>` infix.
    pub fn retokenized_path_for(&self, epoch: usize) -> PathBuf {
        let base = self
            .retokenized
            .clone()
            .unwrap_or_else(|| self.output_dir.join(RETOKENIZED_FILE));
        if self.epoch_seeds <= 1 {
            return base;
        }
        let stem = base.file_stem().and_then(|s| s.to_str()).unwrap_or("retok");
        let ext = base.extension().and_then(|s| s.to_str()).unwrap_or("conll");
        base.with_file_name(format!("{stem}.e{epoch}.{ext}"))
    }

    /// Checks numeric ranges and the label space.
    pub fn validate_values(&self) -> Result<()> {
        self.labels()?;
        if !(self.gamma > 0.0 && self.gamma.is_finite()) {
            return Err(Error::NonPositiveGamma(self.gamma));
        }
        if !(self.smoothing_alpha >= 0.0 && self.smoothing_alpha.is_finite()) {
            return Err(Error::Config(format!("smoothing_alpha must be >= 0, got {}", self.smoothing_alpha)));
        }
        if self.seg_cap == 0 {
            return Err(Error::Config("seg_cap must be at least 1".into()));
        }
        if self.epoch_seeds == 0 {
            return Err(Error::Config("epoch_seeds must be at least 1".into()));
        }
        if self.unk_token.trim().is_empty() {
            return Err(Error::Config("unk_token must not be empty".into()));
        }
        self.solver().validate()
    }

    /// Fails with a config error unless `path` is set and names a file.
    pub fn require_file(&self, key: &str, path: Option<&Path>) -> Result<PathBuf> {
        let path = path.ok_or_else(|| Error::Config(format!("`{key}` is not set")))?;
        if !path.is_file() {
            return Err(Error::Config(format!("`{key}` file {} does not exist", path.display())));
        }
        Ok(path.to_path_buf())
    }
}
