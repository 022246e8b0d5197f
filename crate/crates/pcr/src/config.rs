//! Pipeline configuration.
//!
//! Values come from four layers, later ones winning: built-in defaults, a
//! `key = value` file (`#` starts a comment), `PCR_<KEY>` environment
//! variables, and command-line flags. Keys are the field names below.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use pcr_core::dataset::Necessity;
use pcr_core::metrics::RecallMode;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::{PcrError, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Backend {
    Builtin,
    Remote(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum EvalSplit {
    Train,
    Validation,
    Test,
    All,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PipelineConfig {
    pub dump: PathBuf,
    pub knowledge: Option<PathBuf>,
    /// Token list of the backend model, one per line, for term gating.
    pub vocab_file: Option<PathBuf>,
    pub corpus_dir: PathBuf,
    pub checkpoint_dir: PathBuf,
    pub report_dir: PathBuf,
    pub questions_only: bool,
    pub necessity_threshold: i64,
    pub rare_tag_theta: usize,
    pub max_len: usize,
    pub prefix_len: usize,
    pub code_len: usize,
    pub tag_masks: usize,
    pub knowledge_oov_gate: bool,
    pub knowledge_tag_seed: bool,
    pub backend: Backend,
    pub remote_attempts: u32,
    pub remote_timeout_secs: u64,
    pub embedding_dim: usize,
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub weight_decay: f64,
    pub seed: u64,
    pub top_k: usize,
    pub verbalizer: BTreeMap<String, Necessity>,
    pub ks: Vec<usize>,
    pub folds: usize,
    pub fold: usize,
    pub eval_split: EvalSplit,
    pub cross_validate: bool,
    pub recall_mode: RecallMode,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            dump: PathBuf::from("Posts.xml"),
            knowledge: None,
            vocab_file: None,
            corpus_dir: PathBuf::from("pcr-out"),
            checkpoint_dir: PathBuf::from("pcr-out"),
            report_dir: PathBuf::from("pcr-out"),
            questions_only: true,
            necessity_threshold: pcr_core::dataset::DEFAULT_NECESSITY_THRESHOLD,
            rare_tag_theta: pcr_core::dataset::DEFAULT_RARE_TAG_THRESHOLD,
            max_len: pcr_core::prompt::DEFAULT_MAX_LEN,
            prefix_len: pcr_core::knowledge::DEFAULT_PREFIX_LEN,
            code_len: pcr_core::codegraph::DEFAULT_CODE_LENGTH,
            tag_masks: pcr_core::prompt::DEFAULT_TAG_MASKS,
            knowledge_oov_gate: true,
            knowledge_tag_seed: true,
            backend: Backend::Builtin,
            remote_attempts: 3,
            remote_timeout_secs: 30,
            embedding_dim: pcr_core::model::DEFAULT_EMBEDDING_DIM,
            learning_rate: 1e-5,
            epochs: 6,
            batch_size: 4,
            weight_decay: 0.0,
            seed: 0,
            top_k: 20,
            verbalizer: pcr_core::answer::default_verbalizer(),
            ks: pcr_core::metrics::DEFAULT_KS.to_vec(),
            folds: pcr_core::dataset::DEFAULT_FOLDS,
            fold: 0,
            eval_split: EvalSplit::Test,
            cross_validate: false,
            recall_mode: RecallMode::AsPrinted,
        }
    }
}

fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    value
        .parse()
        .map_err(|e: T::Err| PcrError::config(key, format!("{value:?}: {e}")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value.to_ascii_lowercase().as_str() {
        "1" | "true" | "yes" | "on" => Ok(true),
        "0" | "false" | "no" | "off" => Ok(false),
        _ => Err(PcrError::config(key, format!("{value:?} is not a boolean"))),
    }
}

fn optional_path(value: &str) -> Option<PathBuf> {
    (!value.is_empty()).then(|| PathBuf::from(value))
}

impl PipelineConfig {
    pub const KEYS: [&'static str; 35] = [
        "dump",
        "knowledge",
        "vocab_file",
        "out_dir",
        "corpus_dir",
        "checkpoint_dir",
        "report_dir",
        "questions_only",
        "necessity_threshold",
        "rare_tag_theta",
        "max_len",
        "prefix_len",
        "code_len",
        "tag_masks",
        "knowledge_oov_gate",
        "knowledge_tag_seed",
        "backend",
        "remote_attempts",
        "remote_timeout_secs",
        "embedding_dim",
        "learning_rate",
        "epochs",
        "batch_size",
        "weight_decay",
        "seed",
        "top_k",
        "verbalizer",
        "ks",
        "folds",
        "fold",
        "eval_split",
        "cross_validate",
        "recall_mode",
        "jobs",
        "json_logs",
    ];

    /// Sets one key from its text form. `out_dir` sets all three output
    /// directories at once. `jobs` and `json_logs` are read by the binary.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        match key {
            "dump" => self.dump = PathBuf::from(v),
            "knowledge" => self.knowledge = optional_path(v),
            "vocab_file" => self.vocab_file = optional_path(v),
            "out_dir" => {
                self.corpus_dir = PathBuf::from(v);
                self.checkpoint_dir = PathBuf::from(v);
                self.report_dir = PathBuf::from(v);
            }
            "corpus_dir" => self.corpus_dir = PathBuf::from(v),
            "checkpoint_dir" => self.checkpoint_dir = PathBuf::from(v),
            "report_dir" => self.report_dir = PathBuf::from(v),
            "questions_only" => self.questions_only = parse_bool(key, v)?,
            "necessity_threshold" => self.necessity_threshold = parse(key, v)?,
            "rare_tag_theta" => self.rare_tag_theta = parse(key, v)?,
            "max_len" => self.max_len = parse(key, v)?,
            "prefix_len" => self.prefix_len = parse(key, v)?,
            "code_len" => self.code_len = parse(key, v)?,
            "tag_masks" => self.tag_masks = parse(key, v)?,
            "knowledge_oov_gate" => self.knowledge_oov_gate = parse_bool(key, v)?,
            "knowledge_tag_seed" => self.knowledge_tag_seed = parse_bool(key, v)?,
            "backend" => {
                self.backend = match v {
                    "builtin" => Backend::Builtin,
                    url if url.starts_with("http://") || url.starts_with("https://") => Backend::Remote(url.into()),
                    _ => return Err(PcrError::config(key, "expected `builtin` or an http(s) URL")),
                }
            }
            "remote_attempts" => self.remote_attempts = parse(key, v)?,
            "remote_timeout_secs" => self.remote_timeout_secs = parse(key, v)?,
            "embedding_dim" => self.embedding_dim = parse(key, v)?,
            "learning_rate" => self.learning_rate = parse(key, v)?,
            "epochs" => self.epochs = parse(key, v)?,
            "batch_size" => self.batch_size = parse(key, v)?,
            "weight_decay" => self.weight_decay = parse(key, v)?,
            "seed" => self.seed = parse(key, v)?,
            "top_k" => self.top_k = parse(key, v)?,
            "verbalizer" => {
                let mut map = BTreeMap::new();
                for pair in v.split(',').filter(|p| !p.trim().is_empty()) {
                    let (token, label) = pair
                        .split_once('=')
                        .ok_or_else(|| PcrError::config(key, format!("{pair:?} is not token=label")))?;
                    let label = match label.trim() {
                        "necessary" => Necessity::Necessary,
                        "unnecessary" => Necessity::Unnecessary,
                        other => return Err(PcrError::config(key, format!("unknown label {other:?}"))),
                    };
                    map.insert(token.trim().to_lowercase(), label);
                }
                self.verbalizer = map;
            }
            "ks" => {
                self.ks = v
                    .split(',')
                    .map(|k| parse(key, k.trim()))
                    .collect::<Result<Vec<usize>>>()?;
                self.ks.sort_unstable();
                self.ks.dedup();
            }
            "folds" => self.folds = parse(key, v)?,
            "fold" => self.fold = parse(key, v)?,
            "eval_split" => {
                self.eval_split = match v {
                    "train" => EvalSplit::Train,
                    "validation" => EvalSplit::Validation,
                    "test" => EvalSplit::Test,
                    "all" => EvalSplit::All,
                    _ => return Err(PcrError::config(key, "expected train, validation, test or all")),
                }
            }
            "cross_validate" => self.cross_validate = parse_bool(key, v)?,
            "recall_mode" => {
                self.recall_mode = match v {
                    "as_printed" => RecallMode::AsPrinted,
                    "conventional" => RecallMode::Conventional,
                    _ => return Err(PcrError::config(key, "expected as_printed or conventional")),
                }
            }
            "jobs" | "json_logs" => {}
            _ => return Err(PcrError::config(key, "unknown key")),
        }
        Ok(())
    }

    /// Parses `key = value` lines.
    pub fn parse_file(text: &str) -> Result<Vec<(String, String)>> {
        let mut pairs = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| PcrError::config(format!("line {}", i + 1), "expected key = value"))?;
            pairs.push((k.trim().to_string(), v.trim().to_string()));
        }
        Ok(pairs)
    }

    /// `PCR_*` variables from `vars`, with the key lowercased.
    pub fn env_pairs(vars: impl IntoIterator<Item = (String, String)>) -> Vec<(String, String)> {
        let mut pairs: Vec<(String, String)> = vars
            .into_iter()
            .filter_map(|(k, v)| k.strip_prefix("PCR_").map(|k| (k.to_ascii_lowercase(), v)))
            .collect();
        pairs.sort();
        pairs
    }

    /// Resolves the layers in precedence order and validates the result.
    pub fn resolve(
        file: Option<&Path>,
        env: Vec<(String, String)>,
        flags: Vec<(String, String)>,
    ) -> Result<(PipelineConfig, BTreeMap<String, String>)> {
        let mut layered = BTreeMap::new();
        let mut cfg = PipelineConfig::default();
        let mut apply = |pairs: Vec<(String, String)>, cfg: &mut PipelineConfig| -> Result<()> {
            for (k, v) in pairs {
                cfg.set(&k, &v)?;
                layered.insert(k, v);
            }
            Ok(())
        };
        if let Some(path) = file {
            let text = std::fs::read_to_string(path).map_err(|e| match e.kind() {
                std::io::ErrorKind::NotFound => PcrError::MissingInput { path: path.into() },
                _ => PcrError::io(path, e),
            })?;
            apply(Self::parse_file(&text)?, &mut cfg)?;
        }
        apply(env, &mut cfg)?;
        apply(flags, &mut cfg)?;
        cfg.validate()?;
        Ok((cfg, layered))
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("max_len", self.max_len),
            ("prefix_len", self.prefix_len),
            ("code_len", self.code_len),
            ("tag_masks", self.tag_masks),
            ("rare_tag_theta", self.rare_tag_theta),
            ("embedding_dim", self.embedding_dim),
            ("batch_size", self.batch_size),
            ("top_k", self.top_k),
            ("remote_attempts", self.remote_attempts as usize),
        ];
        for (field, v) in positive {
            if v == 0 {
                return Err(PcrError::config(field, "must be positive"));
            }
        }
        if self.necessity_threshold < 0 {
            return Err(PcrError::config("necessity_threshold", "must be non-negative"));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(PcrError::config("learning_rate", "must be a positive number"));
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return Err(PcrError::config("weight_decay", "must be a non-negative number"));
        }
        if self.folds < 2 {
            return Err(PcrError::config("folds", "need at least 2"));
        }
        if self.fold >= self.folds {
            return Err(PcrError::config("fold", format!("must be below folds ({})", self.folds)));
        }
        if self.ks.is_empty() || self.ks.contains(&0) {
            return Err(PcrError::config("ks", "need one or more positive values"));
        }
        if self.verbalizer.is_empty() {
            return Err(PcrError::config("verbalizer", "must not be empty"));
        }
        let template_len = pcr_core::prompt::build_template(self.tag_masks)?.len();
        if self.max_len < template_len + 3 + self.prefix_len {
            return Err(PcrError::config(
                "max_len",
                format!("too small for the template, specials and {} prefix slots", self.prefix_len),
            ));
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("config serializes");
        hex::encode(Sha256::digest(json))
    }
}
