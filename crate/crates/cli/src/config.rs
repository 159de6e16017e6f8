//! `key = value` run configuration. Later sources override earlier ones:
//! defaults, then the config file, then `--set` flags, then dedicated flags.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use anyhow::{anyhow, bail, Context, Result};
use kgdesc::{Metric, TrainConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InitMode {
    Random,
    Descriptions,
}

impl fmt::Display for InitMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            InitMode::Random => "random",
            InitMode::Descriptions => "descriptions",
        })
    }
}

impl FromStr for InitMode {
    type Err = anyhow::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "random" => Ok(InitMode::Random),
            "descriptions" => Ok(InitMode::Descriptions),
            other => bail!("init must be `random` or `descriptions`, got `{other}`"),
        }
    }
}

/// Split used for learning-curve snapshots and evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Valid,
    Test,
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Valid => "valid",
            Split::Test => "test",
        })
    }
}

impl FromStr for Split {
    type Err = anyhow::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "valid" => Ok(Split::Valid),
            "test" => Ok(Split::Test),
            other => bail!("split must be train, valid or test, got `{other}`"),
        }
    }
}

pub const KEYS: &[&str] = &[
    "lambda",
    "gamma",
    "k",
    "metric",
    "epochs",
    "batch_size",
    "seed",
    "eval_every",
    "init",
    "vectors_path",
    "descriptions_path",
    "remove_stopwords",
    "stopword_path",
    "pca_dim",
    "case_fold",
    "train_path",
    "valid_path",
    "test_path",
    "curve_split",
    "curve_sample",
    "patience",
    "save_snapshots",
];

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub lambda: f64,
    pub gamma: f64,
    pub k: usize,
    pub metric: Metric,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub eval_every: usize,
    pub init: InitMode,
    pub vectors_path: Option<PathBuf>,
    pub descriptions_path: Option<PathBuf>,
    pub remove_stopwords: bool,
    pub stopword_path: Option<PathBuf>,
    /// Defaults to `k` when unset.
    pub pca_dim: Option<usize>,
    pub case_fold: bool,
    pub train_path: Option<PathBuf>,
    pub valid_path: Option<PathBuf>,
    pub test_path: Option<PathBuf>,
    pub curve_split: Split,
    pub curve_sample: usize,
    /// Validation-mean-rank early stopping, in epochs; 0 disables it.
    pub patience: usize,
    pub save_snapshots: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        let t = TrainConfig::default();
        RunConfig {
            lambda: t.learning_rate,
            gamma: t.margin,
            k: 50,
            metric: Metric::L1,
            epochs: t.epochs,
            batch_size: t.batch_size,
            seed: t.seed,
            eval_every: t.eval_every,
            init: InitMode::Random,
            vectors_path: None,
            descriptions_path: None,
            remove_stopwords: false,
            stopword_path: None,
            pca_dim: None,
            case_fold: true,
            train_path: None,
            valid_path: None,
            test_path: None,
            curve_split: Split::Train,
            curve_sample: 1000,
            patience: 0,
            save_snapshots: false,
        }
    }
}

fn parse_value<T: FromStr>(key: &str, value: &str) -> Result<T>
where
    T::Err: fmt::Display,
{
    value
        .parse()
        .map_err(|e| anyhow!("invalid value `{value}` for `{key}`: {e}"))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value.to_ascii_lowercase().as_str() {
        "true" | "yes" | "1" | "on" => Ok(true),
        "false" | "no" | "0" | "off" => Ok(false),
        _ => bail!("invalid boolean `{value}` for `{key}`"),
    }
}

/// Splits `key = value`, trimming both sides.
pub fn split_assignment(text: &str) -> Result<(&str, &str)> {
    let (k, v) = text
        .split_once('=')
        .ok_or_else(|| anyhow!("expected `key = value`, got `{text}`"))?;
    let (k, v) = (k.trim(), v.trim());
    if k.is_empty() {
        bail!("missing key in `{text}`");
    }
    Ok((k, v))
}

impl RunConfig {
    /// Applies one assignment. Relative paths are resolved against `base`.
    pub fn set(&mut self, key: &str, value: &str, base: Option<&Path>) -> Result<()> {
        let path = |v: &str| -> Option<PathBuf> {
            if v.is_empty() {
                return None;
            }
            let p = PathBuf::from(v);
            Some(match base {
                Some(b) if p.is_relative() => b.join(p),
                _ => p,
            })
        };
        match key {
            "lambda" => self.lambda = parse_value(key, value)?,
            "gamma" => self.gamma = parse_value(key, value)?,
            "k" => self.k = parse_value(key, value)?,
            "metric" => self.metric = parse_value(key, value)?,
            "epochs" => self.epochs = parse_value(key, value)?,
            "batch_size" => self.batch_size = parse_value(key, value)?,
            "seed" => self.seed = parse_value(key, value)?,
            "eval_every" => self.eval_every = parse_value(key, value)?,
            "init" => self.init = value.parse()?,
            "vectors_path" => self.vectors_path = path(value),
            "descriptions_path" => self.descriptions_path = path(value),
            "remove_stopwords" => self.remove_stopwords = parse_bool(key, value)?,
            "stopword_path" => self.stopword_path = path(value),
            "pca_dim" => {
                self.pca_dim = if value.is_empty() {
                    None
                } else {
                    Some(parse_value(key, value)?)
                }
            }
            "case_fold" => self.case_fold = parse_bool(key, value)?,
            "train_path" => self.train_path = path(value),
            "valid_path" => self.valid_path = path(value),
            "test_path" => self.test_path = path(value),
            "curve_split" => self.curve_split = value.parse()?,
            "curve_sample" => self.curve_sample = parse_value(key, value)?,
            "patience" => self.patience = parse_value(key, value)?,
            "save_snapshots" => self.save_snapshots = parse_bool(key, value)?,
            other => bail!(
                "unknown config key `{other}` (known keys: {})",
                KEYS.join(", ")
            ),
        }
        Ok(())
    }

    /// Applies a config file's contents. `#` starts a comment line.
    pub fn apply_text(&mut self, text: &str, source: &Path, base: Option<&Path>) -> Result<()> {
        let mut seen = BTreeMap::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let ctx = || format!("{}:{}", source.display(), i + 1);
            let (key, value) = split_assignment(line).with_context(ctx)?;
            if let Some(prev) = seen.insert(key.to_string(), i + 1) {
                bail!("{}: `{key}` already set on line {prev}", ctx());
            }
            self.set(key, value, base).with_context(ctx)?;
        }
        Ok(())
    }

    /// Reads a config file; relative paths inside it resolve against its directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("cannot read config {}", path.display()))?;
        let mut cfg = RunConfig::default();
        cfg.apply_text(&text, path, path.parent())?;
        Ok(cfg)
    }

    pub fn pca_dim(&self) -> usize {
        self.pca_dim.unwrap_or(self.k)
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            learning_rate: self.lambda,
            margin: self.gamma,
            epochs: self.epochs,
            batch_size: self.batch_size,
            seed: self.seed,
            eval_every: self.eval_every,
        }
    }

    pub fn dataset_paths(&self) -> Result<(&Path, &Path, &Path)> {
        fn need<'a>(p: &'a Option<PathBuf>, key: &str) -> Result<&'a Path> {
            p.as_deref()
                .ok_or_else(|| anyhow!("config error: `{key}` is not set"))
        }
        Ok((
            need(&self.train_path, "train_path")?,
            need(&self.valid_path, "valid_path")?,
            need(&self.test_path, "test_path")?,
        ))
    }

    /// Checks everything that can be checked without reading inputs.
    pub fn validate(&self) -> Result<()> {
        self.train_config()
            .validate()
            .map_err(|e| anyhow!("config error: {e}"))?;
        if self.k == 0 {
            bail!("config error: k must be positive");
        }
        if self.init == InitMode::Descriptions {
            self.require_description_inputs()?;
            if self.pca_dim() != self.k {
                bail!(
                    "config error: pca_dim {} must equal k {} when training from descriptions",
                    self.pca_dim(),
                    self.k
                );
            }
        }
        if self.curve_sample == 0 {
            bail!("config error: curve_sample must be positive");
        }
        Ok(())
    }

    pub fn require_description_inputs(&self) -> Result<(&Path, &Path)> {
        let descriptions = self.descriptions_path.as_deref().ok_or_else(|| {
            anyhow!("config error: descriptions initialization needs `descriptions_path`")
        })?;
        let vectors = self.vectors_path.as_deref().ok_or_else(|| {
            anyhow!("config error: descriptions initialization needs `vectors_path`")
        })?;
        Ok((descriptions, vectors))
    }

    /// Resolved values of every key, for manifests.
    pub fn snapshot(&self) -> BTreeMap<String, String> {
        let p = |v: &Option<PathBuf>| {
            v.as_ref()
                .map(|p| p.display().to_string())
                .unwrap_or_default()
        };
        let mut m = BTreeMap::new();
        let mut put = |k: &str, v: String| {
            m.insert(k.to_string(), v);
        };
        put("lambda", format!("{:?}", self.lambda));
        put("gamma", format!("{:?}", self.gamma));
        put("k", self.k.to_string());
        put("metric", self.metric.to_string());
        put("epochs", self.epochs.to_string());
        put("batch_size", self.batch_size.to_string());
        put("seed", self.seed.to_string());
        put("eval_every", self.eval_every.to_string());
        put("init", self.init.to_string());
        put("vectors_path", p(&self.vectors_path));
        put("descriptions_path", p(&self.descriptions_path));
        put("remove_stopwords", self.remove_stopwords.to_string());
        put("stopword_path", p(&self.stopword_path));
        put("pca_dim", self.pca_dim().to_string());
        put("case_fold", self.case_fold.to_string());
        put("train_path", p(&self.train_path));
        put("valid_path", p(&self.valid_path));
        put("test_path", p(&self.test_path));
        put("curve_split", self.curve_split.to_string());
        put("curve_sample", self.curve_sample.to_string());
        put("patience", self.patience.to_string());
        put("save_snapshots", self.save_snapshots.to_string());
        m
    }
}
