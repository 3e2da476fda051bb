//! Flat `key = value` run configuration. Later sources override earlier
//! ones: defaults, then the config file, then `--set`, then explicit flags.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use symreg::casestudy::CaseStudyConfig;
use symreg::corpus::{builtin_templates, load_templates, EquationTemplate};
use symreg::datagen::{DatasetConfig, InputScaling, NoiseSchedule};
use symreg::fit::FitConfig;
use symreg::train::TrainConfig;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("line {line}: expected `key = value`")]
    Syntax { line: usize },
    #[error("unknown key `{0}`")]
    UnknownKey(String),
    #[error("bad value `{value}` for `{key}`: {reason}")]
    BadValue {
        key: String,
        value: String,
        reason: String,
    },
    #[error("reading {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub enum CorpusSource {
    Builtin,
    File(PathBuf),
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub corpus: CorpusSource,
    pub seed: u64,
    pub data: DatasetConfig,
    pub val_fraction: f64,
    pub train: TrainConfig,
    pub fit: FitConfig,
    pub casestudy: CaseStudyConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        let data = DatasetConfig::default();
        RunConfig {
            corpus: CorpusSource::Builtin,
            seed: data.seed,
            data,
            val_fraction: 0.1,
            train: TrainConfig::default(),
            fit: FitConfig::default(),
            casestudy: CaseStudyConfig::default(),
        }
    }
}

pub const KEYS: &[&str] = &[
    "corpus",
    "seed",
    "data.pairs",
    "data.seq_len",
    "data.max_var",
    "data.max_param",
    "data.noise",
    "data.scaling",
    "data.val_fraction",
    "train.epochs",
    "train.batch_size",
    "train.parse_rate_interval",
    "train.parse_rate_batch",
    "train.lr",
    "train.beta1",
    "train.beta2",
    "train.eps",
    "fit.restarts",
    "fit.max_iters",
    "fit.seed",
    "casestudy.pairs",
    "casestudy.epochs",
    "casestudy.seed",
    "casestudy.tables",
    "casestudy.rows",
    "casestudy.target",
    "casestudy.alpha_tolerance",
    "casestudy.vote",
];

fn parse_value<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, ConfigError>
where
    T::Err: std::fmt::Display,
{
    value.parse().map_err(|e: T::Err| ConfigError::BadValue {
        key: key.into(),
        value: value.into(),
        reason: e.to_string(),
    })
}

fn bad(key: &str, value: &str, reason: &str) -> ConfigError {
    ConfigError::BadValue {
        key: key.into(),
        value: value.into(),
        reason: reason.into(),
    }
}

fn positive(key: &str, value: &str) -> Result<usize, ConfigError> {
    match parse_value::<usize>(key, value)? {
        0 => Err(bad(key, value, "must be at least 1")),
        n => Ok(n),
    }
}

fn unit_interval(key: &str, value: &str) -> Result<f64, ConfigError> {
    let v: f64 = parse_value(key, value)?;
    if v > 0.0 && v < 1.0 {
        Ok(v)
    } else {
        Err(bad(key, value, "must lie in (0, 1)"))
    }
}

fn symbol_count(key: &str, value: &str) -> Result<u8, ConfigError> {
    let v: u8 = parse_value(key, value)?;
    if (1..=9).contains(&v) {
        Ok(v)
    } else {
        Err(bad(key, value, "must be 1..=9"))
    }
}

impl RunConfig {
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        let v = value.trim();
        match key.trim() {
            "corpus" => {
                self.corpus = if v == "builtin" {
                    CorpusSource::Builtin
                } else {
                    CorpusSource::File(v.into())
                }
            }
            "seed" => self.seed = parse_value(key, v)?,
            "data.pairs" => self.data.total_pairs = positive(key, v)?,
            "data.seq_len" => self.data.seq_len = positive(key, v)?,
            "data.max_var" => self.data.vocab.max_var = symbol_count(key, v)?,
            "data.max_param" => self.data.vocab.max_param = symbol_count(key, v)?,
            "data.noise" => {
                let levels = v
                    .split(',')
                    .map(|s| parse_value::<f64>(key, s.trim()))
                    .collect::<Result<Vec<_>, _>>()?;
                self.data.schedule = NoiseSchedule::new(levels)
                    .map_err(|e| bad(key, v, &e.to_string()))?;
            }
            "data.scaling" => {
                self.data.scaling = match v {
                    "none" => InputScaling::None,
                    "standardize" => InputScaling::Standardize,
                    _ => return Err(bad(key, v, "expected none or standardize")),
                }
            }
            "data.val_fraction" => self.val_fraction = unit_interval(key, v)?,
            "train.epochs" => self.train.epochs = positive(key, v)?,
            "train.batch_size" => self.train.batch_size = positive(key, v)?,
            "train.parse_rate_interval" => self.train.parse_rate_interval = positive(key, v)?,
            "train.parse_rate_batch" => self.train.parse_rate_batch = positive(key, v)?,
            "train.lr" => self.train.adam.lr = parse_value(key, v)?,
            "train.beta1" => self.train.adam.beta1 = unit_interval(key, v)?,
            "train.beta2" => self.train.adam.beta2 = unit_interval(key, v)?,
            "train.eps" => self.train.adam.eps = parse_value(key, v)?,
            "fit.restarts" => self.fit.restarts = parse_value(key, v)?,
            "fit.max_iters" => self.fit.max_iters = positive(key, v)?,
            "fit.seed" => self.fit.seed = parse_value(key, v)?,
            "casestudy.pairs" => self.casestudy.train_pairs = positive(key, v)?,
            "casestudy.epochs" => self.casestudy.train.epochs = positive(key, v)?,
            "casestudy.seed" => self.casestudy.seed = parse_value(key, v)?,
            "casestudy.tables" => self.casestudy.eval_tables = positive(key, v)?,
            "casestudy.rows" => {
                let rows = positive(key, v)?;
                if rows < 2 {
                    return Err(bad(key, v, "need at least 2 rows"));
                }
                self.casestudy.eval_rows = rows;
            }
            "casestudy.target" => self.casestudy.target = v.to_string(),
            "casestudy.alpha_tolerance" => self.casestudy.alpha_tolerance = parse_value(key, v)?,
            "casestudy.vote" => self.casestudy.vote = parse_value(key, v)?,
            other => return Err(ConfigError::UnknownKey(other.to_string())),
        }
        if key.trim() == "seed" {
            self.data.seed = self.seed;
            self.train.seed = self.seed;
        }
        Ok(())
    }

    pub fn get(&self, key: &str) -> Option<String> {
        let join = |v: &[f64]| v.iter().map(f64::to_string).collect::<Vec<_>>().join(",");
        Some(match key {
            "corpus" => match &self.corpus {
                CorpusSource::Builtin => "builtin".into(),
                CorpusSource::File(p) => p.display().to_string(),
            },
            "seed" => self.seed.to_string(),
            "data.pairs" => self.data.total_pairs.to_string(),
            "data.seq_len" => self.data.seq_len.to_string(),
            "data.max_var" => self.data.vocab.max_var.to_string(),
            "data.max_param" => self.data.vocab.max_param.to_string(),
            "data.noise" => join(self.data.schedule.levels()),
            "data.scaling" => match self.data.scaling {
                InputScaling::None => "none".into(),
                InputScaling::Standardize => "standardize".into(),
            },
            "data.val_fraction" => self.val_fraction.to_string(),
            "train.epochs" => self.train.epochs.to_string(),
            "train.batch_size" => self.train.batch_size.to_string(),
            "train.parse_rate_interval" => self.train.parse_rate_interval.to_string(),
            "train.parse_rate_batch" => self.train.parse_rate_batch.to_string(),
            "train.lr" => self.train.adam.lr.to_string(),
            "train.beta1" => self.train.adam.beta1.to_string(),
            "train.beta2" => self.train.adam.beta2.to_string(),
            "train.eps" => self.train.adam.eps.to_string(),
            "fit.restarts" => self.fit.restarts.to_string(),
            "fit.max_iters" => self.fit.max_iters.to_string(),
            "fit.seed" => self.fit.seed.to_string(),
            "casestudy.pairs" => self.casestudy.train_pairs.to_string(),
            "casestudy.epochs" => self.casestudy.train.epochs.to_string(),
            "casestudy.seed" => self.casestudy.seed.to_string(),
            "casestudy.tables" => self.casestudy.eval_tables.to_string(),
            "casestudy.rows" => self.casestudy.eval_rows.to_string(),
            "casestudy.target" => self.casestudy.target.clone(),
            "casestudy.alpha_tolerance" => self.casestudy.alpha_tolerance.to_string(),
            "casestudy.vote" => self.casestudy.vote.to_string(),
            _ => return None,
        })
    }

    /// Applies every `key = value` line; `#` starts a comment.
    pub fn apply_text(&mut self, text: &str) -> Result<(), ConfigError> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or(ConfigError::Syntax { line: i + 1 })?;
            self.set(k, v)?;
        }
        Ok(())
    }

    pub fn apply_file(&mut self, path: &Path) -> Result<(), ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        self.apply_text(&text)
    }

    /// Applies a `key=value` override.
    pub fn apply_assignment(&mut self, assignment: &str) -> Result<(), ConfigError> {
        let (k, v) = assignment
            .split_once('=')
            .ok_or(ConfigError::Syntax { line: 0 })?;
        self.set(k, v)
    }

    /// Every key with its resolved value, in a fixed order.
    pub fn snapshot(&self) -> String {
        let mut s = String::new();
        for k in KEYS {
            let _ = writeln!(s, "{k} = {}", self.get(k).expect("listed keys resolve"));
        }
        s
    }

    pub fn templates(&self) -> Result<Vec<EquationTemplate>, anyhow::Error> {
        Ok(match &self.corpus {
            CorpusSource::Builtin => builtin_templates(),
            CorpusSource::File(p) => load_templates(p)
                .map_err(|e| anyhow::anyhow!("loading corpus {}: {e}", p.display()))?,
        })
    }
}
