//! Run configuration: defaults, an optional config file, and flag overrides.
//!
//! The file is either a JSON object or `key = value` lines whose values are
//! JSON literals (bare words are read as strings). Keys are flat and unknown
//! keys are rejected. Flags beat the file, the file beats the defaults; the
//! seed additionally falls back to `FRICTIONSIM_SEED` before the default.

use std::path::{Path, PathBuf};

use frictionsim::runner::Axis;
use frictionsim::{Activation, SimParams, TauPopulation};
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use thiserror::Error;

pub const SEED_ENV: &str = "FRICTIONSIM_SEED";
pub const DEFAULT_SEED: u64 = 42;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config file {path}: {source}")]
    Read {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("config line {line}: expected `key = value`")]
    Syntax { line: usize },
    #[error("config: {0}")]
    Invalid(String),
    #[error("`{key}` = {value} is out of range: {expected}")]
    Range {
        key: &'static str,
        value: String,
        expected: &'static str,
    },
    #[error("{SEED_ENV}={0:?} is not an unsigned integer")]
    SeedEnv(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum ActivationMode {
    WithReplacement,
    Permutation,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum TauMode {
    AllPosts,
    InFeeds,
}

/// Every key the config file may set. Also the shape of the flag layer.
#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Overrides {
    pub n: Option<usize>,
    pub m: Option<usize>,
    pub p: Option<f64>,
    pub alpha: Option<usize>,
    pub f: Option<f64>,
    pub ell: Option<f64>,
    pub rho: Option<f64>,
    pub epsilon: Option<f64>,
    pub clustering_target: Option<f64>,
    pub seed: Option<u64>,
    pub warmup: Option<u64>,
    pub step_cap: Option<u64>,
    pub activation: Option<ActivationMode>,
    pub tau_population: Option<TauMode>,
    pub f_values: Option<Vec<f64>>,
    pub ell_values: Option<Vec<f64>>,
    pub n_networks: Option<usize>,
    pub runs_per_network: Option<usize>,
    pub workers: Option<usize>,
    pub collapse_f1: Option<bool>,
    pub dump_posts: Option<PathBuf>,
    pub raw_out: Option<PathBuf>,
    pub agg_out: Option<PathBuf>,
}

macro_rules! merge_fields {
    ($hi:expr, $lo:expr; $($field:ident),*) => {
        Overrides { $($field: $hi.$field.or($lo.$field),)* }
    };
}

impl Overrides {
    /// Fields set in `self` win over `lower`.
    pub fn over(self, lower: Overrides) -> Overrides {
        merge_fields!(self, lower; n, m, p, alpha, f, ell, rho, epsilon, clustering_target,
            seed, warmup, step_cap, activation, tau_population, f_values, ell_values,
            n_networks, runs_per_network, workers, collapse_f1, dump_posts, raw_out, agg_out)
    }

    pub fn from_file(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: path.to_path_buf(),
            source,
        })?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let trimmed = text.trim_start();
        let value = if trimmed.starts_with('{') {
            serde_json::from_str::<Value>(text).map_err(|e| ConfigError::Invalid(e.to_string()))?
        } else {
            Value::Object(parse_key_values(text)?)
        };
        serde_json::from_value(value).map_err(|e| ConfigError::Invalid(e.to_string()))
    }
}

fn parse_key_values(text: &str) -> Result<Map<String, Value>, ConfigError> {
    let mut map = Map::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, raw) = line.split_once('=').ok_or(ConfigError::Syntax { line: i + 1 })?;
        let key = key.trim();
        if key.is_empty() {
            return Err(ConfigError::Syntax { line: i + 1 });
        }
        let raw = raw.trim();
        let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
        map.insert(key.to_string(), value);
    }
    Ok(map)
}

/// Fully resolved settings. Serialised into the log of every invocation.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Config {
    pub n: usize,
    pub m: usize,
    pub p: f64,
    pub alpha: usize,
    pub f: f64,
    pub ell: f64,
    pub rho: f64,
    pub epsilon: f64,
    pub clustering_target: f64,
    pub seed: u64,
    pub warmup: u64,
    pub step_cap: u64,
    pub activation: ActivationMode,
    pub tau_population: TauMode,
    /// `None` means the default axis.
    pub f_values: Option<Vec<f64>>,
    pub ell_values: Option<Vec<f64>>,
    pub n_networks: usize,
    pub runs_per_network: usize,
    pub workers: usize,
    pub collapse_f1: bool,
    pub dump_posts: Option<PathBuf>,
    pub raw_out: Option<PathBuf>,
    pub agg_out: Option<PathBuf>,
}

fn check_unit(key: &'static str, v: f64) -> Result<f64, ConfigError> {
    if (0.0..=1.0).contains(&v) {
        Ok(v)
    } else {
        Err(ConfigError::Range { key, value: v.to_string(), expected: "within [0, 1]" })
    }
}

fn check_min<T: PartialOrd + ToString>(key: &'static str, v: T, min: T, expected: &'static str) -> Result<T, ConfigError> {
    if v >= min {
        Ok(v)
    } else {
        Err(ConfigError::Range { key, value: v.to_string(), expected })
    }
}

fn env_seed(env: Option<String>) -> Result<Option<u64>, ConfigError> {
    match env {
        None => Ok(None),
        Some(s) => s.trim().parse().map(Some).map_err(|_| ConfigError::SeedEnv(s)),
    }
}

impl Config {
    /// Merge flags over the file over the defaults, then validate.
    pub fn resolve(flags: Overrides, file: Overrides, env_seed_value: Option<String>) -> Result<Self, ConfigError> {
        let o = flags.over(file);
        let d = SimParams::default();
        let seed = match o.seed {
            Some(s) => s,
            None => env_seed(env_seed_value)?.unwrap_or(DEFAULT_SEED),
        };
        let f_values = o.f_values.map(|v| v.into_iter().map(|x| check_unit("f_values", x)).collect()).transpose()?;
        let ell_values = o.ell_values.map(|v| v.into_iter().map(|x| check_unit("ell_values", x)).collect()).transpose()?;
        let n = check_min("n", o.n.unwrap_or(d.n), 1, "at least 1")?;
        let m = check_min("m", o.m.unwrap_or(d.m), 1, "at least 1")?;
        if n < m {
            return Err(ConfigError::Range { key: "n", value: n.to_string(), expected: "at least m" });
        }
        let epsilon = o.epsilon.unwrap_or(d.epsilon);
        if !(epsilon > 0.0) {
            return Err(ConfigError::Range { key: "epsilon", value: epsilon.to_string(), expected: "positive" });
        }
        let clustering_target = o.clustering_target.unwrap_or(d.clustering_target);
        if !(clustering_target > 0.0 && clustering_target < 1.0) {
            return Err(ConfigError::Range {
                key: "clustering_target",
                value: clustering_target.to_string(),
                expected: "within (0, 1)",
            });
        }
        Ok(Self {
            n,
            m,
            p: check_unit("p", o.p.unwrap_or(d.post_probability))?,
            alpha: check_min("alpha", o.alpha.unwrap_or(d.feed_capacity), 1, "at least 1")?,
            f: check_unit("f", o.f.unwrap_or(d.friction))?,
            ell: check_unit("ell", o.ell.unwrap_or(d.learning))?,
            rho: check_unit("rho", o.rho.unwrap_or(d.rho))?,
            epsilon,
            clustering_target,
            seed,
            warmup: o.warmup.unwrap_or(d.warmup),
            step_cap: check_min("step_cap", o.step_cap.unwrap_or(d.step_cap), 1, "at least 1")?,
            activation: o.activation.unwrap_or(ActivationMode::WithReplacement),
            tau_population: o.tau_population.unwrap_or(TauMode::AllPosts),
            f_values,
            ell_values,
            n_networks: check_min("n_networks", o.n_networks.unwrap_or(5), 1, "at least 1")?,
            runs_per_network: check_min("runs_per_network", o.runs_per_network.unwrap_or(10), 1, "at least 1")?,
            workers: check_min("workers", o.workers.unwrap_or_else(default_workers), 1, "at least 1")?,
            collapse_f1: o.collapse_f1.unwrap_or(false),
            dump_posts: o.dump_posts,
            raw_out: o.raw_out,
            agg_out: o.agg_out,
        })
    }

    pub fn sim_params(&self) -> SimParams {
        SimParams {
            n: self.n,
            m: self.m,
            post_probability: self.p,
            feed_capacity: self.alpha,
            friction: self.f,
            learning: self.ell,
            rho: self.rho,
            epsilon: self.epsilon,
            clustering_target: self.clustering_target,
            seed: self.seed,
            warmup: self.warmup,
            step_cap: self.step_cap,
            activation: match self.activation {
                ActivationMode::WithReplacement => Activation::WithReplacement,
                ActivationMode::Permutation => Activation::Permutation,
            },
            tau_population: match self.tau_population {
                TauMode::AllPosts => TauPopulation::AllPosts,
                TauMode::InFeeds => TauPopulation::InFeeds,
            },
        }
    }

    pub fn f_axis(&self) -> Axis {
        self.f_values.clone().map_or(Axis::Default, Axis::Explicit)
    }

    pub fn ell_axis(&self) -> Axis {
        self.ell_values.clone().map_or(Axis::Default, Axis::Explicit)
    }
}

fn default_workers() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}
