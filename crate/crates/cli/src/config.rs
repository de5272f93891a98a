//! The shared JSON configuration used by every subcommand.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use coalescent_core::LambdaSpec;
use serde::Deserialize;
use serde_json::{Map, Value};
use sha2::{Digest, Sha256};

/// `k` may be a single threshold or a schedule.
#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(untagged)]
pub enum OneOrMany {
    One(usize),
    Many(Vec<usize>),
}

impl OneOrMany {
    pub fn to_vec(&self) -> Vec<usize> {
        match self {
            Self::One(k) => vec![*k],
            Self::Many(ks) => ks.clone(),
        }
    }
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub measure: Option<LambdaSpec>,
    pub n: Option<usize>,
    pub n_schedule: Option<Vec<usize>>,
    pub replicates: Option<u64>,
    pub seed: Option<u64>,
    pub k: Option<OneOrMany>,
    #[serde(rename = "J")]
    pub support_cutoff: Option<usize>,
    pub alpha: Option<f64>,
    pub tolerance: Option<f64>,
    pub output_dir: Option<PathBuf>,
    /// Number of reversed steps r for `reverse`.
    pub steps: Option<usize>,
    /// Time horizon of emitted reversed paths.
    pub horizon: Option<f64>,
    /// Number of reversed paths written by `reverse`.
    pub paths: Option<u64>,
    /// Quantile level for `couple`.
    pub level: Option<f64>,
    pub lambda_grid: Option<Vec<f64>>,
    pub m_values: Option<Vec<u32>>,
}

pub const KNOWN_KEYS: &[&str] = &[
    "measure",
    "n",
    "n_schedule",
    "replicates",
    "seed",
    "k",
    "J",
    "alpha",
    "tolerance",
    "output_dir",
    "steps",
    "horizon",
    "paths",
    "level",
    "lambda_grid",
    "m_values",
];

/// A parsed configuration together with its canonical form, used for the
/// hash written into every output header.
#[derive(Debug, Clone)]
pub struct LoadedConfig {
    pub config: Config,
    raw: Map<String, Value>,
    /// Keys present in the file but not read by the running subcommand.
    pub ignored: Vec<String>,
}

impl LoadedConfig {
    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        Self::from_json(&text).with_context(|| format!("parsing config {}", path.display()))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let value: Value = serde_json::from_str(text).context("config is not valid JSON")?;
        let Value::Object(mut raw) = value else {
            bail!("config must be a JSON object");
        };
        let mut ignored = Vec::new();
        raw.retain(|key, _| {
            let known = KNOWN_KEYS.contains(&key.as_str());
            if !known {
                ignored.push(key.clone());
            }
            known
        });
        let config: Config = serde_json::from_value(Value::Object(raw.clone())).context("malformed config")?;
        Ok(Self { config, raw, ignored })
    }

    pub fn empty() -> Self {
        Self {
            config: Config::default(),
            raw: Map::new(),
            ignored: Vec::new(),
        }
    }

    /// Overrides the seed, as `--seed` does.
    pub fn set_seed(&mut self, seed: u64) {
        self.config.seed = Some(seed);
        self.raw.insert("seed".into(), Value::from(seed));
    }

    /// Records keys that the subcommand does not read.
    pub fn note_unused(&mut self, used: &[&str]) {
        let used: BTreeSet<&str> = used.iter().copied().collect();
        for key in self.raw.keys() {
            if !used.contains(key.as_str()) && key != "output_dir" && key != "seed" {
                self.ignored.push(key.clone());
            }
        }
        self.ignored.sort();
        self.ignored.dedup();
    }

    /// SHA-256 of the canonical (key-sorted, compact) JSON of the effective
    /// configuration.
    pub fn hash(&self) -> String {
        let canonical = serde_json::to_string(&Value::Object(self.raw.clone())).expect("JSON values serialise");
        let digest = Sha256::digest(canonical.as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn measure(&self) -> Result<&LambdaSpec> {
        self.config.measure.as_ref().context("config key `measure` is required")
    }

    pub fn n(&self) -> Result<usize> {
        self.config.n.context("config key `n` is required")
    }
}
