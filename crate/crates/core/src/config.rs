//! Run configuration shared by the CLI subcommands.
//!
//! A flat TOML document; training keys sit at the top level next to the run
//! keys:
//!
//! ```toml
//! schema = "schema.txt"
//! targets = ["mapincr", "phincr"]
//! seed = 7
//! train_frac = 0.7
//! n_trees = 20
//! max_conjunction_len = 2
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::Schema;
use crate::learner::TrainConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub schema: Option<PathBuf>,
    /// Actions to train; empty means every action in the schema.
    pub targets: Vec<String>,
    pub seed: u64,
    /// Fraction of subjects used for training; the rest is held out.
    pub train_frac: Option<f64>,
    pub output_dir: Option<PathBuf>,
    pub threads: Option<usize>,
    #[serde(flatten)]
    pub train: TrainConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            schema: None,
            targets: Vec::new(),
            seed: 0,
            train_frac: None,
            output_dir: None,
            threads: None,
            train: TrainConfig::default(),
        }
    }
}

const RUN_KEYS: &[&str] = &["schema", "targets", "seed", "train_frac", "output_dir", "threads"];

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let table: toml::Table = text.parse().map_err(|e: toml::de::Error| Error::InvalidConfig(e.to_string()))?;
        let train_keys = toml::Table::try_from(TrainConfig {
            neg_pos_ratio: Some(1.0),
            ..TrainConfig::default()
        })
        .map_err(|e| Error::InvalidConfig(e.to_string()))?;
        if let Some(key) = table
            .keys()
            .find(|k| !RUN_KEYS.contains(&k.as_str()) && !train_keys.contains_key(k.as_str()))
        {
            return Err(Error::InvalidConfig(format!("unknown key `{key}`")));
        }
        let cfg: RunConfig = table.try_into().map_err(|e: toml::de::Error| Error::InvalidConfig(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Relative paths in the file are resolved against its directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::parse(&text)?;
        let base = path.parent().unwrap_or(Path::new(""));
        for p in [&mut cfg.schema, &mut cfg.output_dir].into_iter().flatten() {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(f) = self.train_frac {
            if !(f > 0.0 && f < 1.0) {
                return Err(Error::InvalidConfig(format!("train_frac {f} must lie in (0, 1)")));
            }
        }
        if self.threads == Some(0) {
            return Err(Error::InvalidConfig("threads must be positive".into()));
        }
        self.train.validate()
    }

    pub fn load_schema(&self) -> Result<Schema> {
        match &self.schema {
            Some(path) => {
                let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
                Schema::parse(&text)
            }
            None => Ok(Schema::default_clinical()),
        }
    }

    /// Configured targets, checked against the schema.
    pub fn resolve_targets(&self, schema: &Schema) -> Result<Vec<String>> {
        if self.targets.is_empty() {
            return Ok(schema.actions().iter().map(|a| a.name().to_string()).collect());
        }
        for t in &self.targets {
            if schema.action(t).is_none() {
                return Err(Error::UnknownPredicate(t.clone()));
            }
        }
        Ok(self.targets.clone())
    }
}

/// Independent stream seed for one purpose ("split", "subsample", "synth", ...).
pub fn derive_seed(seed: u64, purpose: &str) -> u64 {
    // FNV-1a over the purpose, then one splitmix64 round.
    let tag = purpose
        .bytes()
        .fold(0xcbf2_9ce4_8422_2325u64, |h, b| (h ^ b as u64).wrapping_mul(0x100_0000_01b3));
    let mut z = seed ^ tag;
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}
