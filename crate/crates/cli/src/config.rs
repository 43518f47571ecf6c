use std::path::Path;

use gridfill::enrich::EnrichmentConfig;
use gridfill::error::Context;
use gridfill::gpr::{CrossValidation, HyperGrid};
use gridfill::markov::BinMode;
use gridfill::teachers::{TrainConfig, WeightMode};
use gridfill::{Error, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub const SEED_ENV: &str = "GRIDFILL_SEED";

/// Settings shared by every subcommand. Missing fields take defaults.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub n_states: usize,
    pub n_levels: usize,
    /// Smart-meter interval, seconds.
    pub low_dt: i64,
    pub min_hours: usize,
    pub grid: HyperGrid,
    pub cv: CrossValidation,
    pub weight_mode: WeightMode,
    pub mean_preserve: bool,
    pub bin_mode: BinMode,
    pub allow_negative: bool,
    /// Used when a student's interval averages are rebuilt from its customers.
    pub loss_fraction: f64,
    /// Power-flow step, in high-resolution samples.
    pub stride: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        let train = TrainConfig::default();
        let enrich = EnrichmentConfig::default();
        Self {
            seed: enrich.seed,
            n_states: train.n_states,
            n_levels: train.n_levels,
            low_dt: train.low_dt,
            min_hours: train.min_hours,
            grid: train.grid,
            cv: train.cv,
            weight_mode: enrich.weight_mode,
            mean_preserve: enrich.mean_preserve,
            bin_mode: enrich.bin_mode,
            allow_negative: enrich.allow_negative,
            loss_fraction: 0.02,
            stride: 10,
        }
    }
}

impl RunConfig {
    /// Reads `path` (or defaults), then applies the seed override.
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let mut cfg = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
                serde_json::from_str(&text).with_context(|| format!("parsing {}", p.display()))?
            }
            None => Self::default(),
        };
        if let Some(seed) = seed_override()? {
            cfg.seed = seed;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.stride == 0 {
            return Err(Error::Config("stride must be at least 1".into()));
        }
        if !(0.0..0.2).contains(&self.loss_fraction) {
            return Err(Error::Config(format!("loss_fraction {} outside [0, 0.2)", self.loss_fraction)));
        }
        Ok(())
    }

    pub fn train(&self) -> TrainConfig {
        TrainConfig {
            n_states: self.n_states,
            n_levels: self.n_levels,
            low_dt: self.low_dt,
            min_hours: self.min_hours,
            grid: self.grid.clone(),
            cv: self.cv.clone(),
        }
    }

    pub fn enrichment(&self) -> EnrichmentConfig {
        EnrichmentConfig {
            n_states: self.n_states,
            n_levels: self.n_levels,
            seed: self.seed,
            mean_preserve: self.mean_preserve,
            bin_mode: self.bin_mode,
            weight_mode: self.weight_mode,
            allow_negative: self.allow_negative,
        }
    }

    pub fn hash(&self) -> String {
        hash_json(self)
    }
}

pub fn seed_override() -> Result<Option<u64>> {
    match std::env::var(SEED_ENV) {
        Ok(s) => s
            .trim()
            .parse()
            .map(Some)
            .map_err(|_| Error::Config(format!("{SEED_ENV}={s:?} is not an unsigned integer"))),
        Err(_) => Ok(None),
    }
}

/// Hex SHA-256 of a value's JSON form.
pub fn hash_json<S: Serialize>(value: &S) -> String {
    let json = serde_json::to_vec(value).expect("config serializes");
    hex::encode(Sha256::digest(&json))
}
