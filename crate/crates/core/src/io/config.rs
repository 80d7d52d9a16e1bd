//! Run configuration: TOML files, environment overrides and validation.
//!
//! Every key can be overridden through an environment variable named
//! `TILEDIFF_` followed by the upper-cased key path, with `__` between
//! path segments: `TILEDIFF_PLAN__LEVELS=3` sets `plan.levels`. Values are
//! parsed as TOML literals and fall back to plain strings.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::denoiser::DenoiserSource;
use crate::eval::{texture_oracle_file, TextureParams};
use crate::error::{Error, Result};
use crate::guidance::GuidanceConfig;
use crate::precondition::PreconditionConfig;
use crate::pyramid::{Precision, StagePlan, StorageConfig};
use crate::schedule::{NoiseSchedule, ScheduleParams};
use crate::solver::Method;

pub const ENV_PREFIX: &str = "TILEDIFF_";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    #[serde(with = "seed_repr")]
    pub seed: u64,
    pub workers: usize,
    pub output: PathBuf,
    pub precision: Precision,
    pub method: Method,
    /// Edge of exported PNG tiles; the patch size when absent.
    pub tile_size: Option<usize>,
    /// Also write exact `f64` dumps of every level.
    pub raw_dumps: bool,
    pub plan: StagePlan,
    pub schedule: ScheduleParams,
    pub guidance: GuidanceConfig,
    pub precondition: PreconditionConfig,
    pub storage: StorageConfig,
    pub denoiser: DenoiserSource,
}

impl Default for RunConfig {
    fn default() -> Self {
        let plan = StagePlan::default();
        Self {
            seed: 0,
            workers: 1,
            output: PathBuf::from("pyramid"),
            precision: Precision::Double,
            method: Method::Heun,
            tile_size: None,
            raw_dumps: false,
            denoiser: DenoiserSource::Inline(texture_oracle_file(plan.channels, plan.patch_size, &TextureParams::default())),
            storage: StorageConfig {
                tile: plan.patch_size,
                ..StorageConfig::default()
            },
            plan,
            schedule: ScheduleParams::default(),
            guidance: GuidanceConfig::default(),
            precondition: PreconditionConfig::default(),
        }
    }
}

impl RunConfig {
    /// Desk-scale preset: `M = 32`, `k = 2`, `L = 3`, 3 channels.
    pub fn desk() -> Self {
        let plan = StagePlan {
            levels: 3,
            patch_size: 32,
            ..StagePlan::default()
        };
        Self {
            denoiser: DenoiserSource::Inline(texture_oracle_file(plan.channels, plan.patch_size, &TextureParams::default())),
            storage: StorageConfig {
                tile: plan.patch_size,
                ..StorageConfig::default()
            },
            plan,
            ..Self::default()
        }
    }

    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::InvalidParameter(format!("config: {e}")))
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Format(format!("config serialization: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    pub fn tile_size(&self) -> usize {
        self.tile_size.unwrap_or(self.plan.patch_size)
    }

    pub fn validate(&self) -> Result<()> {
        self.plan.validate()?;
        let schedule = NoiseSchedule::from_params(self.schedule)?;
        self.guidance.validate(schedule.steps())?;
        PreconditionConfig::new(self.precondition.sigma_data)?;
        if self.workers == 0 {
            return Err(Error::InvalidParameter("workers must be positive".into()));
        }
        if self.tile_size() == 0 {
            return Err(Error::InvalidParameter("tile size must be positive".into()));
        }
        if self.storage.tile == 0 {
            return Err(Error::InvalidParameter("scratch tile size must be positive".into()));
        }
        Ok(())
    }

    /// Applies `TILEDIFF_*` overrides from `vars`; other variables are
    /// ignored.
    pub fn apply_env<I, K, V>(&self, vars: I) -> Result<Self>
    where
        I: IntoIterator<Item = (K, V)>,
        K: AsRef<str>,
        V: AsRef<str>,
    {
        let mut tree = toml::Table::try_from(self)
            .map_err(|e| Error::Format(format!("config serialization: {e}")))?;
        let mut keys = Vec::new();
        for (k, v) in vars {
            let Some(rest) = k.as_ref().strip_prefix(ENV_PREFIX) else {
                continue;
            };
            let path: Vec<String> = rest.split("__").map(str::to_ascii_lowercase).collect();
            if path.iter().any(String::is_empty) {
                return Err(Error::InvalidParameter(format!("malformed override {}", k.as_ref())));
            }
            set_path(&mut tree, &path, parse_literal(v.as_ref()))?;
            keys.push((k.as_ref().to_string(), path));
        }
        let cfg: RunConfig = tree
            .try_into()
            .map_err(|e| Error::InvalidParameter(format!("config override: {e}")))?;
        // Keys that deserialization silently dropped do not exist.
        let back = toml::Table::try_from(&cfg).map_err(|e| Error::Format(format!("config serialization: {e}")))?;
        for (name, path) in keys {
            if lookup(&back, &path).is_none() {
                return Err(Error::InvalidParameter(format!("{name} names no config key")));
            }
        }
        Ok(cfg)
    }

    pub fn apply_process_env(&self) -> Result<Self> {
        self.apply_env(std::env::vars())
    }

    /// Directory against which relative denoiser paths resolve.
    pub fn base_dir(config_path: Option<&Path>) -> PathBuf {
        config_path
            .and_then(Path::parent)
            .map(Path::to_path_buf)
            .unwrap_or_else(|| PathBuf::from("."))
    }
}

fn parse_literal(raw: &str) -> toml::Value {
    format!("v = {raw}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()))
}

fn set_path(tree: &mut toml::Table, path: &[String], value: toml::Value) -> Result<()> {
    let (last, parents) = path.split_last().expect("non-empty path");
    let mut cur = tree;
    for seg in parents {
        let next = cur
            .entry(seg.clone())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = next
            .as_table_mut()
            .ok_or_else(|| Error::InvalidParameter(format!("config key {seg} is not a table")))?;
    }
    cur.insert(last.clone(), value);
    Ok(())
}

fn lookup<'a>(tree: &'a toml::Table, path: &[String]) -> Option<&'a toml::Value> {
    let (first, rest) = path.split_first()?;
    let v = tree.get(first)?;
    if rest.is_empty() {
        Some(v)
    } else {
        lookup(v.as_table()?, rest)
    }
}

/// TOML integers are signed 64-bit, so seeds above `i64::MAX` are written
/// as decimal strings.
mod seed_repr {
    use serde::{de, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(seed: &u64, s: S) -> Result<S::Ok, S::Error> {
        match i64::try_from(*seed) {
            Ok(v) => s.serialize_i64(v),
            Err(_) => s.serialize_str(&seed.to_string()),
        }
    }

    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Int(u64),
        Text(String),
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<u64, D::Error> {
        match Repr::deserialize(d)? {
            Repr::Int(v) => Ok(v),
            Repr::Text(t) => t.parse().map_err(de::Error::custom),
        }
    }
}
