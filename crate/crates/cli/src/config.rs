//! Experiment configuration: a JSON document, overridden by flags.

use std::path::{Path, PathBuf};

use clap::ValueEnum;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use tvstab::fixtures::{DataSpec, FixtureSpec};
use tvstab::Seed;

use crate::Failure;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    #[default]
    Json,
    Csv,
}

/// Contents of a `--config` file. Every field is optional.
#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub command: Option<String>,
    pub seed: Option<Seed>,
    pub trials: Option<usize>,
    pub out: Option<PathBuf>,
    pub format: Option<Format>,
    pub fixture: Option<FixtureSpec>,
    pub data: Option<DataSpec>,
    pub params: Option<Value>,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self, Failure> {
        let text = std::fs::read_to_string(path).map_err(|e| Failure::Config(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| Failure::Config(format!("{}: {e}", path.display())))
    }
}

/// Fully resolved configuration of one run.
#[derive(Clone, Debug)]
pub struct ExperimentConfig {
    pub command: String,
    pub seed: Seed,
    pub trials: Option<usize>,
    pub out: Option<PathBuf>,
    pub format: Format,
    pub fixture: Option<FixtureSpec>,
    pub data: Option<DataSpec>,
    pub params: Option<Value>,
}

/// Flag values; `None` leaves the file value in place.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub seed: Option<Seed>,
    pub trials: Option<usize>,
    pub out: Option<PathBuf>,
    pub format: Option<Format>,
}

impl ExperimentConfig {
    pub fn resolve(command: &str, file: FileConfig, flags: Overrides) -> Result<Self, Failure> {
        if let Some(c) = &file.command {
            if c != command {
                return Err(Failure::Config(format!("config is for `{c}`, not `{command}`")));
            }
        }
        let seed = flags
            .seed
            .or(file.seed)
            .ok_or_else(|| Failure::Config("a seed is required (--seed or \"seed\" in the config)".into()))?;
        let trials = flags.trials.or(file.trials);
        if trials == Some(0) {
            return Err(Failure::Config("trials must be positive".into()));
        }
        Ok(ExperimentConfig {
            command: command.to_string(),
            seed,
            trials,
            out: flags.out.or(file.out),
            format: flags.format.or(file.format).unwrap_or_default(),
            fixture: file.fixture,
            data: file.data,
            params: file.params,
        })
    }

    pub fn trials_or(&self, default: usize) -> usize {
        self.trials.unwrap_or(default)
    }

    /// Command parameters: `defaults` overlaid with the config's `params`.
    pub fn params<T: DeserializeOwned>(&self, defaults: Value) -> Result<(T, Value), Failure> {
        let merged = overlay(defaults, self.params.clone());
        let parsed = serde_json::from_value(merged.clone()).map_err(|e| Failure::Config(format!("params: {e}")))?;
        Ok((parsed, merged))
    }

    pub fn fixture_or(&self, default: Value) -> Result<FixtureSpec, Failure> {
        match &self.fixture {
            Some(f) => Ok(f.clone()),
            None => serde_json::from_value(default).map_err(|e| Failure::Internal(format!("default fixture: {e}"))),
        }
    }

    pub fn data_or(&self, default: Value) -> Result<DataSpec, Failure> {
        match &self.data {
            Some(d) => Ok(d.clone()),
            None => serde_json::from_value(default).map_err(|e| Failure::Internal(format!("default data: {e}"))),
        }
    }
}

fn overlay(base: Value, top: Option<Value>) -> Value {
    match (base, top) {
        (Value::Object(mut b), Some(Value::Object(t))) => {
            for (k, v) in t {
                let merged = match b.remove(&k) {
                    Some(old) => overlay(old, Some(v)),
                    None => v,
                };
                b.insert(k, merged);
            }
            Value::Object(b)
        }
        (b, None) => b,
        (_, Some(t)) => t,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn overlay_replaces_leaves() {
        let v = overlay(json!({"a": 1, "b": {"c": 2, "d": 3}}), Some(json!({"b": {"c": 5}, "e": 6})));
        assert_eq!(v, json!({"a": 1, "b": {"c": 5, "d": 3}, "e": 6}));
    }

    #[test]
    fn flags_override_file() {
        let file = FileConfig { seed: Some(Seed(1)), trials: Some(10), ..Default::default() };
        let flags = Overrides { seed: Some(Seed(2)), ..Default::default() };
        let c = ExperimentConfig::resolve("sq", file, flags).unwrap();
        assert_eq!(c.seed, Seed(2));
        assert_eq!(c.trials, Some(10));
    }

    #[test]
    fn seed_is_mandatory() {
        assert!(matches!(
            ExperimentConfig::resolve("sq", FileConfig::default(), Overrides::default()),
            Err(Failure::Config(_))
        ));
    }

    #[test]
    fn command_must_match() {
        let file = FileConfig { command: Some("boost".into()), seed: Some(Seed(1)), ..Default::default() };
        assert!(ExperimentConfig::resolve("sq", file, Overrides::default()).is_err());
    }
}
