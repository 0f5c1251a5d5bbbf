//! Reports: JSON documents or CSV tables of measurements.

use std::collections::BTreeMap;
use std::io::Write;

use serde::Serialize;
use serde_json::Value;
use tvstab::verify::Measurement;
use tvstab::Seed;

use crate::config::{ExperimentConfig, Format};
use crate::Failure;

#[derive(Clone, Debug, Serialize)]
pub struct Report {
    pub command: String,
    pub seed: Seed,
    pub trials: usize,
    pub fixture: Option<Value>,
    pub data: Option<Value>,
    pub params: Value,
    pub measurements: Vec<Measurement>,
    /// Declared algorithmic failures by kind.
    pub failures: BTreeMap<String, u64>,
    pub pass: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub details: Option<Value>,
}

impl Report {
    pub fn new(cfg: &ExperimentConfig, trials: usize, params: Value) -> Self {
        Report {
            command: cfg.command.clone(),
            seed: cfg.seed,
            trials,
            fixture: None,
            data: None,
            params,
            measurements: vec![],
            failures: BTreeMap::new(),
            pass: true,
            details: None,
        }
    }

    pub fn with_fixture(mut self, fixture: &impl Serialize) -> Self {
        self.fixture = serde_json::to_value(fixture).ok();
        self
    }

    pub fn with_data(mut self, data: &impl Serialize) -> Self {
        self.data = serde_json::to_value(data).ok();
        self
    }

    pub fn push(&mut self, m: Measurement) {
        self.pass &= m.pass;
        self.measurements.push(m);
    }

    pub fn fail(&mut self, kind: impl Into<String>) {
        *self.failures.entry(kind.into()).or_default() += 1;
    }

    pub fn render(&self, format: Format) -> Result<Vec<u8>, Failure> {
        match format {
            Format::Json => {
                let mut out = serde_json::to_vec_pretty(self).map_err(|e| Failure::Internal(e.to_string()))?;
                out.push(b'\n');
                Ok(out)
            }
            Format::Csv => {
                let mut out = Vec::new();
                writeln!(out, "# command={} seed={} trials={}", self.command, self.seed, self.trials)
                    .map_err(|e| Failure::Internal(e.to_string()))?;
                let mut w = csv::Writer::from_writer(out);
                for m in &self.measurements {
                    w.serialize(m).map_err(|e| Failure::Internal(e.to_string()))?;
                }
                for (kind, n) in &self.failures {
                    w.serialize(Measurement::check(format!("failures: {kind}"), *n as f64, 0.0, true))
                        .map_err(|e| Failure::Internal(e.to_string()))?;
                }
                w.into_inner().map_err(|e| Failure::Internal(e.to_string()))
            }
        }
    }

    pub fn write(&self, cfg: &ExperimentConfig) -> Result<(), Failure> {
        let bytes = self.render(cfg.format)?;
        match &cfg.out {
            Some(path) => std::fs::write(path, bytes).map_err(|e| Failure::Config(format!("{}: {e}", path.display()))),
            None => std::io::stdout().write_all(&bytes).map_err(|e| Failure::Internal(e.to_string())),
        }
    }
}
