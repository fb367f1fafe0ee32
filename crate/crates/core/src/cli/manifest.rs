//! JSON run manifest written next to every set of artifacts.

use std::collections::BTreeMap;
use std::io;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::analysis::phase::PhaseCell;
use crate::noise::{GAUSSIAN_STREAM_ALGORITHM, OUTCOME_STREAM_ALGORITHM};

use super::config::{parse_config_str, ConfigError, RunConfig};

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Ok,
    Inconclusive,
    Error,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Seeds {
    pub base_seed: u64,
    pub gaussian_stream: String,
    pub outcome_stream: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorInfo {
    pub kind: String,
    pub message: String,
    /// Offending configuration key, for configuration errors.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub key: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub status: Status,
    pub subcommand: String,
    pub version: String,
    pub config: BTreeMap<String, String>,
    pub seeds: Seeds,
    pub tolerances: BTreeMap<String, f64>,
    pub diagnostics: serde_json::Map<String, serde_json::Value>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub cells: Option<Vec<PhaseCell>>,
    pub wall_clock_seconds: f64,
    pub files: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub error: Option<ErrorInfo>,
}

/// Solver tolerances that apply to every run.
pub fn default_tolerances() -> BTreeMap<String, f64> {
    BTreeMap::from([
        ("energy_drift_limit".to_string(), 1e-4),
        ("lindblad_trace_drift_per_step".to_string(), 1e-6),
        (
            "max_unabsorbed_fraction".to_string(),
            crate::analysis::ensemble::MAX_UNABSORBED,
        ),
        ("semiclassical_norm_tolerance".to_string(), 1e-8),
        ("stationary_target_unabsorbed".to_string(), 0.01),
    ])
}

impl Manifest {
    pub fn new(subcommand: &str, config: &RunConfig) -> Self {
        Self {
            status: Status::Ok,
            subcommand: subcommand.to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            config: config.pairs().into_iter().collect(),
            seeds: Seeds {
                base_seed: config.base_seed,
                gaussian_stream: GAUSSIAN_STREAM_ALGORITHM.to_string(),
                outcome_stream: OUTCOME_STREAM_ALGORITHM.to_string(),
            },
            tolerances: default_tolerances(),
            diagnostics: serde_json::Map::new(),
            cells: None,
            wall_clock_seconds: 0.0,
            files: Vec::new(),
            error: None,
        }
    }

    /// Rebuilds the configuration from the echo.
    pub fn parsed_config(&self) -> Result<RunConfig, ConfigError> {
        let text: String = self
            .config
            .iter()
            .map(|(k, v)| format!("{k} = {v}\n"))
            .collect();
        parse_config_str(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("manifest serializes")
    }

    pub fn write(&self, dir: &Path) -> io::Result<()> {
        std::fs::write(dir.join(MANIFEST_FILE), self.to_json() + "\n")
    }

    pub fn read(path: &Path) -> io::Result<Self> {
        let text = std::fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(|e| io::Error::new(io::ErrorKind::InvalidData, e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_echo_round_trips() {
        let mut cfg = RunConfig::default();
        cfg.set("gamma", "0.123456789012345678").unwrap();
        cfg.set("n", "semiclassical").unwrap();
        let m = Manifest::new("sweep", &cfg);
        let back: Manifest = serde_json::from_str(&m.to_json()).unwrap();
        assert_eq!(back, m);
        assert_eq!(back.parsed_config().unwrap(), cfg);
    }

    #[test]
    fn error_manifest_shape() {
        let mut m = Manifest::new("trajectory", &RunConfig::default());
        m.status = Status::Error;
        m.error = Some(ErrorInfo {
            kind: "solver".into(),
            message: "boom".into(),
            key: None,
        });
        let v: serde_json::Value = serde_json::from_str(&m.to_json()).unwrap();
        assert_eq!(v["status"], "error");
        assert_eq!(v["error"]["message"], "boom");
    }
}
