use std::path::PathBuf;

use anyhow::Context;
use assr_core::{Error, ExperimentSpec, SweepAxis};
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use sha2::{Digest, Sha256};

/// An experiment spec plus an optional `"out"` directory, all at the top level
/// of one JSON object. Missing fields take their defaults; unknown fields are
/// rejected.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub out: Option<PathBuf>,
    pub experiment: ExperimentSpec,
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self, Error> {
        let value: Value = if text.trim().is_empty() {
            Value::Object(Map::new())
        } else {
            serde_json::from_str(text)?
        };
        let Value::Object(mut fields) = value else {
            return Err(Error::Config("config must be a JSON object".into()));
        };
        let out = match fields.remove("out") {
            None | Some(Value::Null) => None,
            Some(Value::String(s)) => Some(PathBuf::from(s)),
            Some(other) => return Err(Error::Config(format!("out must be a string, got {other}"))),
        };
        let experiment: ExperimentSpec = serde_json::from_value(Value::Object(fields))?;
        Ok(RunConfig { out, experiment })
    }

    pub fn load(path: &std::path::Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        RunConfig::parse(&text).with_context(|| format!("invalid config {}", path.display()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Command {
    Solve,
    Sweep,
    Demo,
}

/// Everything needed to rerun a command. Contains no timestamps or paths, so
/// replays write identical metadata.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Meta {
    pub version: String,
    pub command: Command,
    pub config: ExperimentSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub axis: Option<SweepAxis>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub values: Option<Vec<f64>>,
    /// Per trial: dictionary, code and noise seeds derived from `seed_base`.
    pub seeds: Vec<[u64; 3]>,
}

impl Meta {
    pub fn new(command: Command, config: &ExperimentSpec, axis: Option<SweepAxis>, values: Option<Vec<f64>>) -> Self {
        let config = config.resolved();
        let seeds = (0..config.trials).map(|t| config.trial_seeds(t)).collect();
        Meta {
            version: env!("CARGO_PKG_VERSION").to_string(),
            command,
            config,
            axis,
            values,
            seeds,
        }
    }

    pub fn to_json(&self) -> String {
        let mut text = serde_json::to_string_pretty(self).expect("meta serializes");
        text.push('\n');
        text
    }

    /// Default run directory, `runs/<command>-<hash>`.
    pub fn default_dir(&self) -> PathBuf {
        let digest = Sha256::digest(self.to_json().as_bytes());
        let name = match self.command {
            Command::Solve => "solve",
            Command::Sweep => "sweep",
            Command::Demo => "demo",
        };
        PathBuf::from("runs").join(format!("{name}-{}", &hex::encode(digest)[..12]))
    }
}
