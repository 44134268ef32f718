//! Run configuration: the merged view of flags, config-file values, the
//! seed environment variable, and defaults. Every report embeds the
//! resolved config, and re-running from it reproduces the report body
//! byte for byte.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::CliError;

/// Precedence: command-line flag, then config file, then default.
pub fn resolve<T: Copy>(flag: Option<T>, file: Option<T>, default: T) -> T {
    flag.or(file).unwrap_or(default)
}

pub fn resolve_opt<T: Copy>(flag: Option<T>, file: Option<T>) -> Option<T> {
    flag.or(file)
}

/// Grid parameters as given on the command line.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct GridConfig {
    pub lo: f64,
    pub hi: f64,
    pub n: usize,
}

/// The full, resolved configuration of one run. Serialized into every
/// report; fields irrelevant to the subcommand stay unset.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunConfig {
    pub subcommand: String,
    pub seed: u64,
    pub stream: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub v1: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub v2: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub trials: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub grid: Option<GridConfig>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub density: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mc_trials: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub k_max: Option<u32>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub m: Option<u32>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub criterion: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub formulation: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pin_labels: Option<bool>,
    pub format: String,
}

/// Values read from a flat `key = value` config file (a TOML table of
/// scalars). Unknown keys are rejected so typos surface immediately.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub seed: Option<u64>,
    pub stream: Option<u64>,
    pub alpha: Option<f64>,
    pub v1: Option<f64>,
    pub v2: Option<f64>,
    pub trials: Option<u64>,
    pub grid_lo: Option<f64>,
    pub grid_hi: Option<f64>,
    pub grid_n: Option<u64>,
    pub density: Option<String>,
    pub mc_trials: Option<u64>,
    pub k_max: Option<u32>,
    pub m: Option<u32>,
    pub criterion: Option<String>,
    pub formulation: Option<String>,
    pub pin_labels: Option<bool>,
    pub format: Option<String>,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        Self::parse(&text)
            .map_err(|e| CliError::Usage(format!("bad config {}: {e}", path.display())))
    }

    pub fn parse(text: &str) -> Result<Self, String> {
        // Parse as TOML first so quoting and comments behave predictably,
        // then reject anything that is not a flat scalar table.
        let table: BTreeMap<String, toml::Value> =
            toml::from_str(text).map_err(|e| e.to_string())?;
        for (k, v) in &table {
            if v.is_table() || v.is_array() {
                return Err(format!("key `{k}` must be a scalar"));
            }
        }
        toml::from_str(text).map_err(|e| e.to_string())
    }
}
