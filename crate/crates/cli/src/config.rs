//! Layered configuration: CLI flag > config file > built-in default.

use std::fs;
use std::path::Path;

use serde::Deserialize;

use crate::CliError;

/// Optional overrides loadable from a JSON config file. Any subset of
/// fields may be present; unknown fields are rejected to catch typos.
#[derive(Debug, Default, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    // Pair generation.
    pub n_pairs: Option<usize>,
    pub chain_max: Option<usize>,
    pub seed: Option<u64>,
    pub class_weights: Option<[f64; 6]>,
    // Training.
    pub margin: Option<f64>,
    pub lr: Option<f64>,
    pub weight_decay: Option<f64>,
    pub batch_size: Option<usize>,
    pub max_epochs: Option<usize>,
    pub patience: Option<usize>,
}

impl FileConfig {
    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::io(format!("config {}: {e}", path.display())))?;
        serde_json::from_str(&text)
            .map_err(|e| CliError::validation(format!("config {}: {e}", path.display())))
    }
}

/// flag > file > default.
pub fn resolve<T>(flag: Option<T>, file: Option<T>, default: T) -> T {
    flag.or(file).unwrap_or(default)
}

/// Writes the fully resolved configuration JSON next to a run's outputs, so
/// any artifact can be reproduced exactly.
pub fn echo_run_config(path: &Path, value: &serde_json::Value) -> Result<(), CliError> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    fs::write(path, format!("{:#}\n", value))?;
    Ok(())
}
