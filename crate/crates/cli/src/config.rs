//! TOML config file: named cost profiles, endpoint profiles, and live-run
//! settings. Flags override config values.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::Deserialize;

use cascade_core::CostModelParams;
use cascade_gateway::LiveEndpoints;

use crate::CliError;

#[derive(Debug, Default, Deserialize)]
pub struct FileConfig {
    /// Named cost-model profiles; these extend (and may shadow) the
    /// built-in ones.
    #[serde(default)]
    pub cost_profiles: BTreeMap<String, CostModelParams>,
    pub endpoints: Option<LiveEndpoints>,
    pub live: Option<LiveSettings>,
}

fn default_batch_name() -> String {
    "live".to_string()
}

#[derive(Debug, Deserialize)]
pub struct LiveSettings {
    pub lang_pair: String,
    #[serde(default = "default_batch_name")]
    pub batch_name: String,
    /// Response-cache directory; reruns with a warm cache replay offline.
    pub cache_dir: PathBuf,
    pub cost_profile: String,
}

pub fn load_config(path: Option<&Path>) -> Result<FileConfig, CliError> {
    let Some(path) = path else {
        return Ok(FileConfig::default());
    };
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
    toml::from_str(&text)
        .map_err(|e| CliError::Usage(format!("invalid config {}: {e}", path.display())))
}
