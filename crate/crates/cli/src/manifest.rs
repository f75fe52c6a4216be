//! Run manifests: enough provenance to reproduce any output bit for bit
//! given warm caches. Written alongside every output directory.

use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::CliError;

#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: &'static str,
    /// Full invocation as received.
    pub argv: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub config: Option<PathBuf>,
    pub inputs: Vec<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub grid: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cost_profile: Option<String>,
    /// File names written to the output directory.
    pub outputs: Vec<String>,
}

impl RunManifest {
    pub fn new(command: &'static str, config: Option<PathBuf>) -> Self {
        RunManifest {
            tool: "cascade",
            version: env!("CARGO_PKG_VERSION"),
            command,
            argv: std::env::args().collect(),
            config,
            inputs: Vec::new(),
            seed: None,
            grid: None,
            cost_profile: None,
            outputs: Vec::new(),
        }
    }
}

pub fn write_json(dir: &Path, file: &str, value: &impl Serialize) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value)
        .map_err(|e| CliError::Other(anyhow::anyhow!("serializing {file}: {e}")))?;
    write_text(dir, file, &(text + "\n"))
}

pub fn write_text(dir: &Path, file: &str, text: &str) -> Result<(), CliError> {
    std::fs::create_dir_all(dir)
        .map_err(|e| CliError::Other(anyhow::anyhow!("creating {}: {e}", dir.display())))?;
    let path = dir.join(file);
    std::fs::write(&path, text)
        .map_err(|e| CliError::Other(anyhow::anyhow!("writing {}: {e}", path.display())))
}
