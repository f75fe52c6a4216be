//! Built-in cost-model profiles for the model pairings the tool is most
//! often pointed at. Parameter counts are in parameters, token counts are
//! per-example means; with `d_small = d_large` only the ratios matter for
//! parity analysis.

use std::collections::BTreeMap;

use cascade_core::{CostModel, CostModelParams};

use crate::config::FileConfig;
use crate::CliError;

fn profile(n_small: f64, n_qe: f64) -> CostModelParams {
    CostModelParams { n_small, n_large: 70e9, n_qe, d_small: 1.0, d_large: 1.0 }
}

pub fn builtin_profiles() -> BTreeMap<String, CostModelParams> {
    BTreeMap::from([
        ("tower7b-kiwi22".to_string(), profile(7e9, 0.5e9)),
        ("tower7b-kiwixxl".to_string(), profile(7e9, 10.5e9)),
        ("eurollm1.7b-kiwi22".to_string(), profile(1.7e9, 0.5e9)),
        ("eurollm9b-kiwi22".to_string(), profile(9e9, 0.5e9)),
    ])
}

/// Looks a profile up in the config file first, then the built-ins.
pub fn resolve_cost_model(name: &str, config: &FileConfig) -> Result<CostModel, CliError> {
    let params = config
        .cost_profiles
        .get(name)
        .copied()
        .or_else(|| builtin_profiles().get(name).copied())
        .ok_or_else(|| {
            let mut known: Vec<String> = builtin_profiles().keys().cloned().collect();
            known.extend(config.cost_profiles.keys().cloned());
            known.sort();
            known.dedup();
            CliError::Usage(format!(
                "unknown cost profile \"{name}\" (known: {})",
                known.join(", ")
            ))
        })?;
    CostModel::try_from(params).map_err(|e| CliError::Usage(format!("cost profile \"{name}\": {e}")))
}
