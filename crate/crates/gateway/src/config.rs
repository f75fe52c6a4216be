//! Remote endpoint profiles.

use serde::{Deserialize, Serialize};

use cascade_core::ScoreDirection;

use crate::GatewayError;

fn default_timeout_secs() -> f64 {
    30.0
}

fn default_max_retries() -> u32 {
    2
}

fn default_max_in_flight() -> usize {
    4
}

fn default_prompt_template() -> String {
    "{source}".to_string()
}

/// One remote inference service. Auth tokens are read from the named
/// environment variable, never from config values.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EndpointConfig {
    pub base_url: String,
    pub model_name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub auth_token_env: Option<String>,
    #[serde(default = "default_timeout_secs")]
    pub timeout_secs: f64,
    #[serde(default = "default_max_retries")]
    pub max_retries: u32,
    #[serde(default = "default_max_in_flight")]
    pub max_in_flight: usize,
    /// Translation prompt; `{source}` is replaced with the source text.
    #[serde(default = "default_prompt_template")]
    pub prompt_template: String,
    /// Sampling temperature; 0 requests greedy decoding.
    #[serde(default)]
    pub temperature: f64,
}

impl EndpointConfig {
    pub fn new(base_url: impl Into<String>, model_name: impl Into<String>) -> Self {
        EndpointConfig {
            base_url: base_url.into(),
            model_name: model_name.into(),
            auth_token_env: None,
            timeout_secs: default_timeout_secs(),
            max_retries: default_max_retries(),
            max_in_flight: default_max_in_flight(),
            prompt_template: default_prompt_template(),
            temperature: 0.0,
        }
    }

    pub fn validate(&self) -> Result<(), GatewayError> {
        if self.base_url.is_empty() {
            return Err(GatewayError::InvalidConfig { reason: "base_url must be non-empty".into() });
        }
        if !(self.timeout_secs.is_finite() && self.timeout_secs > 0.0) {
            return Err(GatewayError::InvalidConfig {
                reason: format!("timeout_secs must be positive, got {}", self.timeout_secs),
            });
        }
        if self.max_in_flight == 0 {
            return Err(GatewayError::InvalidConfig {
                reason: "max_in_flight must be at least 1".into(),
            });
        }
        Ok(())
    }

    pub(crate) fn url(&self, path: &str) -> String {
        format!("{}{}", self.base_url.trim_end_matches('/'), path)
    }

    pub(crate) fn render_prompt(&self, source: &str) -> String {
        self.prompt_template.replace("{source}", source)
    }

    /// Resolves the auth token, failing before any request when the
    /// configured variable is unset.
    pub(crate) fn auth_token(&self) -> Result<Option<String>, GatewayError> {
        match &self.auth_token_env {
            None => Ok(None),
            Some(var) => std::env::var(var)
                .map(Some)
                .map_err(|_| GatewayError::MissingAuthToken { var: var.clone() }),
        }
    }
}

/// A QE-scoring endpoint plus the orientation of the scores it returns.
/// Lower-is-better scores are negated before entering a batch.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct QeEndpoint {
    #[serde(flatten)]
    pub endpoint: EndpointConfig,
    #[serde(default)]
    pub orientation: ScoreDirection,
}

/// The three services a live cascade run talks to.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LiveEndpoints {
    pub small: EndpointConfig,
    pub qe: QeEndpoint,
    pub large: EndpointConfig,
}
