//! Live-mode clients: drive remote translation and QE-scoring services to
//! populate a batch, with on-disk response caching for replayability.
//!
//! The wire contract is JSON over HTTP: chat-completions-style requests at
//! `/v1/chat/completions` for translation and a `{source, hypothesis} ->
//! {score}` contract at `/v1/score` for QE. Deferral follows batch
//! semantics: score everything, then rank; nothing streams through a
//! threshold.

use thiserror::Error;

use cascade_core::{BatchError, CostError, DeferralError};

pub mod cache;
pub mod client;
pub mod config;
pub mod live;

pub use cache::{request_key, CacheEntry, ResponseCache};
pub use client::{score_batch, translate_batch};
pub use config::{EndpointConfig, LiveEndpoints, QeEndpoint};
pub use live::{run_cascade_live, LiveFailure, LiveRun, LiveStage};

#[derive(Debug, Error)]
pub enum GatewayError {
    #[error("auth token environment variable {var} is not set")]
    MissingAuthToken { var: String },
    #[error("invalid endpoint configuration: {reason}")]
    InvalidConfig { reason: String },
    #[error("cache error: {0}")]
    Cache(#[from] std::io::Error),
    #[error("no records survived translation and scoring")]
    NoUsableRecords,
    #[error(transparent)]
    Batch(#[from] BatchError),
    #[error(transparent)]
    Deferral(#[from] DeferralError),
    #[error(transparent)]
    Cost(#[from] CostError),
}
