//! Content-addressed response cache.
//!
//! Keys hash the endpoint identity, model, and the full request payload,
//! so changing a prompt template naturally invalidates old entries. Each
//! entry is one JSON file under the cache directory.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::EndpointConfig;

/// One cached response body.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CacheEntry {
    pub key: String,
    pub response: String,
    /// Unix seconds at write time.
    pub created_at: u64,
}

/// File-backed cache handle.
#[derive(Debug, Clone)]
pub struct ResponseCache {
    dir: PathBuf,
}

impl ResponseCache {
    pub fn open(dir: impl Into<PathBuf>) -> io::Result<Self> {
        let dir = dir.into();
        fs::create_dir_all(&dir)?;
        Ok(ResponseCache { dir })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    fn entry_path(&self, key: &str) -> PathBuf {
        self.dir.join(format!("{key}.json"))
    }

    /// Returns the cached response body, treating unreadable or corrupt
    /// entries as misses.
    pub fn get(&self, key: &str) -> Option<String> {
        let text = fs::read_to_string(self.entry_path(key)).ok()?;
        let entry: CacheEntry = serde_json::from_str(&text).ok()?;
        Some(entry.response)
    }

    pub fn put(&self, key: &str, response: &str) -> io::Result<()> {
        let entry = CacheEntry {
            key: key.to_string(),
            response: response.to_string(),
            created_at: SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0),
        };
        let body = serde_json::to_string(&entry)?;
        // write-then-rename so a torn write can only produce a miss
        let tmp = self.dir.join(format!(
            "{key}.{}.tmp",
            SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.subsec_nanos()).unwrap_or(0)
        ));
        fs::write(&tmp, body)?;
        fs::rename(tmp, self.entry_path(key))
    }
}

/// Stable content hash over (operation, endpoint identity, payload).
pub fn request_key(operation: &str, endpoint: &EndpointConfig, payload: &str) -> String {
    let mut hasher = Sha256::new();
    hasher.update(operation.as_bytes());
    hasher.update(b"\n");
    hasher.update(endpoint.base_url.as_bytes());
    hasher.update(b"\n");
    hasher.update(endpoint.model_name.as_bytes());
    hasher.update(b"\n");
    hasher.update(payload.as_bytes());
    hex::encode(hasher.finalize())
}
