//! Batched calls against remote translation and QE-scoring services.
//!
//! Requests run through a bounded pool of `max_in_flight` concurrent
//! futures per call, results are joined back in input order, and every
//! successfully parsed response is cached. Failures after the retry
//! budget are reported per item; the rest of the batch is retained.

use std::time::Duration;

use futures::stream::{self, StreamExt};
use reqwest::{Client, StatusCode};
use serde::{Deserialize, Serialize};

use crate::cache::{request_key, ResponseCache};
use crate::config::EndpointConfig;
use crate::GatewayError;

/// Chat-completions-style translation request.
#[derive(Serialize)]
struct ChatRequest<'a> {
    model: &'a str,
    messages: [ChatMessage<'a>; 1],
    temperature: f64,
}

#[derive(Serialize)]
struct ChatMessage<'a> {
    role: &'a str,
    content: &'a str,
}

#[derive(Deserialize)]
struct ChatResponse {
    choices: Vec<ChatChoice>,
}

#[derive(Deserialize)]
struct ChatChoice {
    message: ChatChoiceMessage,
}

#[derive(Deserialize)]
struct ChatChoiceMessage {
    content: String,
}

/// `{source, hypothesis} -> {score}` QE-scoring request.
#[derive(Serialize)]
struct ScoreRequest<'a> {
    model: &'a str,
    source: &'a str,
    hypothesis: &'a str,
}

#[derive(Deserialize)]
struct ScoreResponse {
    score: f64,
}

fn retryable(status: StatusCode) -> bool {
    status.is_server_error() || status == StatusCode::TOO_MANY_REQUESTS
}

fn backoff(attempt: u32) -> Duration {
    Duration::from_millis((50u64 << attempt.min(4)).min(1000))
}

/// Resolves one payload to a response body: cache first, then the network
/// with at most `1 + max_retries` requests.
async fn fetch_body(
    client: &Client,
    endpoint: &EndpointConfig,
    auth: Option<&str>,
    url: &str,
    operation: &str,
    payload: String,
    cache: &ResponseCache,
) -> Result<String, String> {
    let key = request_key(operation, endpoint, &payload);
    if let Some(body) = cache.get(&key) {
        return Ok(body);
    }
    let timeout = Duration::from_secs_f64(endpoint.timeout_secs);
    let mut last_error = String::new();
    for attempt in 0..=endpoint.max_retries {
        if attempt > 0 {
            tokio::time::sleep(backoff(attempt - 1)).await;
        }
        let mut request = client
            .post(url)
            .header("content-type", "application/json")
            .timeout(timeout)
            .body(payload.clone());
        if let Some(token) = auth {
            request = request.bearer_auth(token);
        }
        match request.send().await {
            Err(e) => last_error = format!("request failed: {e}"),
            Ok(response) => {
                let status = response.status();
                if status.is_success() {
                    match response.text().await {
                        Ok(body) => {
                            cache
                                .put(&key, &body)
                                .map_err(|e| format!("cache write failed: {e}"))?;
                            return Ok(body);
                        }
                        Err(e) => last_error = format!("failed to read response body: {e}"),
                    }
                } else if retryable(status) {
                    last_error = format!("server returned {status}");
                } else {
                    return Err(format!("server returned {status}"));
                }
            }
        }
    }
    Err(format!("{last_error} (after {} attempts)", endpoint.max_retries + 1))
}

/// Runs the prepared payloads with bounded concurrency, preserving order.
async fn run_batch(
    client: &Client,
    endpoint: &EndpointConfig,
    path: &str,
    operation: &str,
    payloads: Vec<String>,
    cache: &ResponseCache,
) -> Result<Vec<Result<String, String>>, GatewayError> {
    endpoint.validate()?;
    let auth = endpoint.auth_token()?;
    let url = endpoint.url(path);
    let results = stream::iter(payloads.into_iter().map(|payload| {
        let auth = auth.as_deref();
        let url = url.as_str();
        async move { fetch_body(client, endpoint, auth, url, operation, payload, cache).await }
    }))
    .buffered(endpoint.max_in_flight)
    .collect::<Vec<_>>()
    .await;
    Ok(results)
}

/// Translates the sources, one hypothesis per source in input order.
pub async fn translate_batch(
    client: &Client,
    sources: &[String],
    endpoint: &EndpointConfig,
    cache: &ResponseCache,
) -> Result<Vec<Result<String, String>>, GatewayError> {
    let payloads = sources
        .iter()
        .map(|source| {
            let prompt = endpoint.render_prompt(source);
            serde_json::to_string(&ChatRequest {
                model: &endpoint.model_name,
                messages: [ChatMessage { role: "user", content: &prompt }],
                temperature: endpoint.temperature,
            })
            .expect("chat request serializes")
        })
        .collect();
    let bodies = run_batch(client, endpoint, "/v1/chat/completions", "translate", payloads, cache).await?;
    Ok(bodies
        .into_iter()
        .map(|body| {
            body.and_then(|text| {
                let parsed: ChatResponse = serde_json::from_str(&text)
                    .map_err(|e| format!("malformed translation response: {e}"))?;
                parsed
                    .choices
                    .into_iter()
                    .next()
                    .map(|c| c.message.content)
                    .ok_or_else(|| "translation response had no choices".to_string())
            })
        })
        .collect())
}

/// Scores (source, hypothesis) pairs, one raw score per pair in input
/// order. Orientation is the caller's concern.
pub async fn score_batch(
    client: &Client,
    pairs: &[(String, String)],
    endpoint: &EndpointConfig,
    cache: &ResponseCache,
) -> Result<Vec<Result<f64, String>>, GatewayError> {
    let payloads = pairs
        .iter()
        .map(|(source, hypothesis)| {
            serde_json::to_string(&ScoreRequest {
                model: &endpoint.model_name,
                source,
                hypothesis,
            })
            .expect("score request serializes")
        })
        .collect();
    let bodies = run_batch(client, endpoint, "/v1/score", "score", payloads, cache).await?;
    Ok(bodies
        .into_iter()
        .map(|body| {
            body.and_then(|text| {
                let parsed: ScoreResponse = serde_json::from_str(&text)
                    .map_err(|e| format!("malformed score response: {e}"))?;
                if parsed.score.is_finite() {
                    Ok(parsed.score)
                } else {
                    Err(format!("score is not finite: {}", parsed.score))
                }
            })
        })
        .collect())
}
