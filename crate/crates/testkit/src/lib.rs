//! In-process mock of the translation/QE wire contract, with request
//! instrumentation for asserting call counts, call targets, concurrency
//! bounds, and retry budgets.
//!
//! Serves `/v1/chat/completions` (chat-completions-style translation) and
//! `/v1/score` (`{source, hypothesis} -> {score}`). Fault injection is
//! keyed on the request's source text, which assumes the pass-through
//! `{source}` prompt template.

use std::collections::{HashMap, HashSet};
use std::net::SocketAddr;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use axum::extract::State;
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::post;
use axum::{Json, Router};
use serde_json::{json, Value};
use tokio::net::TcpListener;

type TranslateFn = dyn Fn(&str, &str) -> String + Send + Sync;
type ScoreFn = dyn Fn(&str, &str) -> f64 + Send + Sync;

/// Configurable behavior of the mock endpoints.
pub struct MockBehavior {
    /// `(model, source) -> hypothesis`.
    pub translate: Arc<TranslateFn>,
    /// `(source, hypothesis) -> score`.
    pub score: Arc<ScoreFn>,
    /// Artificial handler latency, to make concurrency observable.
    pub delay: Duration,
    /// Sources whose requests always return 500.
    pub fail_always: HashSet<String>,
    /// Sources whose first N requests return 500, then succeed.
    pub fail_first: HashMap<String, u32>,
}

impl Default for MockBehavior {
    fn default() -> Self {
        MockBehavior {
            translate: Arc::new(|_model, source| source.to_uppercase()),
            score: Arc::new(|_source, hypothesis| hypothesis.len() as f64 / 100.0),
            delay: Duration::ZERO,
            fail_always: HashSet::new(),
            fail_first: HashMap::new(),
        }
    }
}

impl MockBehavior {
    /// Scores by looking up the source in a fixed table; unknown sources
    /// score 0.
    pub fn with_score_table(mut self, table: HashMap<String, f64>) -> Self {
        self.score = Arc::new(move |source, _hyp| table.get(source).copied().unwrap_or(0.0));
        self
    }
}

pub struct MockState {
    behavior: MockBehavior,
    fail_budget: Mutex<HashMap<String, u32>>,
    pub requests_total: AtomicUsize,
    in_flight: AtomicUsize,
    pub max_in_flight_seen: AtomicUsize,
    translate_calls: Mutex<Vec<(String, String)>>,
    score_calls: Mutex<Vec<(String, String)>>,
}

struct InFlightGuard<'a>(&'a MockState);

impl Drop for InFlightGuard<'_> {
    fn drop(&mut self) {
        self.0.in_flight.fetch_sub(1, Ordering::SeqCst);
    }
}

impl MockState {
    fn enter(&self) -> InFlightGuard<'_> {
        let now = self.in_flight.fetch_add(1, Ordering::SeqCst) + 1;
        self.max_in_flight_seen.fetch_max(now, Ordering::SeqCst);
        self.requests_total.fetch_add(1, Ordering::SeqCst);
        InFlightGuard(self)
    }

    fn should_fail(&self, source: &str) -> bool {
        if self.behavior.fail_always.contains(source) {
            return true;
        }
        let mut budget = self.fail_budget.lock().unwrap();
        if let Some(remaining) = budget.get_mut(source) {
            if *remaining > 0 {
                *remaining -= 1;
                return true;
            }
        }
        false
    }

    pub fn total_requests(&self) -> usize {
        self.requests_total.load(Ordering::SeqCst)
    }

    pub fn max_in_flight(&self) -> usize {
        self.max_in_flight_seen.load(Ordering::SeqCst)
    }

    /// `(model, source)` pairs seen by the translation route, in arrival
    /// order.
    pub fn translate_calls(&self) -> Vec<(String, String)> {
        self.translate_calls.lock().unwrap().clone()
    }

    /// Sources routed to the given model, in arrival order.
    pub fn sources_translated_by(&self, model: &str) -> Vec<String> {
        self.translate_calls()
            .into_iter()
            .filter(|(m, _)| m == model)
            .map(|(_, s)| s)
            .collect()
    }

    pub fn score_calls(&self) -> Vec<(String, String)> {
        self.score_calls.lock().unwrap().clone()
    }
}

/// A running mock server bound to an ephemeral localhost port.
pub struct MockServer {
    pub addr: SocketAddr,
    pub state: Arc<MockState>,
}

impl MockServer {
    pub async fn spawn(behavior: MockBehavior) -> MockServer {
        let state = Arc::new(MockState {
            fail_budget: Mutex::new(behavior.fail_first.clone()),
            behavior,
            requests_total: AtomicUsize::new(0),
            in_flight: AtomicUsize::new(0),
            max_in_flight_seen: AtomicUsize::new(0),
            translate_calls: Mutex::new(Vec::new()),
            score_calls: Mutex::new(Vec::new()),
        });
        let app = Router::new()
            .route("/v1/chat/completions", post(chat_handler))
            .route("/v1/score", post(score_handler))
            .with_state(state.clone());
        let listener = TcpListener::bind("127.0.0.1:0").await.expect("bind mock server");
        let addr = listener.local_addr().expect("mock server addr");
        tokio::spawn(async move {
            axum::serve(listener, app).await.expect("mock server");
        });
        MockServer { addr, state }
    }

    pub fn url(&self) -> String {
        format!("http://{}", self.addr)
    }
}

async fn chat_handler(State(state): State<Arc<MockState>>, Json(request): Json<Value>) -> Response {
    let guard = state.enter();
    let model = request["model"].as_str().unwrap_or_default().to_string();
    let source = request["messages"][0]["content"].as_str().unwrap_or_default().to_string();
    tokio::time::sleep(state.behavior.delay).await;
    if state.should_fail(&source) {
        drop(guard);
        return (StatusCode::INTERNAL_SERVER_ERROR, "injected failure").into_response();
    }
    state.translate_calls.lock().unwrap().push((model.clone(), source.clone()));
    let hypothesis = (state.behavior.translate)(&model, &source);
    drop(guard);
    Json(json!({
        "choices": [{"message": {"role": "assistant", "content": hypothesis}}]
    }))
    .into_response()
}

async fn score_handler(State(state): State<Arc<MockState>>, Json(request): Json<Value>) -> Response {
    let guard = state.enter();
    let source = request["source"].as_str().unwrap_or_default().to_string();
    let hypothesis = request["hypothesis"].as_str().unwrap_or_default().to_string();
    tokio::time::sleep(state.behavior.delay).await;
    if state.should_fail(&source) {
        drop(guard);
        return (StatusCode::INTERNAL_SERVER_ERROR, "injected failure").into_response();
    }
    state.score_calls.lock().unwrap().push((source.clone(), hypothesis.clone()));
    let score = (state.behavior.score)(&source, &hypothesis);
    drop(guard);
    Json(json!({ "score": score })).into_response()
}
