#![allow(dead_code)]

use std::collections::BTreeMap;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use axum::extract::State;
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::post;
use axum::{Json, Router};
use serde_json::{json, Value};

pub const DIM: usize = 64;

/// FNV-1a, used to spread words over embedding dimensions.
pub fn fnv(text: &str) -> u64 {
    let mut h: u64 = 0xcbf29ce484222325;
    for b in text.as_bytes() {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x100000001b3);
    }
    h
}

pub fn words(text: &str) -> Vec<String> {
    text.split_whitespace()
        .map(|w| w.trim_matches(|c: char| !c.is_alphanumeric()).to_lowercase())
        .filter(|w| !w.is_empty())
        .collect()
}

/// Bag-of-words vector; never all zero.
pub fn bow(text: &str) -> Vec<f64> {
    let mut v = vec![0.0; DIM];
    for w in words(text) {
        v[(fnv(&w) % DIM as u64) as usize] += 1.0;
    }
    v[DIM - 1] += 0.01;
    v
}

pub enum Generate {
    /// `prefix + prompt`.
    Echo(String),
    /// First rule whose key occurs in the prompt wins; `None` answers HTTP 500.
    Script(Vec<(String, Option<String>)>),
}

pub enum Embed {
    /// One-hot at the position of the text within its request.
    BasisByIndex,
    BagOfWords,
    /// Dimension used for the n-th embeddings request (last value repeats).
    Dimensions(Vec<usize>),
}

pub type DelayFn = Arc<dyn Fn(&Value) -> u64 + Send + Sync>;

pub struct MockConfig {
    pub generate: Generate,
    pub embed: Embed,
    /// The first `fail_first` requests (any route) answer HTTP 503.
    pub fail_first: usize,
    /// Per-request delay in milliseconds, computed from the request body.
    pub delay: Option<DelayFn>,
    /// Rejects native generation bodies with HTTP 422.
    pub reject_native: bool,
}

impl Default for MockConfig {
    fn default() -> Self {
        MockConfig {
            generate: Generate::Echo("DEF:".into()),
            embed: Embed::BagOfWords,
            fail_first: 0,
            delay: None,
            reject_native: false,
        }
    }
}

#[derive(Default)]
pub struct MockStats {
    pub requests: AtomicUsize,
    pub in_flight: AtomicUsize,
    pub peak_in_flight: AtomicUsize,
    pub embed_requests: AtomicUsize,
    pub bodies: Mutex<Vec<(String, Value)>>,
}

impl MockStats {
    pub fn requests(&self) -> usize {
        self.requests.load(Ordering::SeqCst)
    }

    pub fn peak(&self) -> usize {
        self.peak_in_flight.load(Ordering::SeqCst)
    }

    pub fn count_by_route(&self) -> BTreeMap<String, usize> {
        let mut m = BTreeMap::new();
        for (route, _) in self.bodies.lock().unwrap().iter() {
            *m.entry(route.clone()).or_insert(0) += 1;
        }
        m
    }
}

struct Mock {
    cfg: MockConfig,
    stats: Arc<MockStats>,
}

pub struct MockServer {
    pub url: String,
    pub stats: Arc<MockStats>,
}

struct InFlight<'a>(&'a MockStats);

impl<'a> InFlight<'a> {
    fn enter(stats: &'a MockStats) -> Self {
        let now = stats.in_flight.fetch_add(1, Ordering::SeqCst) + 1;
        stats.peak_in_flight.fetch_max(now, Ordering::SeqCst);
        InFlight(stats)
    }
}

impl Drop for InFlight<'_> {
    fn drop(&mut self) {
        self.0.in_flight.fetch_sub(1, Ordering::SeqCst);
    }
}

async fn prelude(m: &Mock, route: &str, body: &Value) -> Option<Response> {
    let n = m.stats.requests.fetch_add(1, Ordering::SeqCst);
    m.stats.bodies.lock().unwrap().push((route.to_owned(), body.clone()));
    if let Some(d) = &m.cfg.delay {
        tokio::time::sleep(Duration::from_millis(d(body))).await;
    }
    (n < m.cfg.fail_first).then(|| (StatusCode::SERVICE_UNAVAILABLE, "warming up").into_response())
}

async fn completions(State(m): State<Arc<Mock>>, Json(body): Json<Value>) -> Response {
    let _guard = InFlight::enter(&m.stats);
    if let Some(r) = prelude(&m, "completions", &body).await {
        return r;
    }
    if m.cfg.reject_native && body.get("generation").is_some() {
        return (StatusCode::UNPROCESSABLE_ENTITY, "unknown field generation").into_response();
    }
    let prompt = body["prompt"].as_str().unwrap_or_default();
    let text = match &m.cfg.generate {
        Generate::Echo(prefix) => Some(format!("{prefix}{prompt}")),
        Generate::Script(rules) => rules
            .iter()
            .find(|(k, _)| prompt.contains(k.as_str()))
            .map(|(_, v)| v.clone())
            .unwrap_or_else(|| Some(format!("DEF:{prompt}"))),
    };
    match text {
        Some(t) if body.get("generation").is_some() => Json(json!({ "text": format!(" {t}\n") })).into_response(),
        Some(t) => Json(json!({ "choices": [{ "text": t }] })).into_response(),
        None => (StatusCode::INTERNAL_SERVER_ERROR, "scripted failure").into_response(),
    }
}

async fn embeddings(State(m): State<Arc<Mock>>, Json(body): Json<Value>) -> Response {
    let _guard = InFlight::enter(&m.stats);
    if let Some(r) = prelude(&m, "embeddings", &body).await {
        return r;
    }
    let n = m.stats.embed_requests.fetch_add(1, Ordering::SeqCst);
    let inputs: Vec<String> = serde_json::from_value(body["input"].clone()).unwrap_or_default();
    let data: Vec<Value> = inputs
        .iter()
        .enumerate()
        .map(|(i, text)| {
            let v = match &m.cfg.embed {
                Embed::BasisByIndex => {
                    let mut v = vec![0.0; inputs.len().max(1)];
                    v[i] = 1.0;
                    v
                }
                Embed::BagOfWords => bow(text),
                Embed::Dimensions(dims) => vec![1.0; *dims.get(n).or(dims.last()).unwrap()],
            };
            json!({ "index": i, "embedding": v })
        })
        .rev()
        .collect();
    Json(json!({ "data": data })).into_response()
}

async fn token_embeddings(State(m): State<Arc<Mock>>, Json(body): Json<Value>) -> Response {
    let _guard = InFlight::enter(&m.stats);
    if let Some(r) = prelude(&m, "token_embeddings", &body).await {
        return r;
    }
    let text = body["input"].as_str().unwrap_or_default();
    let tokens: Vec<&str> = text.split_whitespace().collect();
    let embeddings: Vec<Vec<f64>> = tokens.iter().map(|t| bow(t)).collect();
    Json(json!({ "tokens": tokens, "embeddings": embeddings })).into_response()
}

/// Starts a mock on its own thread and runtime so that both async tests and
/// blocking CLI runs can use it.
pub fn start(cfg: MockConfig) -> MockServer {
    let stats = Arc::new(MockStats::default());
    let mock = Arc::new(Mock {
        cfg,
        stats: stats.clone(),
    });
    let (tx, rx) = std::sync::mpsc::channel();
    std::thread::spawn(move || {
        let rt = tokio::runtime::Builder::new_multi_thread()
            .enable_all()
            .build()
            .unwrap();
        rt.block_on(async move {
            let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
            tx.send(listener.local_addr().unwrap()).unwrap();
            let app = Router::new()
                .route("/completions", post(completions))
                .route("/embeddings", post(embeddings))
                .route("/token_embeddings", post(token_embeddings))
                .with_state(mock);
            axum::serve(listener, app).await.unwrap();
        });
    });
    let addr = rx.recv().unwrap();
    MockServer {
        url: format!("http://{addr}"),
        stats,
    }
}
