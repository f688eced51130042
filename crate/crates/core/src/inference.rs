//! HTTP clients for text generation and embedding services.
//!
//! All batch operations keep input order regardless of completion order, cap
//! the number of outstanding requests, retry transient failures, and go
//! through a content-addressed response cache that can be persisted as
//! JSON-lines.
//!
//! Wire shapes (paths are relative to `base_url`):
//!
//! * `POST /completions` with `{"model", "prompt", "generation": {..}}`, answered by
//!   `{"text": ..}`. When the server rejects that body (HTTP 400/404/422) the
//!   client switches to the plain completions shape
//!   `{"model", "prompt", "max_tokens", "temperature", "best_of", "n"}` and reads
//!   `choices[0].text`. That mapping only approximates beam search.
//! * `POST /embeddings` with `{"model", "input": [..]}`, answered by
//!   `{"data": [{"index", "embedding"}]}`.
//! * `POST /token_embeddings` with `{"model", "input": ".."}`, answered by
//!   `{"tokens": [..], "embeddings": [[..]]}`.

use std::collections::HashMap;
use std::fmt;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::{Arc, Mutex, RwLock};
use std::time::Duration;

use futures::stream::{self, StreamExt};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::embedding::EmbeddingVector;
use crate::metrics::TokenEmbeddings;

/// Environment variable read for the bearer token when none is configured.
pub const API_KEY_ENV: &str = "SENSEGLOSS_API_KEY";

#[derive(Debug, Clone, Error, PartialEq)]
pub enum InferenceError {
    #[error("nothing to send: input list is empty")]
    EmptyInput,
    #[error("endpoint unreachable after {attempts} attempt(s): {message}")]
    EndpointUnreachable { attempts: u32, message: String },
    #[error("endpoint answered HTTP {status} after {attempts} attempt(s): {body}")]
    HttpStatus { status: u16, attempts: u32, body: String },
    #[error("bad response: {0}")]
    BadResponse(String),
    #[error("embedding dimensions differ: {expected} vs {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("cache: {0}")]
    Cache(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DecodingStrategy {
    #[default]
    Beam,
    Greedy,
    Sampling,
    BeamSampling,
    Contrastive,
}

impl DecodingStrategy {
    pub fn samples(self) -> bool {
        matches!(self, DecodingStrategy::Sampling | DecodingStrategy::BeamSampling)
    }
}

impl FromStr for DecodingStrategy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "beam" => Ok(DecodingStrategy::Beam),
            "greedy" => Ok(DecodingStrategy::Greedy),
            "sampling" => Ok(DecodingStrategy::Sampling),
            "beam_sampling" => Ok(DecodingStrategy::BeamSampling),
            "contrastive" => Ok(DecodingStrategy::Contrastive),
            other => Err(format!("unknown decoding strategy {other:?}")),
        }
    }
}

/// Decoding parameters sent with every generation request. Defaults are
/// beam search with 5 beams.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GenerationConfig {
    pub num_beams: u32,
    pub do_sample: bool,
    pub length_penalty: f64,
    pub early_stopping: bool,
    pub repetition_penalty: f64,
    pub max_new_tokens: u32,
    pub strategy: DecodingStrategy,
    /// Sent only for sampling strategies.
    pub seed: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub temperature: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub top_k: Option<u32>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub top_p: Option<f64>,
    /// Degeneration penalty for contrastive search.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub penalty_alpha: Option<f64>,
}

impl Default for GenerationConfig {
    fn default() -> Self {
        GenerationConfig {
            num_beams: 5,
            do_sample: false,
            length_penalty: 1.1,
            early_stopping: true,
            repetition_penalty: 1.1,
            max_new_tokens: 64,
            strategy: DecodingStrategy::Beam,
            seed: 0,
            temperature: None,
            top_k: None,
            top_p: None,
            penalty_alpha: None,
        }
    }
}

impl GenerationConfig {
    pub fn validate(&self) -> Result<(), InferenceError> {
        let bad = |m: &str| Err(InferenceError::Config(m.to_owned()));
        if self.num_beams < 1 {
            return bad("num_beams must be at least 1");
        }
        if self.length_penalty.is_nan() || self.length_penalty <= 0.0 {
            return bad("length_penalty must be positive");
        }
        if self.repetition_penalty.is_nan() || self.repetition_penalty < 1.0 {
            return bad("repetition_penalty must be at least 1");
        }
        if self.max_new_tokens == 0 {
            return bad("max_new_tokens must be positive");
        }
        if self.strategy.samples() != self.do_sample {
            return bad("do_sample must be true exactly for sampling strategies");
        }
        Ok(())
    }

    /// The body of the `generation` object in native requests.
    fn native_body(&self) -> Value {
        let mut body = json!({
            "num_beams": self.num_beams,
            "do_sample": self.do_sample,
            "length_penalty": self.length_penalty,
            "early_stopping": self.early_stopping,
            "repetition_penalty": self.repetition_penalty,
            "max_new_tokens": self.max_new_tokens,
            "strategy": self.strategy,
        });
        let obj = body.as_object_mut().expect("object literal");
        if self.strategy.samples() {
            obj.insert("seed".into(), json!(self.seed));
        }
        for (key, value) in [
            ("temperature", self.temperature.map(Value::from)),
            ("top_k", self.top_k.map(Value::from)),
            ("top_p", self.top_p.map(Value::from)),
            ("penalty_alpha", self.penalty_alpha.map(Value::from)),
        ] {
            if let Some(v) = value {
                obj.insert(key.into(), v);
            }
        }
        body
    }

    /// Approximate mapping onto the plain completions shape.
    fn completions_body(&self, model: &str, prompt: &str) -> Value {
        let mut body = json!({
            "model": model,
            "prompt": prompt,
            "max_tokens": self.max_new_tokens,
            "n": 1,
            "temperature": if self.do_sample { self.temperature.unwrap_or(1.0) } else { 0.0 },
            "best_of": match self.strategy {
                DecodingStrategy::Beam | DecodingStrategy::BeamSampling => self.num_beams,
                _ => 1,
            },
        });
        let obj = body.as_object_mut().expect("object literal");
        if self.strategy.samples() {
            obj.insert("seed".into(), json!(self.seed));
        }
        if let Some(p) = self.top_p {
            obj.insert("top_p".into(), json!(p));
        }
        body
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WireFormat {
    /// Native body first, completions shape once the server rejects it.
    #[default]
    Auto,
    Native,
    Completions,
}

#[derive(Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EndpointConfig {
    pub base_url: String,
    pub model_name: String,
    #[serde(skip_serializing)]
    pub api_key: Option<String>,
    pub timeout_secs: f64,
    pub max_retries: u32,
    pub max_in_flight: usize,
    pub retry_backoff_ms: u64,
    pub embed_batch_size: usize,
    pub wire: WireFormat,
}

impl fmt::Debug for EndpointConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("EndpointConfig")
            .field("base_url", &self.base_url)
            .field("model_name", &self.model_name)
            .field("api_key", &self.api_key.as_ref().map(|_| "<redacted>"))
            .field("timeout_secs", &self.timeout_secs)
            .field("max_retries", &self.max_retries)
            .field("max_in_flight", &self.max_in_flight)
            .field("wire", &self.wire)
            .finish()
    }
}

impl Default for EndpointConfig {
    fn default() -> Self {
        EndpointConfig {
            base_url: "http://127.0.0.1:8080".into(),
            model_name: "default".into(),
            api_key: None,
            timeout_secs: 60.0,
            max_retries: 3,
            max_in_flight: 4,
            retry_backoff_ms: 200,
            embed_batch_size: 32,
            wire: WireFormat::Auto,
        }
    }
}

impl EndpointConfig {
    pub fn new(base_url: impl Into<String>, model_name: impl Into<String>) -> Self {
        EndpointConfig {
            base_url: base_url.into(),
            model_name: model_name.into(),
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<(), InferenceError> {
        let bad = |m: &str| Err(InferenceError::Config(m.to_owned()));
        if !(self.base_url.starts_with("http://") || self.base_url.starts_with("https://")) {
            return bad("base_url must be an http(s) URL");
        }
        if !(self.timeout_secs > 0.0 && self.timeout_secs.is_finite()) {
            return bad("timeout_secs must be positive");
        }
        if self.max_in_flight == 0 {
            return bad("max_in_flight must be positive");
        }
        if self.embed_batch_size == 0 {
            return bad("embed_batch_size must be positive");
        }
        Ok(())
    }

    fn url(&self, path: &str) -> String {
        format!("{}/{}", self.base_url.trim_end_matches('/'), path)
    }
}

#[derive(Serialize, Deserialize)]
struct CacheLine {
    key: String,
    response: Value,
}

/// Content-addressed response cache, optionally backed by an append-only
/// JSON-lines file. Later lines win when a key repeats.
#[derive(Debug, Default)]
pub struct ResponseCache {
    entries: RwLock<HashMap<String, Value>>,
    file: Option<Mutex<File>>,
    path: Option<PathBuf>,
}

impl ResponseCache {
    pub fn in_memory() -> Self {
        ResponseCache::default()
    }

    /// Loads an existing cache file (a truncated final line is ignored) and
    /// opens it for appending.
    pub fn open(path: &Path) -> Result<Self, InferenceError> {
        let mut entries = HashMap::new();
        if path.exists() {
            let file = File::open(path).map_err(|e| InferenceError::Cache(format!("{}: {e}", path.display())))?;
            for (i, line) in BufReader::new(file).lines().enumerate() {
                let line = line.map_err(|e| InferenceError::Cache(e.to_string()))?;
                if line.trim().is_empty() {
                    continue;
                }
                match serde_json::from_str::<CacheLine>(&line) {
                    Ok(l) => {
                        entries.insert(l.key, l.response);
                    }
                    Err(e) => log::warn!("{}:{}: unreadable cache line skipped: {e}", path.display(), i + 1),
                }
            }
        }
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(|e| InferenceError::Cache(format!("{}: {e}", path.display())))?;
        Ok(ResponseCache {
            entries: RwLock::new(entries),
            file: Some(Mutex::new(file)),
            path: Some(path.to_owned()),
        })
    }

    pub fn path(&self) -> Option<&Path> {
        self.path.as_deref()
    }

    pub fn len(&self) -> usize {
        self.entries.read().expect("cache lock").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn get(&self, key: &str) -> Option<Value> {
        self.entries.read().expect("cache lock").get(key).cloned()
    }

    pub fn insert(&self, key: String, response: Value) -> Result<(), InferenceError> {
        if let Some(file) = &self.file {
            let mut line = serde_json::to_string(&CacheLine {
                key: key.clone(),
                response: response.clone(),
            })
            .expect("json values serialize");
            line.push('\n');
            let mut f = file.lock().expect("cache file lock");
            f.write_all(line.as_bytes())
                .and_then(|_| f.flush())
                .map_err(|e| InferenceError::Cache(e.to_string()))?;
        }
        self.entries.write().expect("cache lock").insert(key, response);
        Ok(())
    }
}

/// Stable key: SHA-256 over the operation, model and full request body.
pub fn cache_key(operation: &str, model: &str, body: &Value) -> String {
    let canonical = serde_json::to_string(&json!({
        "operation": operation,
        "model": model,
        "body": body,
    }))
    .expect("json values serialize");
    hex::encode(Sha256::digest(canonical.as_bytes()))
}

/// Request counters, readable while a batch is running.
#[derive(Debug, Default)]
pub struct ClientStats {
    http_requests: AtomicU64,
    retries: AtomicU64,
    cache_hits: AtomicU64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub struct StatsSnapshot {
    pub http_requests: u64,
    pub retries: u64,
    pub cache_hits: u64,
}

impl ClientStats {
    pub fn snapshot(&self) -> StatsSnapshot {
        StatsSnapshot {
            http_requests: self.http_requests.load(Ordering::SeqCst),
            retries: self.retries.load(Ordering::SeqCst),
            cache_hits: self.cache_hits.load(Ordering::SeqCst),
        }
    }
}

/// Client for one inference endpoint. Cheap to clone; clones share the
/// cache and counters.
#[derive(Debug, Clone)]
pub struct InferenceClient {
    http: reqwest::Client,
    endpoint: Arc<EndpointConfig>,
    cache: Arc<ResponseCache>,
    stats: Arc<ClientStats>,
    native_rejected: Arc<AtomicBool>,
}

enum Attempt {
    Retry(InferenceError),
    Fatal(InferenceError),
}

impl InferenceClient {
    pub fn new(mut endpoint: EndpointConfig, cache: Arc<ResponseCache>) -> Result<Self, InferenceError> {
        endpoint.validate()?;
        if endpoint.api_key.is_none() {
            endpoint.api_key = std::env::var(API_KEY_ENV).ok().filter(|k| !k.is_empty());
        }
        let http = reqwest::Client::builder()
            .timeout(Duration::from_secs_f64(endpoint.timeout_secs))
            .build()
            .map_err(|e| InferenceError::Config(e.to_string()))?;
        Ok(InferenceClient {
            http,
            endpoint: Arc::new(endpoint),
            cache,
            stats: Arc::new(ClientStats::default()),
            native_rejected: Arc::new(AtomicBool::new(false)),
        })
    }

    pub fn endpoint(&self) -> &EndpointConfig {
        &self.endpoint
    }

    pub fn stats(&self) -> StatsSnapshot {
        self.stats.snapshot()
    }

    pub fn cache(&self) -> &ResponseCache {
        &self.cache
    }

    async fn attempt(&self, url: &str, body: &Value) -> Result<Value, Attempt> {
        self.stats.http_requests.fetch_add(1, Ordering::SeqCst);
        let mut req = self.http.post(url).json(body);
        if let Some(key) = &self.endpoint.api_key {
            req = req.bearer_auth(key);
        }
        let resp = match req.send().await {
            Ok(r) => r,
            Err(e) => {
                return Err(Attempt::Retry(InferenceError::EndpointUnreachable {
                    attempts: 0,
                    message: e.to_string(),
                }))
            }
        };
        let status = resp.status();
        let text = resp.text().await.map_err(|e| {
            Attempt::Retry(InferenceError::EndpointUnreachable {
                attempts: 0,
                message: e.to_string(),
            })
        })?;
        if !status.is_success() {
            let err = InferenceError::HttpStatus {
                status: status.as_u16(),
                attempts: 0,
                body: text.chars().take(300).collect(),
            };
            return Err(if status.is_server_error() || status.as_u16() == 429 {
                Attempt::Retry(err)
            } else {
                Attempt::Fatal(err)
            });
        }
        serde_json::from_str(&text)
            .map_err(|e| Attempt::Fatal(InferenceError::BadResponse(format!("non-JSON body: {e}"))))
    }

    /// POSTs with retries on connection failures, 5xx and 429.
    async fn post_json(&self, path: &str, body: &Value) -> Result<Value, InferenceError> {
        let url = self.endpoint.url(path);
        let max_attempts = self.endpoint.max_retries + 1;
        let mut attempts = 0;
        loop {
            attempts += 1;
            match self.attempt(&url, body).await {
                Ok(v) => return Ok(v),
                Err(Attempt::Fatal(e)) => return Err(with_attempts(e, attempts)),
                Err(Attempt::Retry(e)) => {
                    if attempts >= max_attempts {
                        return Err(with_attempts(e, attempts));
                    }
                    self.stats.retries.fetch_add(1, Ordering::SeqCst);
                    let backoff = self
                        .endpoint
                        .retry_backoff_ms
                        .saturating_mul(1 << (attempts - 1).min(6));
                    tokio::time::sleep(Duration::from_millis(backoff)).await;
                }
            }
        }
    }

    /// Cached call: returns the stored extraction for `key`, or runs `fetch`
    /// and stores its result.
    async fn cached<F, Fut>(&self, key: String, fetch: F) -> Result<Value, InferenceError>
    where
        F: FnOnce() -> Fut,
        Fut: std::future::Future<Output = Result<Value, InferenceError>>,
    {
        if let Some(hit) = self.cache.get(&key) {
            self.stats.cache_hits.fetch_add(1, Ordering::SeqCst);
            return Ok(hit);
        }
        let value = fetch().await?;
        self.cache.insert(key, value.clone())?;
        Ok(value)
    }

    async fn generate_one(&self, prompt: &str, gen: &GenerationConfig) -> Result<String, InferenceError> {
        let model = &self.endpoint.model_name;
        let native = json!({
            "model": model,
            "prompt": prompt,
            "generation": gen.native_body(),
        });
        let key = cache_key("generate", model, &native);
        let value = self
            .cached(key, || async {
                let use_native = match self.endpoint.wire {
                    WireFormat::Native => true,
                    WireFormat::Completions => false,
                    WireFormat::Auto => !self.native_rejected.load(Ordering::SeqCst),
                };
                let response = if use_native {
                    match self.post_json("completions", &native).await {
                        Err(InferenceError::HttpStatus {
                            status: 400 | 404 | 422,
                            ..
                        }) if self.endpoint.wire == WireFormat::Auto => {
                            log::warn!("server rejected extended decoding fields; using the plain completions shape");
                            self.native_rejected.store(true, Ordering::SeqCst);
                            self.post_json("completions", &gen.completions_body(model, prompt))
                                .await?
                        }
                        other => other?,
                    }
                } else {
                    self.post_json("completions", &gen.completions_body(model, prompt))
                        .await?
                };
                extract_text(&response).map(|t| Value::String(t.trim().to_owned()))
            })
            .await?;
        value
            .as_str()
            .map(str::to_owned)
            .ok_or_else(|| InferenceError::BadResponse("cached generation is not a string".into()))
    }

    /// One generation per prompt, in input order. Failed items carry their
    /// error instead of text.
    pub async fn generate_definitions(
        &self,
        prompts: &[String],
        gen: &GenerationConfig,
    ) -> Result<Vec<Result<String, InferenceError>>, InferenceError> {
        if prompts.is_empty() {
            return Err(InferenceError::EmptyInput);
        }
        gen.validate()?;
        let (unique, slots) = dedup(prompts);
        let results = self
            .ordered(unique, |p| async move { self.generate_one(p, gen).await })
            .await;
        Ok(slots.into_iter().map(|i| results[i].clone()).collect())
    }

    /// Runs `op` over `items` with at most `max_in_flight` outstanding and
    /// returns results in input order.
    async fn ordered<'a, T, R, F, Fut>(&self, items: Vec<&'a T>, op: F) -> Vec<R>
    where
        T: ?Sized + 'a,
        F: Fn(&'a T) -> Fut,
        Fut: std::future::Future<Output = R>,
    {
        let op = &op;
        let mut done: Vec<(usize, R)> = stream::iter(items.into_iter().enumerate())
            .map(|(i, item)| async move { (i, op(item).await) })
            .buffer_unordered(self.endpoint.max_in_flight)
            .collect()
            .await;
        done.sort_by_key(|(i, _)| *i);
        done.into_iter().map(|(_, r)| r).collect()
    }

    /// Sentence embeddings, in input order, all of one dimension.
    pub async fn embed_texts(&self, texts: &[String]) -> Result<Vec<EmbeddingVector>, InferenceError> {
        if texts.is_empty() {
            return Err(InferenceError::EmptyInput);
        }
        let model = self.endpoint.model_name.clone();
        let (unique, slots) = dedup(texts);
        let keys: Vec<String> = unique
            .iter()
            .map(|t| cache_key("embed", &model, &json!({"model": model, "input": t})))
            .collect();
        let mut vectors: Vec<Option<EmbeddingVector>> = vec![None; unique.len()];
        let mut missing = Vec::new();
        for (i, key) in keys.iter().enumerate() {
            match self.cache.get(key) {
                Some(v) => {
                    self.stats.cache_hits.fetch_add(1, Ordering::SeqCst);
                    vectors[i] = Some(parse_vector(&v)?);
                }
                None => missing.push(i),
            }
        }
        let batches: Vec<&[usize]> = missing.chunks(self.endpoint.embed_batch_size).collect();
        let fetched = self
            .ordered(batches, |batch: &[usize]| {
                let inputs: Vec<&str> = batch.iter().map(|&i| unique[i].as_str()).collect();
                let model = model.clone();
                async move {
                    let body = json!({"model": model, "input": inputs});
                    let response = self.post_json("embeddings", &body).await?;
                    parse_embedding_batch(&response, batch.len())
                }
            })
            .await;
        for (batch, result) in missing.chunks(self.endpoint.embed_batch_size).zip(fetched) {
            for (&i, v) in batch.iter().zip(result?) {
                self.cache.insert(keys[i].clone(), Value::from(v.values().to_vec()))?;
                vectors[i] = Some(v);
            }
        }
        let vectors: Vec<EmbeddingVector> = vectors.into_iter().map(|v| v.expect("every slot filled")).collect();
        check_dimensions(&vectors)?;
        Ok(slots.into_iter().map(|i| vectors[i].clone()).collect())
    }

    /// Tokens of `text` with one contextual vector each.
    pub async fn embed_tokens(&self, text: &str) -> Result<TokenEmbeddings, InferenceError> {
        if text.trim().is_empty() {
            return Err(InferenceError::EmptyInput);
        }
        let model = &self.endpoint.model_name;
        let body = json!({"model": model, "input": text});
        let key = cache_key("embed_tokens", model, &body);
        let value = self
            .cached(key, || async {
                let response = self.post_json("token_embeddings", &body).await?;
                let parsed = parse_token_embeddings(&response)?;
                Ok(json!({
                    "tokens": parsed.tokens,
                    "embeddings": parsed.vectors.iter().map(|v| v.values().to_vec()).collect::<Vec<_>>(),
                }))
            })
            .await?;
        parse_token_embeddings(&value)
    }

    /// [`Self::embed_tokens`] over many texts, concurrently, in input order.
    pub async fn embed_tokens_many(&self, texts: &[String]) -> Vec<Result<TokenEmbeddings, InferenceError>> {
        let (unique, slots) = dedup(texts);
        let results = self.ordered(unique, |t: &String| self.embed_tokens(t)).await;
        slots.into_iter().map(|i| results[i].clone()).collect()
    }
}

fn with_attempts(e: InferenceError, n: u32) -> InferenceError {
    match e {
        InferenceError::EndpointUnreachable { message, .. } => {
            InferenceError::EndpointUnreachable { attempts: n, message }
        }
        InferenceError::HttpStatus { status, body, .. } => InferenceError::HttpStatus {
            status,
            attempts: n,
            body,
        },
        other => other,
    }
}

/// Unique items in first-seen order plus, for each input, its unique slot.
fn dedup<T: std::hash::Hash + Eq>(items: &[T]) -> (Vec<&T>, Vec<usize>) {
    let mut seen: HashMap<&T, usize> = HashMap::new();
    let mut unique = Vec::new();
    let slots = items
        .iter()
        .map(|item| {
            *seen.entry(item).or_insert_with(|| {
                unique.push(item);
                unique.len() - 1
            })
        })
        .collect();
    (unique, slots)
}

fn extract_text(response: &Value) -> Result<String, InferenceError> {
    let candidates = [
        response.get("text"),
        response.get("generated_text"),
        response.pointer("/choices/0/text"),
        response.pointer("/choices/0/message/content"),
        response.pointer("/0/generated_text"),
    ];
    candidates
        .into_iter()
        .flatten()
        .find_map(Value::as_str)
        .map(str::to_owned)
        .ok_or_else(|| InferenceError::BadResponse("no generated text field in response".into()))
}

fn parse_vector(value: &Value) -> Result<EmbeddingVector, InferenceError> {
    let values: Vec<f64> = serde_json::from_value(value.clone())
        .map_err(|e| InferenceError::BadResponse(format!("embedding is not a number list: {e}")))?;
    EmbeddingVector::new(values).map_err(|e| InferenceError::BadResponse(e.to_string()))
}

fn check_dimensions(vectors: &[EmbeddingVector]) -> Result<(), InferenceError> {
    if let Some(first) = vectors.first() {
        if let Some(other) = vectors.iter().find(|v| v.dimension() != first.dimension()) {
            return Err(InferenceError::DimensionMismatch {
                expected: first.dimension(),
                found: other.dimension(),
            });
        }
    }
    Ok(())
}

fn parse_embedding_batch(response: &Value, expected: usize) -> Result<Vec<EmbeddingVector>, InferenceError> {
    let vectors: Vec<EmbeddingVector> = if let Some(data) = response.get("data").and_then(Value::as_array) {
        let mut indexed = Vec::with_capacity(data.len());
        for (pos, item) in data.iter().enumerate() {
            let index = item.get("index").and_then(Value::as_u64).map_or(pos, |i| i as usize);
            let embedding = item
                .get("embedding")
                .ok_or_else(|| InferenceError::BadResponse("data item without `embedding`".into()))?;
            indexed.push((index, parse_vector(embedding)?));
        }
        indexed.sort_by_key(|(i, _)| *i);
        indexed.into_iter().map(|(_, v)| v).collect()
    } else if let Some(list) = response.get("embeddings").and_then(Value::as_array) {
        list.iter().map(parse_vector).collect::<Result<_, _>>()?
    } else {
        return Err(InferenceError::BadResponse("no `data` or `embeddings` field".into()));
    };
    if vectors.len() != expected {
        return Err(InferenceError::BadResponse(format!(
            "asked for {expected} embeddings, got {}",
            vectors.len()
        )));
    }
    check_dimensions(&vectors)?;
    Ok(vectors)
}

fn parse_token_embeddings(response: &Value) -> Result<TokenEmbeddings, InferenceError> {
    let tokens: Vec<String> = response
        .get("tokens")
        .cloned()
        .map(serde_json::from_value)
        .transpose()
        .map_err(|e| InferenceError::BadResponse(format!("bad `tokens`: {e}")))?
        .ok_or_else(|| InferenceError::BadResponse("no `tokens` field".into()))?;
    let vectors = response
        .get("embeddings")
        .and_then(Value::as_array)
        .ok_or_else(|| InferenceError::BadResponse("no `embeddings` field".into()))?
        .iter()
        .map(parse_vector)
        .collect::<Result<Vec<_>, _>>()?;
    if tokens.is_empty() {
        return Err(InferenceError::BadResponse("empty token list".into()));
    }
    check_dimensions(&vectors)?;
    TokenEmbeddings::new(tokens, vectors).map_err(|e| InferenceError::BadResponse(e.to_string()))
}
