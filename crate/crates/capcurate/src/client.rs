//! Client for the external captioning and audio-text embedding services.
//!
//! Wire protocol (HTTP POST, JSON bodies):
//!
//! * `/v1/caption`: `{"audio_uri","prompt","n","top_k","top_p","seed"}` →
//!   `{"captions":[string]}`
//! * `/v1/embed_text`: `{"texts":[string]}` → `{"embeddings":[[number]]}`
//! * `/v1/embed_audio`: `{"audio_uris":[string]}` → `{"embeddings":[[number]]}`
//!
//! Any non-200 status or transport failure is retried with exponential
//! backoff. Successful responses are cached on disk (see [`crate::cache`])
//! so repeated runs with a warm cache make no network calls. Embeddings are
//! cached per item, so a partially cached batch only sends the misses.

use std::collections::{HashMap, HashSet};
use std::sync::atomic::{AtomicU64, AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Duration;

use capcurate_core::{AudioClip, CaptionCandidate};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::cache::{cache_key, ResponseCache};

pub const DEFAULT_PROMPT: &str = "Can you briefly describe what you hear in this audio?";
pub const CAPTION_PATH: &str = "/v1/caption";
pub const EMBED_TEXT_PATH: &str = "/v1/embed_text";
pub const EMBED_AUDIO_PATH: &str = "/v1/embed_audio";

#[derive(Debug, thiserror::Error)]
pub enum ClientError {
    #[error("{path}: service unavailable after {attempts} attempts ({last_error})")]
    ServiceUnavailable {
        path: String,
        attempts: u32,
        last_error: String,
    },
    #[error("{path}: bad response: {reason}")]
    BadResponse { path: String, reason: String },
    #[error("empty batch")]
    EmptyBatch,
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("response cache: {0}")]
    Cache(#[from] std::io::Error),
}

impl ClientError {
    fn bad(path: &str, reason: impl Into<String>) -> Self {
        ClientError::BadResponse {
            path: path.to_owned(),
            reason: reason.into(),
        }
    }
}

/// Caption sampling parameters forwarded to the captioning service.
#[derive(Debug, Clone, PartialEq)]
pub struct SamplingConfig {
    pub n_captions: usize,
    pub top_k: u32,
    pub top_p: f64,
    pub prompt: String,
    /// Unset by default: the service samples with its own randomness.
    pub seed: Option<i64>,
}

impl Default for SamplingConfig {
    fn default() -> Self {
        Self {
            n_captions: 20,
            top_k: 50,
            top_p: 0.95,
            prompt: DEFAULT_PROMPT.to_owned(),
            seed: None,
        }
    }
}

impl SamplingConfig {
    pub fn validate(&self) -> Result<(), ClientError> {
        if self.n_captions == 0 {
            return Err(ClientError::InvalidInput("n_captions must be positive".into()));
        }
        if self.top_k == 0 {
            return Err(ClientError::InvalidInput("top_k must be positive".into()));
        }
        if !(self.top_p > 0.0 && self.top_p <= 1.0) {
            return Err(ClientError::InvalidInput(format!(
                "top_p must be in (0, 1], got {}",
                self.top_p
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ServiceEndpoint {
    pub base_url: String,
    pub timeout_s: f64,
    pub max_retries: u32,
    pub batch_size: usize,
    /// Upper bound on concurrently outstanding requests.
    pub max_in_flight: usize,
    /// Sent as `Authorization: Bearer <token>` when set.
    pub bearer_token: Option<String>,
}

impl ServiceEndpoint {
    pub fn new(base_url: impl Into<String>) -> Self {
        Self {
            base_url: base_url.into(),
            timeout_s: 60.0,
            max_retries: 5,
            batch_size: 64,
            max_in_flight: 4,
            bearer_token: None,
        }
    }

    pub fn validate(&self) -> Result<(), ClientError> {
        if !(self.timeout_s > 0.0 && self.timeout_s.is_finite()) {
            return Err(ClientError::InvalidInput("timeout must be positive".into()));
        }
        if self.batch_size == 0 || self.max_in_flight == 0 {
            return Err(ClientError::InvalidInput(
                "batch size and in-flight limit must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// Delay before retry `i` (0-based) is `base · factor^i · (1 + u·max_jitter)`
/// with `u` uniform in `[0, 1)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RetryPolicy {
    pub base: Duration,
    pub factor: f64,
    pub max_jitter: f64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            base: Duration::from_secs(1),
            factor: 2.0,
            max_jitter: 0.1,
        }
    }
}

impl RetryPolicy {
    pub fn delay(&self, retry: u32, unit: f64) -> Duration {
        let scale = self.factor.powi(retry as i32) * (1.0 + unit * self.max_jitter);
        self.base.mul_f64(scale)
    }
}

/// Moves request bytes to a service and returns `(status, body)`. An `Err`
/// is a transport failure (connection refused, timeout, ...).
pub trait Transport: Send + Sync {
    fn post(&self, path: &str, body: &[u8]) -> Result<(u16, Vec<u8>), String>;
}

pub struct HttpTransport {
    agent: ureq::Agent,
    base_url: String,
    bearer_token: Option<String>,
}

impl HttpTransport {
    pub fn new(endpoint: &ServiceEndpoint) -> Self {
        let config = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs_f64(endpoint.timeout_s)))
            .http_status_as_error(false)
            .build();
        Self {
            agent: config.into(),
            base_url: endpoint.base_url.trim_end_matches('/').to_owned(),
            bearer_token: endpoint.bearer_token.clone(),
        }
    }
}

impl Transport for HttpTransport {
    fn post(&self, path: &str, body: &[u8]) -> Result<(u16, Vec<u8>), String> {
        let mut req = self
            .agent
            .post(format!("{}{path}", self.base_url))
            .header("Content-Type", "application/json");
        if let Some(token) = &self.bearer_token {
            req = req.header("Authorization", format!("Bearer {token}"));
        }
        let mut resp = req.send(body).map_err(|e| e.to_string())?;
        let status = resp.status().as_u16();
        let bytes = resp.body_mut().read_to_vec().map_err(|e| e.to_string())?;
        Ok((status, bytes))
    }
}

#[derive(Serialize)]
struct CaptionRequest<'a> {
    audio_uri: &'a str,
    prompt: &'a str,
    n: usize,
    top_k: u32,
    top_p: f64,
    seed: Option<i64>,
}

#[derive(Deserialize)]
struct CaptionResponse {
    captions: Vec<String>,
}

#[derive(Deserialize)]
struct EmbedResponse {
    embeddings: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum EmbedKind {
    Text,
    Audio,
}

impl EmbedKind {
    fn path(self) -> &'static str {
        match self {
            EmbedKind::Text => EMBED_TEXT_PATH,
            EmbedKind::Audio => EMBED_AUDIO_PATH,
        }
    }

    fn operation(self) -> &'static str {
        match self {
            EmbedKind::Text => "embed_text",
            EmbedKind::Audio => "embed_audio",
        }
    }

    fn item_request(self, item: &str) -> Value {
        match self {
            EmbedKind::Text => json!({ "text": item }),
            EmbedKind::Audio => json!({ "audio_uri": item }),
        }
    }

    fn batch_body(self, items: &[&str]) -> Vec<u8> {
        let v = match self {
            EmbedKind::Text => json!({ "texts": items }),
            EmbedKind::Audio => json!({ "audio_uris": items }),
        };
        serde_json::to_vec(&v).expect("JSON value serializes")
    }
}

type Sleeper = Box<dyn Fn(Duration) + Send + Sync>;

pub struct InferenceClient {
    transport: Box<dyn Transport>,
    endpoint: ServiceEndpoint,
    cache: Option<ResponseCache>,
    retry: RetryPolicy,
    sleep: Sleeper,
    jitter: Mutex<ChaCha8Rng>,
    requests: AtomicU64,
}

impl InferenceClient {
    pub fn new(
        transport: Box<dyn Transport>,
        endpoint: ServiceEndpoint,
        cache: Option<ResponseCache>,
    ) -> Result<Self, ClientError> {
        endpoint.validate()?;
        Ok(Self {
            transport,
            endpoint,
            cache,
            retry: RetryPolicy::default(),
            sleep: Box::new(std::thread::sleep),
            jitter: Mutex::new(ChaCha8Rng::seed_from_u64(0)),
            requests: AtomicU64::new(0),
        })
    }

    /// HTTP client for `endpoint`.
    pub fn http(endpoint: ServiceEndpoint, cache: Option<ResponseCache>) -> Result<Self, ClientError> {
        let transport = HttpTransport::new(&endpoint);
        Self::new(Box::new(transport), endpoint, cache)
    }

    pub fn with_retry_policy(mut self, retry: RetryPolicy) -> Self {
        self.retry = retry;
        self
    }

    /// Replaces the backoff sleep, e.g. to record delays in tests.
    pub fn with_sleeper(mut self, sleep: impl Fn(Duration) + Send + Sync + 'static) -> Self {
        self.sleep = Box::new(sleep);
        self
    }

    pub fn with_jitter_seed(self, seed: u64) -> Self {
        *self.jitter.lock().unwrap_or_else(|e| e.into_inner()) = ChaCha8Rng::seed_from_u64(seed);
        self
    }

    pub fn endpoint(&self) -> &ServiceEndpoint {
        &self.endpoint
    }

    /// Number of transport attempts made so far, retries included.
    pub fn request_count(&self) -> u64 {
        self.requests.load(Ordering::Relaxed)
    }

    fn post_with_retry(&self, path: &str, body: &[u8]) -> Result<Vec<u8>, ClientError> {
        let attempts = 1 + self.endpoint.max_retries;
        let mut last_error = String::new();
        for attempt in 0..attempts {
            if attempt > 0 {
                let unit = self
                    .jitter
                    .lock()
                    .unwrap_or_else(|e| e.into_inner())
                    .gen::<f64>();
                (self.sleep)(self.retry.delay(attempt - 1, unit));
            }
            self.requests.fetch_add(1, Ordering::Relaxed);
            match self.transport.post(path, body) {
                Ok((200, bytes)) => return Ok(bytes),
                Ok((status, _)) => last_error = format!("HTTP {status}"),
                Err(e) => last_error = e,
            }
            log::warn!("{path}: attempt {}/{attempts} failed: {last_error}", attempt + 1);
        }
        Err(ClientError::ServiceUnavailable {
            path: path.to_owned(),
            attempts,
            last_error,
        })
    }

    /// Exactly `cfg.n_captions` synthetic candidates for one clip.
    pub fn generate_captions(
        &self,
        clip: &AudioClip,
        cfg: &SamplingConfig,
    ) -> Result<Vec<CaptionCandidate>, ClientError> {
        cfg.validate()?;
        let request = CaptionRequest {
            audio_uri: &clip.source_uri,
            prompt: &cfg.prompt,
            n: cfg.n_captions,
            top_k: cfg.top_k,
            top_p: cfg.top_p,
            seed: cfg.seed,
        };
        let request_value = serde_json::to_value(&request).expect("request serializes");
        let key = cache_key("caption", &request_value);

        if let Some(cached) = self.cache.as_ref().and_then(|c| c.get(&key)) {
            if let Ok(candidates) = parse_captions(cached, cfg.n_captions) {
                return Ok(candidates);
            }
        }

        let body = serde_json::to_vec(&request).expect("request serializes");
        let bytes = self.post_with_retry(CAPTION_PATH, &body)?;
        let value: Value = serde_json::from_slice(&bytes)
            .map_err(|e| ClientError::bad(CAPTION_PATH, format!("invalid JSON: {e}")))?;
        let candidates = parse_captions(value, cfg.n_captions)?;
        if let Some(cache) = &self.cache {
            let texts: Vec<&str> = candidates.iter().map(|c| c.text.as_str()).collect();
            cache.put(&key, &json!({ "captions": texts }))?;
        }
        Ok(candidates)
    }

    /// Captions for many clips with up to `max_in_flight` concurrent
    /// requests; results are in input order.
    pub fn generate_captions_many(
        &self,
        clips: &[AudioClip],
        cfg: &SamplingConfig,
    ) -> Vec<Result<Vec<CaptionCandidate>, ClientError>> {
        run_bounded(clips.len(), self.endpoint.max_in_flight, |i| {
            self.generate_captions(&clips[i], cfg)
        })
    }

    pub fn embed_text(&self, texts: &[String]) -> Result<Vec<Vec<f32>>, ClientError> {
        let items: Vec<&str> = texts.iter().map(String::as_str).collect();
        self.embed(EmbedKind::Text, &items)
    }

    /// Embeds each clip's audio, addressed by its source uri.
    pub fn embed_audio(&self, clips: &[AudioClip]) -> Result<Vec<Vec<f32>>, ClientError> {
        let items: Vec<&str> = clips.iter().map(|c| c.source_uri.as_str()).collect();
        self.embed(EmbedKind::Audio, &items)
    }

    fn embed(&self, kind: EmbedKind, items: &[&str]) -> Result<Vec<Vec<f32>>, ClientError> {
        if items.is_empty() {
            return Err(ClientError::EmptyBatch);
        }
        if let Some(i) = items.iter().position(|s| s.is_empty()) {
            return Err(ClientError::InvalidInput(format!("item {i} is empty")));
        }
        let path = kind.path();

        let keys: Vec<String> = items
            .iter()
            .map(|item| cache_key(kind.operation(), &kind.item_request(item)))
            .collect();

        let mut resolved: HashMap<&str, Vec<f32>> = HashMap::new();
        let mut misses: Vec<(&str, &str)> = Vec::new();
        let mut seen: HashSet<&str> = HashSet::new();
        for (item, key) in items.iter().zip(&keys) {
            if !seen.insert(key.as_str()) {
                continue;
            }
            let cached = self
                .cache
                .as_ref()
                .and_then(|c| c.get(key))
                .and_then(|v| serde_json::from_value::<Vec<f64>>(v["embedding"].clone()).ok())
                .and_then(|v| to_f32_vector(&v));
            match cached {
                Some(v) => {
                    resolved.insert(key, v);
                }
                None => misses.push((key, item)),
            }
        }

        let batches: Vec<&[(&str, &str)]> = misses.chunks(self.endpoint.batch_size).collect();
        let fetched = run_bounded(batches.len(), self.endpoint.max_in_flight, |b| {
            let batch = batches[b];
            let names: Vec<&str> = batch.iter().map(|(_, item)| *item).collect();
            let bytes = self.post_with_retry(path, &kind.batch_body(&names))?;
            let resp: EmbedResponse = serde_json::from_slice(&bytes)
                .map_err(|e| ClientError::bad(path, format!("invalid JSON: {e}")))?;
            if resp.embeddings.len() != batch.len() {
                return Err(ClientError::bad(path, "count mismatch"));
            }
            let vectors = resp
                .embeddings
                .iter()
                .map(|v| to_f32_vector(v).ok_or_else(|| ClientError::bad(path, "non-finite or empty embedding")))
                .collect::<Result<Vec<_>, _>>()?;
            if vectors.windows(2).any(|w| w[0].len() != w[1].len()) {
                return Err(ClientError::bad(path, "dim mismatch"));
            }
            if let Some(cache) = &self.cache {
                for ((key, _), v) in batch.iter().zip(&vectors) {
                    cache.put(key, &json!({ "embedding": v }))?;
                }
            }
            Ok(vectors)
        });

        for (batch, result) in batches.iter().zip(fetched) {
            for ((key, _), v) in batch.iter().zip(result?) {
                resolved.insert(key, v);
            }
        }

        let out: Vec<Vec<f32>> = keys.iter().map(|k| resolved[k.as_str()].clone()).collect();
        if out.windows(2).any(|w| w[0].len() != w[1].len()) {
            return Err(ClientError::bad(path, "dim mismatch"));
        }
        Ok(out)
    }
}

fn parse_captions(value: Value, expected: usize) -> Result<Vec<CaptionCandidate>, ClientError> {
    let resp: CaptionResponse = serde_json::from_value(value)
        .map_err(|e| ClientError::bad(CAPTION_PATH, format!("schema violation: {e}")))?;
    if resp.captions.len() != expected {
        return Err(ClientError::bad(CAPTION_PATH, "count mismatch"));
    }
    resp.captions
        .iter()
        .map(|t| {
            CaptionCandidate::synthetic(t)
                .map_err(|e| ClientError::bad(CAPTION_PATH, format!("caption {t:?}: {e}")))
        })
        .collect()
}

fn to_f32_vector(v: &[f64]) -> Option<Vec<f32>> {
    if v.is_empty() {
        return None;
    }
    let out: Vec<f32> = v.iter().map(|&x| x as f32).collect();
    out.iter().all(|x| x.is_finite()).then_some(out)
}

/// Runs `job(0..n)` on at most `limit` threads; results in index order.
pub fn run_bounded<T, F>(n: usize, limit: usize, job: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync,
{
    if n == 0 {
        return Vec::new();
    }
    let threads = limit.clamp(1, n);
    if threads == 1 {
        return (0..n).map(job).collect();
    }
    let next = AtomicUsize::new(0);
    let slots: Vec<Mutex<Option<T>>> = (0..n).map(|_| Mutex::new(None)).collect();
    std::thread::scope(|s| {
        for _ in 0..threads {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= n {
                    break;
                }
                let r = job(i);
                *slots[i].lock().unwrap_or_else(|e| e.into_inner()) = Some(r);
            });
        }
    });
    slots
        .into_iter()
        .map(|m| {
            m.into_inner()
                .unwrap_or_else(|e| e.into_inner())
                .expect("every job ran")
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::Arc;

    /// Scripted transport: pops queued responses, falling back to `default`.
    struct Scripted {
        log: Arc<Mutex<Vec<(String, Value)>>>,
        queue: Mutex<Vec<Result<(u16, Vec<u8>), String>>>,
        default: Box<dyn Fn(&str, &Value) -> (u16, Vec<u8>) + Send + Sync>,
    }

    impl Transport for Scripted {
        fn post(&self, path: &str, body: &[u8]) -> Result<(u16, Vec<u8>), String> {
            let v: Value = serde_json::from_slice(body).unwrap();
            self.log.lock().unwrap().push((path.to_owned(), v.clone()));
            if let Some(r) = self.queue.lock().unwrap().pop() {
                return r;
            }
            Ok((self.default)(path, &v))
        }
    }

    fn embedder(dim: usize) -> (Scripted, Arc<Mutex<Vec<(String, Value)>>>) {
        let log = Arc::new(Mutex::new(Vec::new()));
        let t = Scripted {
            log: log.clone(),
            queue: Mutex::new(Vec::new()),
            default: Box::new(move |_, v| {
                let items = v.as_object().unwrap().values().next().unwrap().as_array().unwrap().clone();
                let embs: Vec<Vec<f64>> = items
                    .iter()
                    .map(|s| {
                        let n = s.as_str().unwrap().len() as f64;
                        (0..dim).map(|i| n + i as f64).collect()
                    })
                    .collect();
                (200, serde_json::to_vec(&json!({ "embeddings": embs })).unwrap())
            }),
        };
        (t, log)
    }

    fn endpoint(batch: usize) -> ServiceEndpoint {
        ServiceEndpoint {
            batch_size: batch,
            max_retries: 2,
            ..ServiceEndpoint::new("http://stub")
        }
    }

    #[test]
    fn sampling_defaults() {
        let cfg = SamplingConfig::default();
        assert_eq!(cfg.n_captions, 20);
        assert_eq!(cfg.top_k, 50);
        assert_eq!(cfg.top_p, 0.95);
        assert_eq!(cfg.prompt, "Can you briefly describe what you hear in this audio?");
        assert_eq!(cfg.seed, None);
    }

    #[test]
    fn backoff_schedule() {
        let p = RetryPolicy::default();
        assert_eq!(p.delay(0, 0.0), Duration::from_secs(1));
        assert_eq!(p.delay(3, 0.0), Duration::from_secs(8));
        assert_eq!(p.delay(1, 1.0), Duration::from_millis(2200));
    }

    #[test]
    fn embed_text_batches_in_order() {
        let (t, log) = embedder(3);
        let client = InferenceClient::new(Box::new(t), endpoint(64), None).unwrap();
        let texts: Vec<String> = (0..130).map(|i| "x".repeat(i + 1)).collect();
        let out = client.embed_text(&texts).unwrap();
        assert_eq!(out.len(), 130);
        assert_eq!(log.lock().unwrap().len(), 3);
        for (i, v) in out.iter().enumerate() {
            assert_eq!(v[0], (i + 1) as f32);
        }
    }

    #[test]
    fn embed_empty_batch() {
        let (t, _) = embedder(2);
        let client = InferenceClient::new(Box::new(t), endpoint(4), None).unwrap();
        assert!(matches!(client.embed_text(&[]), Err(ClientError::EmptyBatch)));
        assert!(matches!(
            client.embed_text(&["".into()]),
            Err(ClientError::InvalidInput(_))
        ));
    }

    #[test]
    fn cached_items_skip_the_service() {
        let dir = tempfile::tempdir().unwrap();
        let (t, log) = embedder(2);
        let client =
            InferenceClient::new(Box::new(t), endpoint(8), Some(ResponseCache::new(dir.path()))).unwrap();
        let clips: Vec<AudioClip> = ["a.wav", "bb.wav"].iter().map(|u| AudioClip::new(*u, *u)).collect();
        client.embed_audio(&clips[..1]).unwrap();
        log.lock().unwrap().clear();
        let out = client.embed_audio(&clips).unwrap();
        assert_eq!(out.len(), 2);
        let log = log.lock().unwrap();
        assert_eq!(log.len(), 1);
        assert_eq!(log[0].1, json!({ "audio_uris": ["bb.wav"] }));
    }

    #[test]
    fn dim_mismatch_between_responses() {
        let log = Arc::new(Mutex::new(Vec::new()));
        let calls = AtomicUsize::new(0);
        let t = Scripted {
            log,
            queue: Mutex::new(Vec::new()),
            default: Box::new(move |_, _| {
                let n = calls.fetch_add(1, Ordering::SeqCst);
                let emb = if n == 0 { json!([[1.0, 2.0]]) } else { json!([[1.0, 2.0, 3.0]]) };
                (200, serde_json::to_vec(&json!({ "embeddings": emb })).unwrap())
            }),
        };
        let ep = ServiceEndpoint {
            max_in_flight: 1,
            ..endpoint(1)
        };
        let client = InferenceClient::new(Box::new(t), ep, None).unwrap();
        let err = client.embed_text(&["a".into(), "b".into()]).unwrap_err();
        assert!(matches!(err, ClientError::BadResponse { reason, .. } if reason == "dim mismatch"));
    }

    #[test]
    fn retries_then_gives_up() {
        let log = Arc::new(Mutex::new(Vec::new()));
        let t = Scripted {
            log: log.clone(),
            queue: Mutex::new(Vec::new()),
            default: Box::new(|_, _| (503, Vec::new())),
        };
        let delays = Arc::new(Mutex::new(Vec::new()));
        let d = delays.clone();
        let client = InferenceClient::new(Box::new(t), endpoint(4), None)
            .unwrap()
            .with_sleeper(move |dur| d.lock().unwrap().push(dur));
        let err = client
            .generate_captions(&AudioClip::new("a", "a.wav"), &SamplingConfig::default())
            .unwrap_err();
        assert!(matches!(err, ClientError::ServiceUnavailable { attempts: 3, .. }));
        assert_eq!(client.request_count(), 3);
        let delays = delays.lock().unwrap();
        assert_eq!(delays.len(), 2);
        assert!(delays[0] >= Duration::from_secs(1) && delays[0] <= Duration::from_millis(1100));
        assert!(delays[1] >= Duration::from_secs(2) && delays[1] <= Duration::from_millis(2200));
    }

    #[test]
    fn caption_count_mismatch() {
        let t = Scripted {
            log: Arc::new(Mutex::new(Vec::new())),
            queue: Mutex::new(Vec::new()),
            default: Box::new(|_, _| {
                let caps: Vec<String> = (0..19).map(|i| format!("caption {i}")).collect();
                (200, serde_json::to_vec(&json!({ "captions": caps })).unwrap())
            }),
        };
        let client = InferenceClient::new(Box::new(t), endpoint(4), None).unwrap();
        let err = client
            .generate_captions(&AudioClip::new("a", "a.wav"), &SamplingConfig::default())
            .unwrap_err();
        assert!(matches!(err, ClientError::BadResponse { reason, .. } if reason == "count mismatch"));
        // schema violations are not retried
        assert_eq!(client.request_count(), 1);
    }

    #[test]
    fn run_bounded_preserves_order() {
        let out = run_bounded(100, 7, |i| i * 2);
        assert_eq!(out, (0..100).map(|i| i * 2).collect::<Vec<_>>());
        assert!(run_bounded(0, 4, |i| i).is_empty());
    }
}
