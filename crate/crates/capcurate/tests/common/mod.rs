//! Test support: a recording stub of the inference service and random
//! fixture generators.
#![allow(dead_code)]

use std::collections::BTreeMap;
use std::io::{BufRead, BufReader, Read, Write};
use std::net::{TcpListener, TcpStream};
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::thread;

use capcurate::embeddings::{EmbeddingRecord, EmbeddingStore};
use capcurate_core::{AudioClip, CaptionCandidate, DatasetManifest, Entry, Origin, ScoredCaption};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

#[derive(Debug, Clone)]
pub struct Recorded {
    pub path: String,
    pub headers: BTreeMap<String, String>,
    pub body: Value,
}

type Handler = dyn Fn(usize, &str, &Value) -> (u16, String) + Send + Sync;

/// Minimal HTTP/1.1 server on 127.0.0.1; one request per connection.
/// The handler receives the global request index, the path and the JSON body.
pub struct StubServer {
    pub url: String,
    requests: Arc<Mutex<Vec<Recorded>>>,
    count: Arc<AtomicUsize>,
}

impl StubServer {
    pub fn start(handler: impl Fn(usize, &str, &Value) -> (u16, String) + Send + Sync + 'static) -> Self {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let url = format!("http://{}", listener.local_addr().unwrap());
        let requests = Arc::new(Mutex::new(Vec::new()));
        let count = Arc::new(AtomicUsize::new(0));
        let handler: Arc<Handler> = Arc::new(handler);
        {
            let requests = requests.clone();
            let count = count.clone();
            thread::spawn(move || {
                for stream in listener.incoming() {
                    let Ok(stream) = stream else { continue };
                    let requests = requests.clone();
                    let count = count.clone();
                    let handler = handler.clone();
                    thread::spawn(move || serve(stream, &*handler, &requests, &count));
                }
            });
        }
        Self { url, requests, count }
    }

    /// Well-behaved service with deterministic captions and embeddings.
    pub fn healthy(dim: usize) -> Self {
        Self::start(move |_, path, body| (200, fake_response(path, body, dim)))
    }

    pub fn requests(&self) -> Vec<Recorded> {
        self.requests.lock().unwrap().clone()
    }

    pub fn request_count(&self) -> usize {
        self.count.load(Ordering::SeqCst)
    }
}

fn serve(stream: TcpStream, handler: &Handler, log: &Mutex<Vec<Recorded>>, count: &AtomicUsize) {
    let mut reader = BufReader::new(stream.try_clone().unwrap());
    let mut line = String::new();
    if reader.read_line(&mut line).unwrap_or(0) == 0 {
        return;
    }
    let path = line.split_whitespace().nth(1).unwrap_or("").to_owned();
    let mut headers = BTreeMap::new();
    loop {
        let mut h = String::new();
        if reader.read_line(&mut h).unwrap_or(0) == 0 || h.trim().is_empty() {
            break;
        }
        if let Some((k, v)) = h.split_once(':') {
            headers.insert(k.trim().to_ascii_lowercase(), v.trim().to_owned());
        }
    }
    let len: usize = headers
        .get("content-length")
        .and_then(|v| v.parse().ok())
        .unwrap_or(0);
    let mut body = vec![0; len];
    reader.read_exact(&mut body).unwrap();
    let body: Value = serde_json::from_slice(&body).unwrap_or(Value::Null);
    let index = count.fetch_add(1, Ordering::SeqCst);
    log.lock().unwrap().push(Recorded {
        path: path.clone(),
        headers,
        body: body.clone(),
    });
    let (status, text) = handler(index, &path, &body);
    let mut stream = stream;
    let _ = write!(
        stream,
        "HTTP/1.1 {status} X\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{text}",
        text.len()
    );
    let _ = stream.flush();
}

fn seed_of(s: &str) -> u64 {
    // FNV-1a
    s.bytes()
        .fold(0xcbf29ce484222325u64, |h, b| (h ^ b as u64).wrapping_mul(0x100000001b3))
}

/// Deterministic vector for `item`, shared by the text and audio towers so
/// that similarities spread over the whole range.
pub fn fake_vector(item: &str, dim: usize) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed_of(item));
    (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect()
}

pub fn fake_caption(uri: &str, i: usize) -> String {
    format!("sound of {uri} take {i}")
}

pub fn fake_response(path: &str, body: &Value, dim: usize) -> String {
    match path {
        "/v1/caption" => {
            let uri = body["audio_uri"].as_str().unwrap();
            let n = body["n"].as_u64().unwrap() as usize;
            let captions: Vec<String> = (0..n).map(|i| fake_caption(uri, i)).collect();
            json!({ "captions": captions }).to_string()
        }
        "/v1/embed_text" | "/v1/embed_audio" => {
            let items = body
                .get("texts")
                .or_else(|| body.get("audio_uris"))
                .and_then(Value::as_array)
                .unwrap();
            let v: Vec<Vec<f64>> = items
                .iter()
                .map(|s| fake_vector(s.as_str().unwrap(), dim))
                .collect();
            json!({ "embeddings": v }).to_string()
        }
        _ => "{}".into(),
    }
}

const ALPHABET: &[&str] = &[
    "a", "b", "dog", " ", "bark", "é", "日本", "\"", "\\", "/", "🎵", "x", "rain", "-", "0",
];

fn random_text(rng: &mut ChaCha8Rng) -> String {
    let n = rng.gen_range(1..8);
    let mut s: String = (0..n).map(|_| ALPHABET[rng.gen_range(0..ALPHABET.len())]).collect();
    if s.trim().is_empty() {
        s.push('z');
    }
    s
}

pub fn random_similarity(rng: &mut ChaCha8Rng) -> f64 {
    match rng.gen_range(0..10) {
        0 => 1.0,
        1 => -1.0,
        2 => 0.0,
        // exact 6-digit grid values exercise threshold ties
        3 => rng.gen_range(-1000..=1000) as f64 / 1000.0,
        _ => rng.gen_range(-1.0..=1.0),
    }
}

/// Random valid manifest. `max_entries` bounds the entry count.
pub fn random_manifest(rng: &mut ChaCha8Rng, max_entries: usize) -> DatasetManifest {
    let n = rng.gen_range(0..=max_entries);
    let mut entries = Vec::with_capacity(n);
    for i in 0..n {
        let id = format!("{}-{i}", random_text(rng).replace(' ', "_"));
        let mut clip = AudioClip::new(id.clone(), format!("s3://bucket/{i}.wav"));
        if rng.gen_bool(0.7) {
            clip.duration_s = Some(rng.gen_range(0.0..30.0));
        }
        if rng.gen_bool(0.5) {
            clip.labels = Some((0..rng.gen_range(0..4)).map(|_| random_text(rng)).collect());
        }
        let captions = (0..rng.gen_range(0..6))
            .map(|_| {
                let origin = if rng.gen_bool(0.5) { Origin::Synthetic } else { Origin::Human };
                let c = CaptionCandidate::new(&random_text(rng), origin).unwrap();
                if rng.gen_bool(0.8) {
                    ScoredCaption::scored(c, random_similarity(rng))
                } else {
                    ScoredCaption::unscored(c)
                }
            })
            .collect();
        entries.push(Entry::new(clip, captions));
    }
    let mut metadata = BTreeMap::new();
    for _ in 0..rng.gen_range(0..3) {
        metadata.insert(random_text(rng), random_text(rng));
    }
    DatasetManifest::new(entries, metadata).unwrap()
}

pub fn random_store(rng: &mut ChaCha8Rng, max_count: usize, max_dim: usize) -> EmbeddingStore {
    let dim = rng.gen_range(1..=max_dim);
    let count = rng.gen_range(0..=max_count);
    let records = (0..count).map(|i| {
        let v = (0..dim)
            .map(|_| match rng.gen_range(0..8) {
                0 => f32::MIN_POSITIVE,
                1 => -0.0,
                2 => f32::MAX,
                _ => rng.gen_range(-10.0f32..10.0),
            })
            .collect();
        EmbeddingRecord::new(format!("{}#{i}", random_text(rng)), v)
    });
    EmbeddingStore::from_records(records, dim).unwrap()
}

/// Scored fixture: `n` clips with `per_clip` scored synthetic captions each.
pub fn scored_fixture(seed: u64, n: usize, per_clip: usize) -> DatasetManifest {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let labels = ["dog", "rain", "speech", "music", "engine"];
    let entries = (0..n)
        .map(|i| {
            let mut clip = AudioClip::new(format!("clip{i:05}"), format!("file://{i}.wav"));
            clip.labels = Some(vec![labels[i % labels.len()].to_owned()]);
            let captions = (0..per_clip)
                .map(|k| {
                    let c = CaptionCandidate::synthetic(&format!("caption {k} for {i}")).unwrap();
                    ScoredCaption::scored(c, random_similarity(&mut rng))
                })
                .collect();
            Entry::new(clip, captions)
        })
        .collect();
    DatasetManifest::new(entries, BTreeMap::new()).unwrap()
}

pub fn write_manifest(path: &Path, m: &DatasetManifest) {
    capcurate::manifest_io::write_manifest_file(path, m).unwrap();
}

pub fn run_cli(args: &[&str]) -> i32 {
    let mut argv = vec!["capcurate"];
    argv.extend_from_slice(args);
    capcurate::cli::run(argv)
}
