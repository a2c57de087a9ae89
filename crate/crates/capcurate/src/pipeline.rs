//! Pipeline stages over files: caption, embed, score, filter, mix, augment,
//! sweep and evaluate.
//!
//! Per-entry work runs on the current rayon pool and is collected in input
//! order, so outputs are identical for any worker count.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use capcurate_core::metrics::{estimate_gaussian_with, BlockExecutor, MetricConfig, MetricReport};
use capcurate_core::mixer::{validate_grid, WeightedSource};
use capcurate_core::similarity::{filter_entry, stamp_filter_metadata};
use capcurate_core::{
    clap_score, dataset_stats, frechet_distance, inception_score, merge_manifests,
    sampling_weights, score_candidates, CaptionCandidate, DatasetManifest, DedupOn, Entry,
    FilterConfig, GaussianStats, ProbTable, ScoredCaption,
};
use rayon::prelude::*;
use serde::Deserialize;

use crate::client::{InferenceClient, SamplingConfig};
use crate::embeddings::{
    caption_key, read_store_file, EmbeddingRecord, EmbeddingStore, EMBEDDING_MAGIC,
    PROBABILITY_MAGIC,
};
use crate::error::{Error, Result};
use crate::manifest_io::{read_manifest_file, write_manifest_file, EXTENSION};
use crate::report::{tau_label, SweepReport};

pub fn thread_pool(workers: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::Usage(format!("cannot start {workers} workers: {e}")))
}

pub fn load_manifest(path: &Path) -> Result<DatasetManifest> {
    read_manifest_file(path).map_err(|e| Error::manifest(path, e))
}

pub fn save_manifest(path: &Path, m: &DatasetManifest) -> Result<()> {
    write_manifest_file(path, m)
        .map(drop)
        .map_err(|e| Error::io(path, e))
}

pub fn load_store(path: &Path) -> Result<EmbeddingStore> {
    read_store_file(path, EMBEDDING_MAGIC).map_err(|e| Error::embedding(path, e))
}

/// Appends `cfg.n_captions` unscored synthetic candidates to every clip.
pub fn caption_manifest(
    m: &DatasetManifest,
    client: &InferenceClient,
    cfg: &SamplingConfig,
) -> Result<DatasetManifest> {
    let clips: Vec<_> = m.entries.iter().map(|e| e.clip.clone()).collect();
    let results = client.generate_captions_many(&clips, cfg);
    let mut entries = Vec::with_capacity(m.entries.len());
    for (entry, result) in m.entries.iter().zip(results) {
        let mut captions = entry.captions.clone();
        captions.extend(result?.into_iter().map(ScoredCaption::unscored));
        entries.push(Entry::new(entry.clip.clone(), captions));
    }
    let mut out = DatasetManifest {
        entries,
        metadata: m.metadata.clone(),
    };
    out.canonicalize();
    out.metadata.insert("prompt".into(), cfg.prompt.clone());
    out.metadata.insert("n_captions".into(), cfg.n_captions.to_string());
    out.metadata.insert("sampling_top_k".into(), cfg.top_k.to_string());
    out.metadata.insert("sampling_top_p".into(), cfg.top_p.to_string());
    if let Some(seed) = cfg.seed {
        out.metadata.insert("sampling_seed".into(), seed.to_string());
    }
    Ok(out)
}

/// Audio embeddings keyed by clip id and caption embeddings keyed
/// `<id>#<k>`, `k` being the caption's index in the canonical manifest.
pub fn embed_manifest(
    m: &DatasetManifest,
    client: &InferenceClient,
) -> Result<(EmbeddingStore, EmbeddingStore)> {
    let clips: Vec<_> = m.entries.iter().map(|e| e.clip.clone()).collect();
    let audio_vecs = client.embed_audio(&clips)?;
    let dim = audio_vecs[0].len();
    let audio = EmbeddingStore::from_records(
        clips
            .iter()
            .zip(audio_vecs)
            .map(|(c, v)| EmbeddingRecord::new(c.id.clone(), v)),
        dim,
    )
    .map_err(|e| Error::Usage(format!("audio embeddings: {e}")))?;

    let mut keys = Vec::new();
    let mut texts = Vec::new();
    for e in &m.entries {
        for (k, c) in e.captions.iter().enumerate() {
            keys.push(caption_key(e.id(), k));
            texts.push(c.text().to_owned());
        }
    }
    let text_vecs = if texts.is_empty() {
        Vec::new()
    } else {
        client.embed_text(&texts)?
    };
    if let Some(v) = text_vecs.iter().find(|v| v.len() != dim) {
        return Err(Error::Client(crate::client::ClientError::BadResponse {
            path: crate::client::EMBED_TEXT_PATH.into(),
            reason: format!("text dim {} differs from audio dim {dim}", v.len()),
        }));
    }
    let text = EmbeddingStore::from_records(
        keys.into_iter()
            .zip(text_vecs)
            .map(|(k, v)| EmbeddingRecord::new(k, v)),
        dim,
    )
    .map_err(|e| Error::Usage(format!("text embeddings: {e}")))?;
    Ok((audio, text))
}

fn score_entry(entry: &Entry, audio: &EmbeddingStore, text: &EmbeddingStore) -> Result<Entry> {
    if entry.captions.is_empty() {
        return Ok(entry.clone());
    }
    let audio_vec = audio.get(entry.id()).ok_or_else(|| Error::MissingEmbedding {
        store: "audio",
        key: entry.id().to_owned(),
    })?;
    let caption_vecs = (0..entry.captions.len())
        .map(|k| {
            let key = caption_key(entry.id(), k);
            text.get(&key)
                .ok_or(Error::MissingEmbedding { store: "text", key })
        })
        .collect::<Result<Vec<_>>>()?;
    let candidates: Vec<CaptionCandidate> =
        entry.captions.iter().map(|c| c.candidate.clone()).collect();
    let scored = score_candidates(audio_vec, &caption_vecs, &candidates)
        .map_err(|e| Error::core(format!("scoring {}", entry.id()), e))?;
    Ok(Entry::new(entry.clip.clone(), scored))
}

/// Scores every caption against its clip. Caption `k` of clip `id` is looked
/// up as `id#k` in `text`.
pub fn score_manifest(
    m: &DatasetManifest,
    audio: &EmbeddingStore,
    text: &EmbeddingStore,
) -> Result<DatasetManifest> {
    let entries = m
        .entries
        .par_iter()
        .map(|e| score_entry(e, audio, text))
        .collect::<Result<Vec<_>>>()?;
    let mut out = DatasetManifest {
        entries,
        metadata: m.metadata.clone(),
    };
    out.canonicalize();
    Ok(out)
}

/// Parallel equivalent of `capcurate_core::apply_threshold`.
pub fn filter_manifest(m: &DatasetManifest, cfg: &FilterConfig) -> Result<DatasetManifest> {
    cfg.validate().map_err(|e| Error::Usage(e.to_string()))?;
    let entries: Vec<Entry> = m
        .entries
        .par_iter()
        .filter_map(|e| filter_entry(e, cfg))
        .collect();
    let mut out = DatasetManifest {
        entries,
        metadata: m.metadata.clone(),
    };
    out.canonicalize();
    stamp_filter_metadata(&mut out.metadata, cfg);
    Ok(out)
}

fn default_weight() -> f64 {
    1.0
}

fn default_repeat() -> u32 {
    1
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MixSource {
    pub path: PathBuf,
    #[serde(default = "default_weight")]
    pub weight: f64,
    #[serde(default = "default_repeat")]
    pub repeat: u32,
}

/// Mix recipe, read from JSON:
/// `{"sources":[{"path":..,"weight":1.0,"repeat":1}],"dedup_on":"audio_id","seed":0}`.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MixSpec {
    pub sources: Vec<MixSource>,
    #[serde(default = "default_dedup")]
    pub dedup_on: String,
    #[serde(default)]
    pub seed: u64,
}

fn default_dedup() -> String {
    DedupOn::AudioId.as_str().into()
}

impl MixSpec {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let spec: Self = serde_json::from_str(&text).map_err(|e| Error::Spec {
            path: path.to_owned(),
            reason: e.to_string(),
        })?;
        spec.validate().map_err(|reason| Error::Spec {
            path: path.to_owned(),
            reason,
        })?;
        Ok(spec)
    }

    pub fn validate(&self) -> std::result::Result<(), String> {
        if self.sources.is_empty() {
            return Err("at least one source is required".into());
        }
        self.dedup()?;
        for s in &self.sources {
            if !(s.weight.is_finite() && s.weight > 0.0) {
                return Err(format!("{}: weight must be positive", s.path.display()));
            }
            if s.repeat == 0 {
                return Err(format!("{}: repeat must be positive", s.path.display()));
            }
        }
        Ok(())
    }

    fn dedup(&self) -> std::result::Result<DedupOn, String> {
        DedupOn::parse(&self.dedup_on)
            .ok_or_else(|| format!("dedup_on must be \"none\" or \"audio_id\", got {:?}", self.dedup_on))
    }

    /// Canonical one-line JSON of the spec, recorded in output metadata.
    pub fn to_json(&self) -> String {
        let sources: Vec<_> = self
            .sources
            .iter()
            .map(|s| {
                serde_json::json!({
                    "path": s.path.to_string_lossy(),
                    "weight": s.weight,
                    "repeat": s.repeat,
                })
            })
            .collect();
        serde_json::json!({
            "sources": sources,
            "dedup_on": self.dedup_on,
            "seed": self.seed,
        })
        .to_string()
    }
}

/// Merged manifest plus the per-id sampling weights sidecar.
pub fn run_mix(spec: &MixSpec) -> Result<(DatasetManifest, BTreeMap<String, f64>)> {
    let dedup = spec.dedup().map_err(Error::Usage)?;
    let manifests = spec
        .sources
        .iter()
        .map(|s| load_manifest(&s.path))
        .collect::<Result<Vec<_>>>()?;
    let mut merged = merge_manifests(&manifests, dedup).map_err(|e| Error::core("mix", e))?;
    let weighted: Vec<_> = spec
        .sources
        .iter()
        .zip(&manifests)
        .map(|(s, m)| WeightedSource {
            manifest: m,
            weight: s.weight,
            repeat: s.repeat,
        })
        .collect();
    let weights = sampling_weights(&weighted).map_err(|e| Error::core("mix", e))?;
    merged.metadata.insert("mix_spec".into(), spec.to_json());
    Ok((merged, weights))
}

/// `out.afm.jsonl` → `out.weights.json`, next to the manifest.
pub fn weights_sidecar_path(manifest_path: &Path) -> PathBuf {
    let name = manifest_path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default();
    let stem = name
        .strip_suffix(EXTENSION)
        .or_else(|| name.rsplit_once('.').map(|(s, _)| s))
        .unwrap_or(&name);
    manifest_path.with_file_name(format!("{stem}.weights.json"))
}

pub fn weights_to_json(weights: &BTreeMap<String, f64>) -> String {
    let mut s = serde_json::to_string_pretty(weights).expect("weights serialize");
    s.push('\n');
    s
}

/// Inputs for one metric evaluation. Each metric is computed only when its
/// inputs are present.
#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalInputs {
    /// Generated-set embeddings for FD.
    pub gen: Option<PathBuf>,
    #[serde(rename = "ref")]
    pub reference: Option<PathBuf>,
    /// Generated/reference embeddings from the FAD backbone.
    pub gen_fad: Option<PathBuf>,
    pub ref_fad: Option<PathBuf>,
    /// Classifier probability table (`.afprb`) for IS.
    pub probs: Option<PathBuf>,
    /// Paired audio/text embeddings for CLAP score, matched by key.
    pub clap_audio: Option<PathBuf>,
    pub clap_text: Option<PathBuf>,
}

impl EvalInputs {
    pub fn is_empty(&self) -> bool {
        self == &Self::default()
    }
}

/// Runs Gaussian block sums on the current rayon pool.
pub struct RayonBlocks;

impl BlockExecutor for RayonBlocks {
    fn map_blocks<T, F>(&self, blocks: &[&[T]], f: F) -> Vec<Vec<f64>>
    where
        T: Sync,
        F: Fn(&[T]) -> Vec<f64> + Sync + Send,
    {
        blocks.par_iter().map(|b| f(b)).collect()
    }
}

pub fn store_gaussian(path: &Path) -> Result<GaussianStats> {
    let store = load_store(path)?;
    estimate_gaussian_with(store.as_flat(), store.dim(), &RayonBlocks)
        .map_err(|e| Error::core(path.display().to_string(), e))
}

fn pair_fd(gen: &Path, reference: &Path, eps: f64) -> Result<f64> {
    let (g, r) = rayon::join(|| store_gaussian(gen), || store_gaussian(reference));
    frechet_distance(&g?, &r?, eps).map_err(|e| Error::core("frechet distance", e))
}

fn both<'a>(
    a: &'a Option<PathBuf>,
    b: &'a Option<PathBuf>,
    what: &str,
) -> Result<Option<(&'a Path, &'a Path)>> {
    match (a, b) {
        (Some(a), Some(b)) => Ok(Some((a, b))),
        (None, None) => Ok(None),
        _ => Err(Error::Usage(format!("{what} needs both inputs"))),
    }
}

pub fn evaluate(inputs: &EvalInputs, config: MetricConfig) -> Result<MetricReport> {
    if inputs.is_empty() {
        return Err(Error::Usage("no evaluation inputs given".into()));
    }
    let mut report = MetricReport {
        config,
        ..MetricReport::default()
    };
    if let Some((g, r)) = both(&inputs.gen, &inputs.reference, "FD (--gen/--ref)")? {
        report.fd = Some(pair_fd(g, r, config.fd_eps)?);
    }
    if let Some((g, r)) = both(&inputs.gen_fad, &inputs.ref_fad, "FAD (--gen-fad/--ref-fad)")? {
        report.fad = Some(pair_fd(g, r, config.fd_eps)?);
    }
    if let Some(path) = &inputs.probs {
        let store =
            read_store_file(path, PROBABILITY_MAGIC).map_err(|e| Error::embedding(path, e))?;
        let data: Vec<f64> = store.as_flat().iter().map(|&x| f64::from(x)).collect();
        let table = ProbTable::new(data, store.dim())
            .map_err(|e| Error::core(path.display().to_string(), e))?;
        let (mean, std) = inception_score(&table, config.is_splits, config.seed)
            .map_err(|e| Error::core(path.display().to_string(), e))?;
        report.is_mean = Some(mean);
        report.is_std = Some(std);
    }
    if let Some((a, t)) = both(&inputs.clap_audio, &inputs.clap_text, "CLAP score (--clap-audio/--clap-text)")? {
        let audio = load_store(a)?;
        let text = load_store(t)?;
        if audio.keys() != text.keys() {
            return Err(Error::Usage(format!(
                "{} and {} do not hold the same keys",
                a.display(),
                t.display()
            )));
        }
        let av: Vec<&[f32]> = (0..audio.len()).map(|i| audio.vector(i)).collect();
        let tv: Vec<&[f32]> = (0..text.len()).map(|i| text.vector(i)).collect();
        report.clap = Some(clap_score(&av, &tv).map_err(|e| Error::core("clap score", e))?);
    }
    Ok(report)
}

fn default_grid() -> Vec<f64> {
    vec![0.35, 0.40, 0.45, 0.50]
}

fn default_top_k() -> usize {
    3
}

/// Sweep recipe, read from JSON. `eval` maps a threshold label (e.g.
/// `"0.45"`) to the metric inputs of the model trained on that subset.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    #[serde(default = "default_grid")]
    pub tau_grid: Vec<f64>,
    #[serde(default = "default_top_k")]
    pub top_k: usize,
    pub output_dir: PathBuf,
    #[serde(default)]
    pub eval: BTreeMap<String, EvalInputs>,
}

impl SweepSpec {
    pub fn new(output_dir: impl Into<PathBuf>) -> Self {
        Self {
            tau_grid: default_grid(),
            top_k: default_top_k(),
            output_dir: output_dir.into(),
            eval: BTreeMap::new(),
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Spec {
            path: path.to_owned(),
            reason: e.to_string(),
        })
    }

    pub fn validate(&self) -> Result<()> {
        validate_grid(&self.tau_grid).map_err(|e| Error::Usage(e.to_string()))?;
        if self.top_k == 0 {
            return Err(Error::Usage("top_k must be a positive integer".into()));
        }
        for key in self.eval.keys() {
            if !self.tau_grid.iter().any(|&t| tau_label(t) == *key) {
                return Err(Error::Usage(format!("eval entry {key:?} is not on the grid")));
            }
        }
        Ok(())
    }
}

pub fn sweep_manifest_path(dir: &Path, tau: f64) -> PathBuf {
    dir.join(format!("tau_{}{EXTENSION}", tau_label(tau)))
}

pub const SWEEP_REPORT_NAME: &str = "sweep_report.json";

/// Writes `tau_<value>.afm.jsonl` per threshold and `sweep_report.json` into
/// the output directory and returns the report.
pub fn run_sweep(m: &DatasetManifest, spec: &SweepSpec, metric: MetricConfig, seed: u64) -> Result<SweepReport> {
    spec.validate()?;
    fs::create_dir_all(&spec.output_dir).map_err(|e| Error::io(&spec.output_dir, e))?;

    let outputs = spec
        .tau_grid
        .par_iter()
        .map(|&tau| {
            let cfg = FilterConfig::new(tau, spec.top_k).map_err(|e| Error::Usage(e.to_string()))?;
            let mut filtered = filter_manifest(m, &cfg)?;
            filtered.metadata.insert("stage".into(), "sweep".into());
            filtered.metadata.insert("seed".into(), seed.to_string());
            save_manifest(&sweep_manifest_path(&spec.output_dir, tau), &filtered)?;
            let metrics = match spec.eval.get(&tau_label(tau)) {
                Some(inputs) => Some(evaluate(inputs, metric)?),
                None => None,
            };
            Ok((filtered.caption_count() as u64, filtered.len() as u64, metrics))
        })
        .collect::<Result<Vec<_>>>()?;

    let stats = dataset_stats(m, &spec.tau_grid, spec.top_k);
    let mut report = SweepReport {
        grid: spec.tau_grid.clone(),
        captions: Vec::with_capacity(outputs.len()),
        audios: Vec::with_capacity(outputs.len()),
        metrics: None,
    };
    let mut metrics = Vec::new();
    for (&tau, (captions, audios, metric)) in spec.tau_grid.iter().zip(outputs) {
        report.captions.push(captions);
        report.audios.push(audios);
        if let Some(r) = metric {
            metrics.push((tau, r));
        }
    }
    debug_assert_eq!(report.captions, stats.captions_at_tau);
    if !metrics.is_empty() {
        report.metrics = Some(metrics);
    }
    let path = spec.output_dir.join(SWEEP_REPORT_NAME);
    fs::write(&path, crate::report::sweep_to_json(&report)).map_err(|e| Error::io(&path, e))?;
    Ok(report)
}
