//! Caption ranking and filtering by audio-text cosine similarity.
//!
//! The filter keeps the `top_k` highest-similarity captions of each clip and
//! then drops those below the threshold `tau`. Selection always happens
//! before thresholding, and [`dataset_stats`] counts with the same order.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt::Write;

use crate::error::{Error, Result};
use crate::manifest::{sort_captions, CaptionCandidate, DatasetManifest, Entry, ScoredCaption};

/// Norms at or below this are treated as zero.
pub const MIN_NORM: f64 = 1e-12;

/// Cosine similarity accumulated in 64-bit, index order, clamped to
/// `[-1, 1]`. Bit-identical under swapping `u` and `v`.
pub fn cosine<T: Copy + Into<f64>>(u: &[T], v: &[T]) -> Result<f64> {
    if u.len() != v.len() {
        return Err(Error::DimensionMismatch {
            expected: u.len(),
            found: v.len(),
        });
    }
    let mut dot = 0.0f64;
    let mut uu = 0.0f64;
    let mut vv = 0.0f64;
    for (&a, &b) in u.iter().zip(v) {
        let (a, b): (f64, f64) = (a.into(), b.into());
        dot += a * b;
        uu += a * a;
        vv += b * b;
    }
    let (nu, nv) = (libm::sqrt(uu), libm::sqrt(vv));
    if !(nu > MIN_NORM && nv > MIN_NORM) {
        return Err(Error::ZeroNormVector);
    }
    Ok((dot / (nu * nv)).clamp(-1.0, 1.0))
}

/// Scores each candidate against the clip embedding and returns the captions
/// in canonical order (descending similarity, ties by ascending text).
pub fn score_candidates<A, C>(
    audio_vec: &[A],
    caption_vecs: &[C],
    candidates: &[CaptionCandidate],
) -> Result<Vec<ScoredCaption>>
where
    A: Copy + Into<f64>,
    C: AsRef<[A]>,
{
    if caption_vecs.len() != candidates.len() {
        return Err(Error::LengthMismatch {
            left: caption_vecs.len(),
            right: candidates.len(),
        });
    }
    let mut scored = caption_vecs
        .iter()
        .zip(candidates)
        .map(|(v, c)| Ok(ScoredCaption::scored(c.clone(), cosine(audio_vec, v.as_ref())?)))
        .collect::<Result<Vec<_>>>()?;
    sort_captions(&mut scored);
    Ok(scored)
}

/// First `min(k, len)` captions of an already canonical list.
pub fn select_top_k(scored: &[ScoredCaption], k: usize) -> Vec<ScoredCaption> {
    scored[..k.min(scored.len())].to_vec()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FilterConfig {
    pub tau: f64,
    pub top_k: usize,
    pub drop_empty: bool,
}

impl Default for FilterConfig {
    fn default() -> Self {
        Self {
            tau: 0.35,
            top_k: 3,
            drop_empty: true,
        }
    }
}

impl FilterConfig {
    pub fn new(tau: f64, top_k: usize) -> Result<Self> {
        let cfg = Self {
            tau,
            top_k,
            ..Self::default()
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(-1.0..=1.0).contains(&self.tau) {
            return Err(Error::InvalidConfig(format!(
                "tau must be in [-1, 1], got {}",
                self.tau
            )));
        }
        if self.top_k == 0 {
            return Err(Error::InvalidConfig("top_k must be a positive integer".into()));
        }
        Ok(())
    }
}

/// Top-k then threshold on one canonical caption list. Unscored captions
/// never pass.
pub fn filter_captions(captions: &[ScoredCaption], cfg: &FilterConfig) -> Vec<ScoredCaption> {
    captions
        .iter()
        .take(cfg.top_k)
        .filter(|c| passes(c, cfg.tau))
        .cloned()
        .collect()
}

fn passes(c: &ScoredCaption, tau: f64) -> bool {
    matches!(c.similarity, Some(s) if s >= tau)
}

/// Filters one entry; `None` when the entry is dropped.
pub fn filter_entry(entry: &Entry, cfg: &FilterConfig) -> Option<Entry> {
    let captions = filter_captions(&entry.captions, cfg);
    if captions.is_empty() && cfg.drop_empty {
        return None;
    }
    Some(Entry::new(entry.clip.clone(), captions))
}

/// Records the filter parameters in manifest metadata.
pub fn stamp_filter_metadata(metadata: &mut BTreeMap<String, String>, cfg: &FilterConfig) {
    metadata.insert("tau".into(), cfg.tau.to_string());
    metadata.insert("top_k".into(), cfg.top_k.to_string());
}

pub fn apply_threshold(m: &DatasetManifest, cfg: &FilterConfig) -> Result<DatasetManifest> {
    cfg.validate()?;
    let mut out = DatasetManifest {
        entries: m.entries.iter().filter_map(|e| filter_entry(e, cfg)).collect(),
        metadata: m.metadata.clone(),
    };
    out.canonicalize();
    stamp_filter_metadata(&mut out.metadata, cfg);
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct StatsReport {
    pub tau_grid: Vec<f64>,
    pub top_k: usize,
    pub captions_at_tau: Vec<u64>,
    pub audios_at_tau: Vec<u64>,
    pub label_histogram: BTreeMap<String, u64>,
    /// Nearest-rank 10th, 20th, ..., 100th percentiles of all scored
    /// similarities; empty when nothing is scored.
    pub similarity_deciles: Vec<f64>,
}

impl StatsReport {
    /// Aligned-column text rendering: one row per threshold, then the label
    /// histogram sorted by descending count.
    pub fn render_table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{:>8}  {:>12}  {:>10}", "tau", "captions", "audios");
        for ((tau, c), a) in self
            .tau_grid
            .iter()
            .zip(&self.captions_at_tau)
            .zip(&self.audios_at_tau)
        {
            let _ = writeln!(out, "{tau:>8.2}  {c:>12}  {a:>10}");
        }
        if !self.similarity_deciles.is_empty() {
            let _ = write!(out, "\ndeciles:");
            for d in &self.similarity_deciles {
                let _ = write!(out, " {d:.4}");
            }
            let _ = writeln!(out);
        }
        if !self.label_histogram.is_empty() {
            let mut labels: Vec<_> = self.label_histogram.iter().collect();
            labels.sort_by(|a, b| b.1.cmp(a.1).then_with(|| a.0.cmp(b.0)));
            let width = labels.iter().map(|(l, _)| l.chars().count()).max().unwrap_or(0);
            let _ = writeln!(out, "\n{:<width$}  {:>10}", "label", "audios");
            for (label, count) in labels {
                let _ = writeln!(out, "{label:<width$}  {count:>10}");
            }
        }
        out
    }
}

/// Caption and audio counts per threshold (Top-k applied first), label
/// histogram over clips, and similarity deciles.
pub fn dataset_stats(m: &DatasetManifest, tau_grid: &[f64], top_k: usize) -> StatsReport {
    let mut captions_at_tau = alloc::vec![0u64; tau_grid.len()];
    let mut audios_at_tau = alloc::vec![0u64; tau_grid.len()];
    let mut label_histogram = BTreeMap::new();
    let mut sims = Vec::new();

    for entry in &m.entries {
        let top = &entry.captions[..top_k.min(entry.captions.len())];
        for (i, &tau) in tau_grid.iter().enumerate() {
            let n = top.iter().filter(|c| passes(c, tau)).count() as u64;
            captions_at_tau[i] += n;
            audios_at_tau[i] += u64::from(n > 0);
        }
        for label in entry.clip.labels.iter().flatten() {
            *label_histogram.entry(label.clone()).or_insert(0) += 1;
        }
        sims.extend(entry.captions.iter().filter_map(|c| c.similarity));
    }

    sims.sort_by(f64::total_cmp);
    let similarity_deciles = if sims.is_empty() {
        Vec::new()
    } else {
        (1..=10)
            .map(|k| {
                let rank = (k * sims.len()).div_ceil(10);
                sims[rank - 1]
            })
            .collect()
    };

    StatsReport {
        tau_grid: tau_grid.to_vec(),
        top_k,
        captions_at_tau,
        audios_at_tau,
        label_histogram,
        similarity_deciles,
    }
}
