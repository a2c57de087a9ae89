//! Combining manifests into pretraining corpora.
//!
//! * [`merge_manifests`] unions several manifests, merging entries that share
//!   a clip id.
//! * [`sampling_weights`] produces the per-id weight sidecar that replaces
//!   physical duplication of entries.
//! * [`augment`] attaches synthetic captions to the clips of a real-caption
//!   manifest.
//! * [`sweep_manifests`] filters one manifest at every threshold of a grid.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::cmp::Ordering;

use crate::error::{Error, Result};
use crate::manifest::{DatasetManifest, Entry, ScoredCaption};
use crate::similarity::{apply_threshold, FilterConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DedupOn {
    /// Colliding ids are an error.
    None,
    #[default]
    AudioId,
}

impl DedupOn {
    pub fn as_str(self) -> &'static str {
        match self {
            DedupOn::None => "none",
            DedupOn::AudioId => "audio_id",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "none" => Some(DedupOn::None),
            "audio_id" => Some(DedupOn::AudioId),
            _ => None,
        }
    }
}

/// Merges two entries with the same id.
///
/// The clip with the smaller content (source uri, duration, labels) is kept.
/// Captions are unioned by exact text; when both sides carry the same text,
/// the i-th best occurrence from either side is kept, so a caption present
/// on both sides survives once with the higher similarity.
pub fn merge_entries(a: &Entry, b: &Entry) -> Entry {
    let clip = match a.clip.cmp_content(&b.clip) {
        Ordering::Greater => b.clip.clone(),
        _ => a.clip.clone(),
    };

    let mut by_text: BTreeMap<&str, (Vec<&ScoredCaption>, Vec<&ScoredCaption>)> = BTreeMap::new();
    for c in &a.captions {
        by_text.entry(c.text()).or_default().0.push(c);
    }
    for c in &b.captions {
        by_text.entry(c.text()).or_default().1.push(c);
    }

    let mut captions = Vec::with_capacity(a.captions.len().max(b.captions.len()));
    for (_, (mut xs, mut ys)) in by_text {
        xs.sort_by(|p, q| p.canonical_cmp(q));
        ys.sort_by(|p, q| p.canonical_cmp(q));
        for i in 0..xs.len().max(ys.len()) {
            let pick = match (xs.get(i), ys.get(i)) {
                (Some(x), Some(y)) => {
                    if y.canonical_cmp(x) == Ordering::Less {
                        y
                    } else {
                        x
                    }
                }
                (Some(x), None) => x,
                (None, Some(y)) => y,
                (None, None) => unreachable!(),
            };
            captions.push((*pick).clone());
        }
    }
    crate::manifest::sort_captions(&mut captions);
    Entry::new(clip, captions)
}

/// Union of all entries. With [`DedupOn::AudioId`] colliding entries are
/// merged via [`merge_entries`]; with [`DedupOn::None`] a collision is a
/// [`Error::DuplicateId`]. The result carries no metadata.
pub fn merge_manifests<'a, I>(sources: I, dedup: DedupOn) -> Result<DatasetManifest>
where
    I: IntoIterator<Item = &'a DatasetManifest>,
{
    let mut merged: BTreeMap<&str, Entry> = BTreeMap::new();
    for m in sources {
        for e in &m.entries {
            match merged.get_mut(e.id()) {
                Some(existing) => {
                    if dedup == DedupOn::None {
                        return Err(Error::DuplicateId(e.id().into()));
                    }
                    *existing = merge_entries(existing, e);
                }
                None => {
                    merged.insert(e.id(), e.clone());
                }
            }
        }
    }
    Ok(DatasetManifest {
        entries: merged.into_values().collect(),
        metadata: BTreeMap::new(),
    })
}

/// One weighted input of a mix.
#[derive(Debug, Clone, Copy)]
pub struct WeightedSource<'a> {
    pub manifest: &'a DatasetManifest,
    pub weight: f64,
    pub repeat: u32,
}

/// Per-id sampling weight: the sum of `weight × repeat` over every source
/// containing the id.
pub fn sampling_weights(sources: &[WeightedSource<'_>]) -> Result<BTreeMap<String, f64>> {
    let mut out: BTreeMap<String, f64> = BTreeMap::new();
    for (i, s) in sources.iter().enumerate() {
        if !(s.weight.is_finite() && s.weight > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "source {i}: weight must be positive and finite, got {}",
                s.weight
            )));
        }
        if s.repeat == 0 {
            return Err(Error::InvalidConfig(format!(
                "source {i}: repeat must be a positive integer"
            )));
        }
        let w = s.weight * f64::from(s.repeat);
        for e in &s.manifest.entries {
            *out.entry(e.clip.id.clone()).or_insert(0.0) += w;
        }
    }
    Ok(out)
}

/// Appends the synthetic captions of each real clip. Real captions are kept
/// unconditionally and clips that only exist in `synthetic` are ignored.
pub fn augment(real: &DatasetManifest, synthetic: &DatasetManifest) -> DatasetManifest {
    let entries = real
        .entries
        .iter()
        .map(|e| match synthetic.get(e.id()) {
            Some(s) if !s.captions.is_empty() => {
                let mut captions = e.captions.clone();
                captions.extend(s.captions.iter().cloned());
                crate::manifest::sort_captions(&mut captions);
                Entry::new(e.clip.clone(), captions)
            }
            _ => e.clone(),
        })
        .collect();
    DatasetManifest {
        entries,
        metadata: real.metadata.clone(),
    }
}

/// Checks a threshold grid: non-empty, strictly increasing, within [-1, 1].
pub fn validate_grid(grid: &[f64]) -> Result<()> {
    if grid.is_empty() {
        return Err(Error::InvalidConfig("tau grid is empty".into()));
    }
    if let Some(t) = grid.iter().find(|t| !(-1.0..=1.0).contains(*t)) {
        return Err(Error::InvalidConfig(format!("tau {t} outside [-1, 1]")));
    }
    if grid.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(Error::InvalidConfig("tau grid must be strictly increasing".into()));
    }
    Ok(())
}

/// One filtered manifest per threshold, in grid order.
pub fn sweep_manifests(m: &DatasetManifest, grid: &[f64], top_k: usize) -> Result<Vec<DatasetManifest>> {
    validate_grid(grid)?;
    grid.iter()
        .map(|&tau| apply_threshold(m, &FilterConfig::new(tau, top_k)?))
        .collect()
}
