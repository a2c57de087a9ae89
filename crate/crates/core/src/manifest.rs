//! Corpus data model: audio clips, their candidate captions, and the
//! manifest that pairs them.
//!
//! A [`DatasetManifest`] is *canonical* when its entries are sorted by
//! ascending clip id and every caption list is sorted by descending
//! similarity, ties broken by ascending caption text. Unscored captions
//! (similarity not yet computed) sort after all scored ones.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::cmp::Ordering;
use core::fmt;

use crate::error::{Error, Result};

/// Slack allowed on the `[-1, 1]` similarity range.
pub const SIMILARITY_SLACK: f64 = 1e-6;

/// Round a similarity to 6 decimal digits (round-half-even on the exact
/// binary value), the precision it is persisted with.
pub fn quantize_similarity(x: f64) -> f64 {
    if !x.is_finite() {
        return x;
    }
    let q: f64 = format!("{x:.6}").parse().unwrap_or(x);
    // "-0.000000" parses to -0.0
    if q == 0.0 {
        0.0
    } else {
        q
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Origin {
    Human,
    Synthetic,
}

impl Origin {
    pub fn as_str(self) -> &'static str {
        match self {
            Origin::Human => "human",
            Origin::Synthetic => "synthetic",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "human" => Some(Origin::Human),
            "synthetic" => Some(Origin::Synthetic),
            _ => None,
        }
    }
}

impl fmt::Display for Origin {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AudioClip {
    pub id: String,
    pub source_uri: String,
    pub duration_s: Option<f64>,
    pub labels: Option<Vec<String>>,
}

impl AudioClip {
    pub fn new(id: impl Into<String>, source_uri: impl Into<String>) -> Self {
        Self {
            id: id.into(),
            source_uri: source_uri.into(),
            duration_s: None,
            labels: None,
        }
    }

    /// Total order used to pick a representative when two sources disagree
    /// about the same clip id.
    pub(crate) fn cmp_content(&self, other: &Self) -> Ordering {
        self.source_uri
            .cmp(&other.source_uri)
            .then_with(|| match (self.duration_s, other.duration_s) {
                (None, None) => Ordering::Equal,
                (None, Some(_)) => Ordering::Less,
                (Some(_), None) => Ordering::Greater,
                (Some(a), Some(b)) => a.total_cmp(&b),
            })
            .then_with(|| self.labels.cmp(&other.labels))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct CaptionCandidate {
    pub text: String,
    pub origin: Origin,
}

impl CaptionCandidate {
    /// Normalizes `text`: tabs and line breaks become spaces and both ends
    /// are trimmed. Any other control character, or a text that is empty
    /// after trimming, is rejected.
    pub fn new(text: &str, origin: Origin) -> Result<Self> {
        Ok(Self {
            text: normalize_caption_text(text)?,
            origin,
        })
    }

    pub fn synthetic(text: &str) -> Result<Self> {
        Self::new(text, Origin::Synthetic)
    }

    pub fn human(text: &str) -> Result<Self> {
        Self::new(text, Origin::Human)
    }
}

pub fn normalize_caption_text(text: &str) -> Result<String> {
    let mut out = String::with_capacity(text.len());
    for c in text.chars() {
        if c.is_control() {
            if c.is_whitespace() {
                out.push(' ');
            } else {
                return Err(Error::InvalidCaption("control character"));
            }
        } else {
            out.push(c);
        }
    }
    let trimmed = out.trim();
    if trimmed.is_empty() {
        return Err(Error::InvalidCaption("empty text"));
    }
    Ok(trimmed.to_string())
}

fn caption_text_problem(text: &str) -> Option<&'static str> {
    if text.trim().is_empty() {
        Some("empty text")
    } else if text.chars().any(char::is_control) {
        Some("control character")
    } else if text.trim() != text {
        Some("untrimmed text")
    } else {
        None
    }
}

/// A caption with its audio-text cosine similarity. `similarity` is `None`
/// for candidates that have not been scored yet.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoredCaption {
    pub candidate: CaptionCandidate,
    pub similarity: Option<f64>,
}

impl ScoredCaption {
    /// Attaches a similarity, quantized to its persisted precision.
    pub fn scored(candidate: CaptionCandidate, similarity: f64) -> Self {
        Self {
            candidate,
            similarity: Some(quantize_similarity(similarity)),
        }
    }

    pub fn unscored(candidate: CaptionCandidate) -> Self {
        Self {
            candidate,
            similarity: None,
        }
    }

    pub fn text(&self) -> &str {
        &self.candidate.text
    }

    pub fn origin(&self) -> Origin {
        self.candidate.origin
    }

    /// Canonical caption order: descending similarity (unscored last), then
    /// ascending text, then origin.
    pub fn canonical_cmp(&self, other: &Self) -> Ordering {
        let by_sim = match (self.similarity, other.similarity) {
            (Some(a), Some(b)) => b.total_cmp(&a),
            (Some(_), None) => Ordering::Less,
            (None, Some(_)) => Ordering::Greater,
            (None, None) => Ordering::Equal,
        };
        by_sim
            .then_with(|| self.candidate.text.cmp(&other.candidate.text))
            .then_with(|| self.candidate.origin.cmp(&other.candidate.origin))
    }
}

pub fn sort_captions(captions: &mut [ScoredCaption]) {
    captions.sort_by(ScoredCaption::canonical_cmp);
}

#[derive(Debug, Clone, PartialEq)]
pub struct Entry {
    pub clip: AudioClip,
    pub captions: Vec<ScoredCaption>,
}

impl Entry {
    pub fn new(clip: AudioClip, captions: Vec<ScoredCaption>) -> Self {
        Self { clip, captions }
    }

    pub fn id(&self) -> &str {
        &self.clip.id
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct DatasetManifest {
    pub entries: Vec<Entry>,
    pub metadata: BTreeMap<String, String>,
}

impl DatasetManifest {
    pub fn empty() -> Self {
        Self::default()
    }

    /// Builds a canonical manifest. Duplicate clip ids are rejected.
    pub fn new(entries: Vec<Entry>, metadata: BTreeMap<String, String>) -> Result<Self> {
        let mut m = Self { entries, metadata };
        m.canonicalize();
        if let Some(dup) = m.entries.windows(2).find(|w| w[0].clip.id == w[1].clip.id) {
            return Err(Error::DuplicateId(dup[0].clip.id.clone()));
        }
        Ok(m)
    }

    /// Sorts entries and caption lists into canonical order in place.
    pub fn canonicalize(&mut self) {
        self.entries.sort_by(|a, b| a.clip.id.cmp(&b.clip.id));
        for entry in &mut self.entries {
            sort_captions(&mut entry.captions);
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn caption_count(&self) -> usize {
        self.entries.iter().map(|e| e.captions.len()).sum()
    }

    /// Binary search on the canonical id order.
    pub fn get(&self, id: &str) -> Option<&Entry> {
        self.entries
            .binary_search_by(|e| e.clip.id.as_str().cmp(id))
            .ok()
            .map(|i| &self.entries[i])
    }

    /// Lists every broken invariant. Empty iff the manifest is canonical and
    /// all field constraints hold.
    pub fn validate(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        let mut seen = BTreeSet::new();
        for (i, entry) in self.entries.iter().enumerate() {
            let id = &entry.clip.id;
            if id.is_empty() {
                out.push(Violation::EmptyId { index: i });
            }
            if !seen.insert(id.as_str()) {
                out.push(Violation::DuplicateId { id: id.clone() });
            }
            if i > 0 && self.entries[i - 1].clip.id > *id {
                out.push(Violation::EntryOrderViolation { id: id.clone() });
            }
            if let Some(d) = entry.clip.duration_s {
                if !d.is_finite() || d < 0.0 {
                    out.push(Violation::RangeViolation {
                        id: id.clone(),
                        field: "duration_s",
                    });
                }
            }
            for caption in &entry.captions {
                if let Some(reason) = caption_text_problem(&caption.candidate.text) {
                    out.push(Violation::TextViolation {
                        id: id.clone(),
                        reason,
                    });
                }
                if let Some(s) = caption.similarity {
                    if !s.is_finite() || s.abs() > 1.0 + SIMILARITY_SLACK {
                        out.push(Violation::RangeViolation {
                            id: id.clone(),
                            field: "similarity",
                        });
                    }
                }
            }
            if entry
                .captions
                .windows(2)
                .any(|w| w[0].canonical_cmp(&w[1]) == Ordering::Greater)
            {
                out.push(Violation::OrderViolation { id: id.clone() });
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Violation {
    EmptyId { index: usize },
    DuplicateId { id: String },
    /// Entry is not in ascending id order relative to its predecessor.
    EntryOrderViolation { id: String },
    /// Captions of the entry are not in canonical order.
    OrderViolation { id: String },
    RangeViolation { id: String, field: &'static str },
    TextViolation { id: String, reason: &'static str },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::EmptyId { index } => write!(f, "entry {index}: empty id"),
            Violation::DuplicateId { id } => write!(f, "{id}: duplicate id"),
            Violation::EntryOrderViolation { id } => {
                write!(f, "{id}: entries not in ascending id order")
            }
            Violation::OrderViolation { id } => write!(f, "{id}: captions not in canonical order"),
            Violation::RangeViolation { id, field } => write!(f, "{id}: {field} out of range"),
            Violation::TextViolation { id, reason } => write!(f, "{id}: caption {reason}"),
        }
    }
}
