//! Reader and writer for the `.afm.jsonl` manifest format.
//!
//! Line 1 is a header `{"format":"afm","version":1,"metadata":{...}}`; every
//! following line is one clip record. Output is byte-stable: fields are
//! written in a fixed order, entries and captions in canonical order,
//! metadata keys sorted, and similarities with exactly six decimals.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use capcurate_core::manifest::SIMILARITY_SLACK;
use capcurate_core::{
    quantize_similarity, AudioClip, CaptionCandidate, DatasetManifest, Entry, Origin,
    ScoredCaption,
};
use serde::Deserialize;

pub const FORMAT_NAME: &str = "afm";
pub const FORMAT_VERSION: u64 = 1;
pub const EXTENSION: &str = ".afm.jsonl";

#[derive(Debug, thiserror::Error)]
pub enum ManifestError {
    #[error("line {line}: {reason}")]
    MalformedRecord { line: usize, reason: String },
    #[error("duplicate id {0:?}")]
    DuplicateId(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    format: String,
    version: u64,
    #[serde(default)]
    metadata: BTreeMap<String, String>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct Record {
    id: String,
    source_uri: String,
    #[serde(default)]
    duration_s: Option<f64>,
    #[serde(default)]
    labels: Option<Vec<String>>,
    captions: Vec<CaptionRecord>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct CaptionRecord {
    text: String,
    origin: String,
    #[serde(default)]
    similarity: Option<f64>,
}

fn malformed(line: usize, reason: impl Into<String>) -> ManifestError {
    ManifestError::MalformedRecord {
        line,
        reason: reason.into(),
    }
}

/// Parses a manifest and puts it into canonical order. Blank lines are
/// ignored; a missing or foreign header is malformed.
pub fn parse_manifest<R: BufRead>(reader: R) -> Result<DatasetManifest, ManifestError> {
    let mut metadata = None;
    let mut entries = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let lineno = i + 1;
        let line = line.map_err(|e| match e.kind() {
            io::ErrorKind::InvalidData => malformed(lineno, "invalid UTF-8"),
            _ => ManifestError::Io(e),
        })?;
        if line.trim().is_empty() {
            continue;
        }
        if metadata.is_none() {
            let header: Header = serde_json::from_str(&line)
                .map_err(|e| malformed(lineno, format!("bad header: {e}")))?;
            if header.format != FORMAT_NAME {
                return Err(malformed(lineno, format!("unknown format {:?}", header.format)));
            }
            if header.version != FORMAT_VERSION {
                return Err(malformed(lineno, format!("unsupported version {}", header.version)));
            }
            metadata = Some(header.metadata);
            continue;
        }
        entries.push(parse_record(&line, lineno)?);
    }
    let metadata = metadata.ok_or_else(|| malformed(1, "missing header"))?;
    DatasetManifest::new(entries, metadata).map_err(|e| match e {
        capcurate_core::Error::DuplicateId(id) => ManifestError::DuplicateId(id),
        other => malformed(0, other.to_string()),
    })
}

fn parse_record(line: &str, lineno: usize) -> Result<Entry, ManifestError> {
    let rec: Record = serde_json::from_str(line).map_err(|e| malformed(lineno, e.to_string()))?;
    if rec.id.is_empty() {
        return Err(malformed(lineno, "empty id"));
    }
    if let Some(d) = rec.duration_s {
        if !(d.is_finite() && d >= 0.0) {
            return Err(malformed(lineno, format!("{}: duration_s must be >= 0", rec.id)));
        }
    }
    let mut captions = Vec::with_capacity(rec.captions.len());
    for c in rec.captions {
        let origin = Origin::parse(&c.origin)
            .ok_or_else(|| malformed(lineno, format!("{}: unknown origin {:?}", rec.id, c.origin)))?;
        let candidate = CaptionCandidate::new(&c.text, origin)
            .map_err(|e| malformed(lineno, format!("{}: {e}", rec.id)))?;
        let caption = match c.similarity {
            None => ScoredCaption::unscored(candidate),
            Some(s) if s.is_finite() && s.abs() <= 1.0 + SIMILARITY_SLACK => {
                ScoredCaption::scored(candidate, s)
            }
            Some(s) => {
                return Err(malformed(
                    lineno,
                    format!("{}: similarity {s} outside [-1, 1]", rec.id),
                ))
            }
        };
        captions.push(caption);
    }
    Ok(Entry::new(
        AudioClip {
            id: rec.id,
            source_uri: rec.source_uri,
            duration_s: rec.duration_s,
            labels: rec.labels,
        },
        captions,
    ))
}

fn json_str(s: &str) -> String {
    serde_json::to_string(s).expect("string serialization is infallible")
}

fn format_similarity(s: f64) -> String {
    format!("{:.6}", quantize_similarity(s))
}

/// Serializes one entry as a record line, without the trailing newline.
pub fn format_record(entry: &Entry) -> String {
    let clip = &entry.clip;
    let mut out = String::with_capacity(128 + 96 * entry.captions.len());
    out.push_str("{\"id\":");
    out.push_str(&json_str(&clip.id));
    out.push_str(",\"source_uri\":");
    out.push_str(&json_str(&clip.source_uri));
    out.push_str(",\"duration_s\":");
    match clip.duration_s {
        Some(d) => out.push_str(&serde_json::to_string(&d).expect("finite duration")),
        None => out.push_str("null"),
    }
    out.push_str(",\"labels\":");
    match &clip.labels {
        Some(labels) => out.push_str(&serde_json::to_string(labels).expect("string list")),
        None => out.push_str("null"),
    }
    out.push_str(",\"captions\":[");
    for (i, c) in entry.captions.iter().enumerate() {
        if i > 0 {
            out.push(',');
        }
        out.push_str("{\"text\":");
        out.push_str(&json_str(c.text()));
        out.push_str(",\"origin\":\"");
        out.push_str(c.origin().as_str());
        out.push_str("\",\"similarity\":");
        match c.similarity {
            Some(s) => out.push_str(&format_similarity(s)),
            None => out.push_str("null"),
        }
        out.push('}');
    }
    out.push_str("]}");
    out
}

pub fn format_header(metadata: &BTreeMap<String, String>) -> String {
    format!(
        "{{\"format\":\"{FORMAT_NAME}\",\"version\":{FORMAT_VERSION},\"metadata\":{}}}",
        serde_json::to_string(metadata).expect("string map")
    )
}

/// Writes the manifest and returns the number of bytes written. The manifest
/// is expected to be canonical; it is written in the order given.
pub fn write_manifest<W: Write>(m: &DatasetManifest, mut sink: W) -> io::Result<usize> {
    let mut written = 0;
    let header = format_header(&m.metadata);
    sink.write_all(header.as_bytes())?;
    sink.write_all(b"\n")?;
    written += header.len() + 1;
    for entry in &m.entries {
        let line = format_record(entry);
        sink.write_all(line.as_bytes())?;
        sink.write_all(b"\n")?;
        written += line.len() + 1;
    }
    sink.flush()?;
    Ok(written)
}

pub fn manifest_to_bytes(m: &DatasetManifest) -> Vec<u8> {
    let mut buf = Vec::new();
    write_manifest(m, &mut buf).expect("writing to memory");
    buf
}

pub fn read_manifest_file(path: &Path) -> Result<DatasetManifest, ManifestError> {
    let file = File::open(path)?;
    parse_manifest(BufReader::new(file))
}

/// Writes through a temporary file in the destination directory and renames
/// it into place, so readers never observe a partial manifest.
pub fn write_manifest_file(path: &Path, m: &DatasetManifest) -> io::Result<usize> {
    crate::fsutil::write_atomically(path, |w| write_manifest(m, BufWriter::new(w)))
}
