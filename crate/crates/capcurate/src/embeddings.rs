//! Binary embedding stores (`.afemb`) and probability tables (`.afprb`).
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! magic    6 bytes   "AFEMB1" (or "AFPRB1" for probability tables)
//! dim      u32
//! count    u64
//! reserved u32       zero
//! count × { key_len u16 | key UTF-8 | dim × f32 }
//! ```
//!
//! Records are always written in ascending key order, so any permutation of
//! the same record set produces identical bytes.

use std::fs::File;
use std::io::{self, Read, Write};
use std::path::Path;

pub const EMBEDDING_MAGIC: [u8; 6] = *b"AFEMB1";
pub const PROBABILITY_MAGIC: [u8; 6] = *b"AFPRB1";
pub const HEADER_LEN: usize = 6 + 4 + 8 + 4;

#[derive(Debug, thiserror::Error)]
pub enum EmbeddingError {
    #[error("bad magic bytes {found:?}")]
    BadMagic { found: Vec<u8> },
    #[error("file truncated at byte {offset}")]
    TruncatedFile { offset: usize },
    #[error("{key}: component {index} is not finite")]
    NonFiniteComponent { key: String, index: usize },
    #[error("{key}: vector length {found} does not match dimension {expected}")]
    DimensionMismatch {
        key: String,
        expected: usize,
        found: usize,
    },
    #[error("duplicate key {0:?}")]
    DuplicateKey(String),
    #[error("invalid key: {0}")]
    InvalidKey(String),
    #[error("invalid header: {0}")]
    InvalidHeader(String),
    #[error("{0} trailing bytes after last record")]
    TrailingData(usize),
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingRecord {
    pub key: String,
    pub vector: Vec<f32>,
}

impl EmbeddingRecord {
    pub fn new(key: impl Into<String>, vector: Vec<f32>) -> Self {
        Self {
            key: key.into(),
            vector,
        }
    }
}

/// Key of the `k`-th caption of clip `audio_id` in a text embedding store.
pub fn caption_key(audio_id: &str, k: usize) -> String {
    format!("{audio_id}#{k}")
}

/// Immutable id-indexed set of `dim`-length vectors, keys ascending.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingStore {
    dim: usize,
    keys: Vec<String>,
    data: Vec<f32>,
}

impl EmbeddingStore {
    /// Validates and sorts the records.
    pub fn from_records(
        records: impl IntoIterator<Item = EmbeddingRecord>,
        dim: usize,
    ) -> Result<Self, EmbeddingError> {
        if dim == 0 || dim > u32::MAX as usize {
            return Err(EmbeddingError::InvalidHeader(format!("dimension {dim}")));
        }
        let mut records: Vec<EmbeddingRecord> = records.into_iter().collect();
        for r in &records {
            check_key(&r.key)?;
            if r.vector.len() != dim {
                return Err(EmbeddingError::DimensionMismatch {
                    key: r.key.clone(),
                    expected: dim,
                    found: r.vector.len(),
                });
            }
            if let Some(index) = r.vector.iter().position(|x| !x.is_finite()) {
                return Err(EmbeddingError::NonFiniteComponent {
                    key: r.key.clone(),
                    index,
                });
            }
        }
        records.sort_by(|a, b| a.key.cmp(&b.key));
        if let Some(w) = records.windows(2).find(|w| w[0].key == w[1].key) {
            return Err(EmbeddingError::DuplicateKey(w[0].key.clone()));
        }
        let mut keys = Vec::with_capacity(records.len());
        let mut data = Vec::with_capacity(records.len() * dim);
        for r in records {
            keys.push(r.key);
            data.extend_from_slice(&r.vector);
        }
        Ok(Self { dim, keys, data })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.keys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keys.is_empty()
    }

    pub fn keys(&self) -> &[String] {
        &self.keys
    }

    pub fn get(&self, key: &str) -> Option<&[f32]> {
        let i = self.keys.binary_search_by(|k| k.as_str().cmp(key)).ok()?;
        Some(self.vector(i))
    }

    pub fn vector(&self, i: usize) -> &[f32] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    /// All vectors, row-major, in key order.
    pub fn as_flat(&self) -> &[f32] {
        &self.data
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &[f32])> {
        self.keys
            .iter()
            .map(String::as_str)
            .zip(self.data.chunks_exact(self.dim))
    }

    pub fn to_records(&self) -> Vec<EmbeddingRecord> {
        self.iter()
            .map(|(k, v)| EmbeddingRecord::new(k, v.to_vec()))
            .collect()
    }

    pub fn write<W: Write>(&self, magic: [u8; 6], mut sink: W) -> io::Result<usize> {
        let mut header = Vec::with_capacity(HEADER_LEN);
        header.extend_from_slice(&magic);
        header.extend_from_slice(&(self.dim as u32).to_le_bytes());
        header.extend_from_slice(&(self.keys.len() as u64).to_le_bytes());
        header.extend_from_slice(&0u32.to_le_bytes());
        sink.write_all(&header)?;
        let mut written = header.len();

        let mut buf = Vec::with_capacity(2 + 64 + 4 * self.dim);
        for (key, vector) in self.iter() {
            buf.clear();
            buf.extend_from_slice(&(key.len() as u16).to_le_bytes());
            buf.extend_from_slice(key.as_bytes());
            for x in vector {
                buf.extend_from_slice(&x.to_le_bytes());
            }
            sink.write_all(&buf)?;
            written += buf.len();
        }
        sink.flush()?;
        Ok(written)
    }

    pub fn to_bytes(&self, magic: [u8; 6]) -> Vec<u8> {
        let mut out = Vec::new();
        self.write(magic, &mut out).expect("writing to memory");
        out
    }

    /// Decodes a complete file image.
    pub fn from_bytes(bytes: &[u8], magic: [u8; 6]) -> Result<Self, EmbeddingError> {
        let mut cur = Cursor { bytes, pos: 0 };
        let found = cur.take(6)?;
        if found != magic {
            return Err(EmbeddingError::BadMagic {
                found: found.to_vec(),
            });
        }
        let dim = u32::from_le_bytes(cur.array()?) as usize;
        let count = u64::from_le_bytes(cur.array()?);
        let reserved = u32::from_le_bytes(cur.array()?);
        if dim == 0 {
            return Err(EmbeddingError::InvalidHeader("dimension 0".into()));
        }
        if reserved != 0 {
            return Err(EmbeddingError::InvalidHeader(format!(
                "reserved field is {reserved}"
            )));
        }
        // each record needs at least 2 + 4·dim bytes; bound before allocating
        let min_record = 2 + 4 * dim as u64;
        let remaining = (bytes.len() - cur.pos) as u64;
        if count.saturating_mul(min_record) > remaining {
            return Err(EmbeddingError::TruncatedFile { offset: bytes.len() });
        }
        let count = count as usize;

        let mut keys = Vec::with_capacity(count);
        let mut data = Vec::with_capacity(count * dim);
        for _ in 0..count {
            let key_len = u16::from_le_bytes(cur.array()?) as usize;
            let key = std::str::from_utf8(cur.take(key_len)?)
                .map_err(|e| EmbeddingError::InvalidKey(e.to_string()))?
                .to_owned();
            check_key(&key)?;
            let raw = cur.take(4 * dim)?;
            for (index, chunk) in raw.chunks_exact(4).enumerate() {
                let x = f32::from_le_bytes(chunk.try_into().expect("4-byte chunk"));
                if !x.is_finite() {
                    return Err(EmbeddingError::NonFiniteComponent { key, index });
                }
                data.push(x);
            }
            keys.push(key);
        }
        if cur.pos != bytes.len() {
            return Err(EmbeddingError::TrailingData(bytes.len() - cur.pos));
        }

        let sorted = keys.windows(2).all(|w| w[0] < w[1]);
        if sorted {
            return Ok(Self { dim, keys, data });
        }
        let records = keys
            .into_iter()
            .zip(data.chunks_exact(dim))
            .map(|(k, v)| EmbeddingRecord::new(k, v.to_vec()));
        Self::from_records(records, dim)
    }

    pub fn read<R: Read>(mut source: R, magic: [u8; 6]) -> Result<Self, EmbeddingError> {
        let mut bytes = Vec::new();
        source.read_to_end(&mut bytes)?;
        Self::from_bytes(&bytes, magic)
    }
}

fn check_key(key: &str) -> Result<(), EmbeddingError> {
    if key.is_empty() {
        return Err(EmbeddingError::InvalidKey("empty key".into()));
    }
    if key.len() > u16::MAX as usize {
        return Err(EmbeddingError::InvalidKey(format!(
            "key of {} bytes exceeds 65535",
            key.len()
        )));
    }
    Ok(())
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], EmbeddingError> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or(EmbeddingError::TruncatedFile {
                offset: self.bytes.len(),
            })?;
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn array<const N: usize>(&mut self) -> Result<[u8; N], EmbeddingError> {
        Ok(self.take(N)?.try_into().expect("exact length"))
    }
}

/// Validates, sorts and writes `records`; returns the byte count.
pub fn write_embeddings<W: Write>(
    records: impl IntoIterator<Item = EmbeddingRecord>,
    dim: usize,
    sink: W,
) -> Result<usize, EmbeddingError> {
    let store = EmbeddingStore::from_records(records, dim)?;
    Ok(store.write(EMBEDDING_MAGIC, sink)?)
}

pub fn open_embeddings<R: Read>(source: R) -> Result<EmbeddingStore, EmbeddingError> {
    EmbeddingStore::read(source, EMBEDDING_MAGIC)
}

pub fn read_store_file(path: &Path, magic: [u8; 6]) -> Result<EmbeddingStore, EmbeddingError> {
    EmbeddingStore::read(File::open(path)?, magic)
}

pub fn write_store_file(path: &Path, store: &EmbeddingStore, magic: [u8; 6]) -> io::Result<usize> {
    crate::fsutil::write_atomically(path, |f| store.write(magic, io::BufWriter::new(f)))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bytes_of(records: Vec<EmbeddingRecord>, dim: usize) -> Vec<u8> {
        let mut out = Vec::new();
        write_embeddings(records, dim, &mut out).unwrap();
        out
    }

    #[test]
    fn empty_store_is_header_only() {
        let bytes = bytes_of(vec![], 8);
        assert_eq!(bytes.len(), 22);
        assert_eq!(&bytes[..6], b"AFEMB1");
        assert_eq!(open_embeddings(&bytes[..]).unwrap().len(), 0);
    }

    #[test]
    fn single_record_round_trip() {
        let bytes = bytes_of(vec![EmbeddingRecord::new("a", vec![1.0, 0.0])], 2);
        assert_eq!(bytes.len(), 22 + 2 + 1 + 8);
        let store = open_embeddings(&bytes[..]).unwrap();
        assert_eq!(store.get("a"), Some(&[1.0f32, 0.0][..]));
        assert_eq!(store.get("missing"), None);
    }

    #[test]
    fn keys_written_in_order() {
        let bytes = bytes_of(
            vec![
                EmbeddingRecord::new("b", vec![2.0]),
                EmbeddingRecord::new("a", vec![1.0]),
            ],
            1,
        );
        let store = open_embeddings(&bytes[..]).unwrap();
        assert_eq!(store.keys(), ["a", "b"]);
        // first record starts right after the header
        assert_eq!(&bytes[22..25], &[1, 0, b'a']);
    }

    #[test]
    fn write_errors() {
        assert!(matches!(
            write_embeddings(vec![EmbeddingRecord::new("a", vec![1.0])], 2, io::sink()),
            Err(EmbeddingError::DimensionMismatch { .. })
        ));
        assert!(matches!(
            write_embeddings(
                vec![
                    EmbeddingRecord::new("a", vec![1.0]),
                    EmbeddingRecord::new("a", vec![2.0])
                ],
                1,
                io::sink()
            ),
            Err(EmbeddingError::DuplicateKey(k)) if k == "a"
        ));
        assert!(matches!(
            write_embeddings(vec![EmbeddingRecord::new("a", vec![f32::NAN])], 1, io::sink()),
            Err(EmbeddingError::NonFiniteComponent { index: 0, .. })
        ));
    }

    #[test]
    fn bad_magic() {
        let mut bytes = bytes_of(vec![], 2);
        bytes[..6].copy_from_slice(b"XXXXXX");
        assert!(matches!(
            open_embeddings(&bytes[..]),
            Err(EmbeddingError::BadMagic { .. })
        ));
        let probs = EmbeddingStore::from_records(vec![], 2)
            .unwrap()
            .to_bytes(PROBABILITY_MAGIC);
        assert!(matches!(
            open_embeddings(&probs[..]),
            Err(EmbeddingError::BadMagic { .. })
        ));
    }

    #[test]
    fn truncated_inside_last_record() {
        let bytes = bytes_of(
            vec![
                EmbeddingRecord::new("a", vec![1.0, 2.0, 3.0]),
                EmbeddingRecord::new("b", vec![4.0, 5.0, 6.0]),
            ],
            3,
        );
        // last record: 2 + 1 + 12 = 15 bytes; cut 5 bytes into its payload
        let cut = bytes.len() - 15 + 8;
        assert!(matches!(
            open_embeddings(&bytes[..cut]),
            Err(EmbeddingError::TruncatedFile { .. })
        ));
        assert!(matches!(
            open_embeddings(&bytes[..10]),
            Err(EmbeddingError::TruncatedFile { .. })
        ));
    }

    #[test]
    fn non_finite_rejected_at_open() {
        let mut bytes = bytes_of(vec![EmbeddingRecord::new("k", vec![1.0, 2.0])], 2);
        let n = bytes.len();
        bytes[n - 4..].copy_from_slice(&f32::INFINITY.to_le_bytes());
        match open_embeddings(&bytes[..]) {
            Err(EmbeddingError::NonFiniteComponent { key, index }) => {
                assert_eq!((key.as_str(), index), ("k", 1))
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn trailing_bytes_and_reserved_field() {
        let mut bytes = bytes_of(vec![], 2);
        bytes.push(0);
        assert!(matches!(
            open_embeddings(&bytes[..]),
            Err(EmbeddingError::TrailingData(1))
        ));
        let mut bytes = bytes_of(vec![], 2);
        bytes[18] = 1;
        assert!(matches!(
            open_embeddings(&bytes[..]),
            Err(EmbeddingError::InvalidHeader(_))
        ));
    }

    #[test]
    fn huge_count_does_not_allocate() {
        let mut bytes = bytes_of(vec![], 2);
        bytes[10..18].copy_from_slice(&u64::MAX.to_le_bytes());
        assert!(matches!(
            open_embeddings(&bytes[..]),
            Err(EmbeddingError::TruncatedFile { .. })
        ));
    }

    #[test]
    fn two_opens_agree_bitwise() {
        let bytes = bytes_of(vec![EmbeddingRecord::new("a", vec![0.1, -3.5e-20, 7.0])], 3);
        let s1 = open_embeddings(&bytes[..]).unwrap();
        let s2 = open_embeddings(&bytes[..]).unwrap();
        let bits = |s: &EmbeddingStore| s.get("a").unwrap().iter().map(|x| x.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&s1), bits(&s2));
    }
}
