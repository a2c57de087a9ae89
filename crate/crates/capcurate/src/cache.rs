//! On-disk response cache for inference requests.
//!
//! Entries are keyed by the SHA-256 of `operation` and the canonical JSON of
//! the request (object keys sorted), and stored as
//! `<dir>/<first two hex digits>/<key>.json`.

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use serde_json::Value;
use sha2::{Digest, Sha256};

#[derive(Debug)]
pub struct ResponseCache {
    dir: PathBuf,
    write_lock: Mutex<()>,
}

/// Hex SHA-256 over `operation`, a newline, and the canonical request JSON.
pub fn cache_key(operation: &str, request: &Value) -> String {
    // serde_json's default map is ordered, so this serialization is canonical
    let canonical = serde_json::to_string(request).expect("JSON value serializes");
    let mut hasher = Sha256::new();
    hasher.update(operation.as_bytes());
    hasher.update(b"\n");
    hasher.update(canonical.as_bytes());
    hex::encode(hasher.finalize())
}

impl ResponseCache {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        Self {
            dir: dir.into(),
            write_lock: Mutex::new(()),
        }
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn path_for(&self, key: &str) -> PathBuf {
        self.dir.join(&key[..2]).join(format!("{key}.json"))
    }

    /// A missing or unreadable entry is a miss.
    pub fn get(&self, key: &str) -> Option<Value> {
        let bytes = fs::read(self.path_for(key)).ok()?;
        match serde_json::from_slice(&bytes) {
            Ok(v) => Some(v),
            Err(e) => {
                log::warn!("ignoring corrupt cache entry {key}: {e}");
                None
            }
        }
    }

    pub fn put(&self, key: &str, value: &Value) -> io::Result<()> {
        let path = self.path_for(key);
        let _guard = self.write_lock.lock().unwrap_or_else(|e| e.into_inner());
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent)?;
        }
        let bytes = serde_json::to_vec(value).expect("JSON value serializes");
        crate::fsutil::write_atomically(&path, |f| f.write_all(&bytes))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn key_ignores_object_key_order() {
        let a: Value = serde_json::from_str(r#"{"b":1,"a":[1,2]}"#).unwrap();
        let b: Value = serde_json::from_str(r#"{"a":[1,2],"b":1}"#).unwrap();
        assert_eq!(cache_key("op", &a), cache_key("op", &b));
        assert_ne!(cache_key("op", &a), cache_key("other", &a));
        assert_eq!(cache_key("op", &a).len(), 64);
    }

    #[test]
    fn layout_and_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let cache = ResponseCache::new(dir.path());
        let key = cache_key("embed_text", &json!({"text": "a"}));
        assert!(cache.get(&key).is_none());
        cache.put(&key, &json!({"embedding": [1.0, 2.0]})).unwrap();
        let path = dir.path().join(&key[..2]).join(format!("{key}.json"));
        assert!(path.exists());
        assert_eq!(cache.get(&key).unwrap(), json!({"embedding": [1.0, 2.0]}));
    }

    #[test]
    fn corrupt_entry_is_a_miss() {
        let dir = tempfile::tempdir().unwrap();
        let cache = ResponseCache::new(dir.path());
        let key = cache_key("x", &json!(null));
        let path = cache.path_for(&key);
        fs::create_dir_all(path.parent().unwrap()).unwrap();
        fs::write(&path, b"{not json").unwrap();
        assert!(cache.get(&key).is_none());
    }
}
