//! Global settings: defaults, optional TOML config file, environment, flags —
//! later sources override earlier ones.

use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::error::{Error, Result};

pub const CACHE_DIR_ENV: &str = "CAPCURATE_CACHE_DIR";
/// Bearer token for the inference service, read from the environment only so
/// it never lands in config files or shell history.
pub const TOKEN_ENV: &str = "CAPCURATE_API_TOKEN";

/// Keys accepted in the config file. All optional.
#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub cache_dir: Option<PathBuf>,
    pub workers: Option<usize>,
    pub log_level: Option<String>,
    pub seed: Option<u64>,
    pub service_url: Option<String>,
    pub timeout_s: Option<f64>,
    pub max_retries: Option<u32>,
    pub batch_size: Option<usize>,
    pub max_in_flight: Option<usize>,
}

impl ConfigFile {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        toml::from_str(&text).map_err(|e| Error::Usage(format!("{}: {e}", path.display())))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GlobalConfig {
    pub cache_dir: Option<PathBuf>,
    pub workers: usize,
    pub log_level: log::LevelFilter,
    pub seed: u64,
    pub service_url: Option<String>,
    pub timeout_s: Option<f64>,
    pub max_retries: Option<u32>,
    pub batch_size: Option<usize>,
    pub max_in_flight: Option<usize>,
}

pub fn default_workers() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

impl Default for GlobalConfig {
    fn default() -> Self {
        Self {
            cache_dir: None,
            workers: default_workers(),
            log_level: log::LevelFilter::Info,
            seed: 0,
            service_url: None,
            timeout_s: None,
            max_retries: None,
            batch_size: None,
            max_in_flight: None,
        }
    }
}

pub fn parse_log_level(s: &str) -> Result<log::LevelFilter> {
    s.parse()
        .map_err(|_| Error::Usage(format!("unknown log level {s:?}")))
}

impl GlobalConfig {
    /// Defaults, then `file`, then the cache-dir environment variable.
    /// Command-line flags are applied by the caller afterwards.
    pub fn resolve(file: Option<ConfigFile>, env_cache_dir: Option<PathBuf>) -> Result<Self> {
        let mut cfg = Self::default();
        if let Some(f) = file {
            cfg.cache_dir = f.cache_dir.or(cfg.cache_dir);
            cfg.workers = f.workers.unwrap_or(cfg.workers);
            if let Some(level) = f.log_level {
                cfg.log_level = parse_log_level(&level)?;
            }
            cfg.seed = f.seed.unwrap_or(cfg.seed);
            cfg.service_url = f.service_url;
            cfg.timeout_s = f.timeout_s;
            cfg.max_retries = f.max_retries;
            cfg.batch_size = f.batch_size;
            cfg.max_in_flight = f.max_in_flight;
        }
        if env_cache_dir.is_some() {
            cfg.cache_dir = env_cache_dir;
        }
        if cfg.workers == 0 {
            return Err(Error::Usage("workers must be at least 1".into()));
        }
        Ok(cfg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn file_then_env() {
        let file: ConfigFile = toml::from_str(
            "cache_dir = \"/tmp/a\"\nworkers = 3\nlog_level = \"debug\"\nseed = 9\n",
        )
        .unwrap();
        let cfg = GlobalConfig::resolve(Some(file.clone()), None).unwrap();
        assert_eq!(cfg.workers, 3);
        assert_eq!(cfg.seed, 9);
        assert_eq!(cfg.log_level, log::LevelFilter::Debug);
        assert_eq!(cfg.cache_dir.as_deref(), Some(Path::new("/tmp/a")));
        let cfg = GlobalConfig::resolve(Some(file), Some("/tmp/b".into())).unwrap();
        assert_eq!(cfg.cache_dir.as_deref(), Some(Path::new("/tmp/b")));
    }

    #[test]
    fn rejects_unknown_keys_and_zero_workers() {
        assert!(toml::from_str::<ConfigFile>("colour = 1").is_err());
        let file = ConfigFile {
            workers: Some(0),
            ..ConfigFile::default()
        };
        assert!(GlobalConfig::resolve(Some(file), None).is_err());
    }
}
