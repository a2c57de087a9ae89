//! JSON documents with a fixed key order: stats reports, metric reports and
//! the sweep report.

use std::collections::BTreeMap;

use capcurate_core::metrics::{MetricConfig, MetricReport};
use capcurate_core::StatsReport;
use serde::ser::SerializeMap;
use serde::{Serialize, Serializer};

#[derive(Serialize)]
struct StatsJson<'a> {
    tau_grid: &'a [f64],
    top_k: usize,
    captions_at_tau: &'a [u64],
    audios_at_tau: &'a [u64],
    label_histogram: &'a BTreeMap<String, u64>,
    similarity_deciles: &'a [f64],
}

pub fn stats_to_json(r: &StatsReport) -> String {
    to_pretty(&StatsJson {
        tau_grid: &r.tau_grid,
        top_k: r.top_k,
        captions_at_tau: &r.captions_at_tau,
        audios_at_tau: &r.audios_at_tau,
        label_histogram: &r.label_histogram,
        similarity_deciles: &r.similarity_deciles,
    })
}

#[derive(Serialize)]
struct MetricConfigJson {
    fd_eps: f64,
    is_splits: usize,
    seed: u64,
    cov_divisor: &'static str,
}

impl From<&MetricConfig> for MetricConfigJson {
    fn from(c: &MetricConfig) -> Self {
        Self {
            fd_eps: c.fd_eps,
            is_splits: c.is_splits,
            seed: c.seed,
            cov_divisor: MetricConfig::COV_DIVISOR,
        }
    }
}

#[derive(Serialize)]
struct MetricJson {
    fd: Option<f64>,
    fad: Option<f64>,
    is_mean: Option<f64>,
    is_std: Option<f64>,
    clap: Option<f64>,
    config: MetricConfigJson,
}

impl From<&MetricReport> for MetricJson {
    fn from(r: &MetricReport) -> Self {
        Self {
            fd: r.fd,
            fad: r.fad,
            is_mean: r.is_mean,
            is_std: r.is_std,
            clap: r.clap,
            config: (&r.config).into(),
        }
    }
}

pub fn metrics_to_json(r: &MetricReport) -> String {
    to_pretty(&MetricJson::from(r))
}

/// Per-threshold counts plus optional per-threshold metrics, all in grid
/// order.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepReport {
    pub grid: Vec<f64>,
    pub captions: Vec<u64>,
    pub audios: Vec<u64>,
    pub metrics: Option<Vec<(f64, MetricReport)>>,
}

#[derive(Serialize)]
struct SweepJson<'a> {
    grid: &'a [f64],
    counts: Counts<'a>,
    metrics: Option<MetricsByTau<'a>>,
}

#[derive(Serialize)]
struct Counts<'a> {
    captions: &'a [u64],
    audios: &'a [u64],
}

struct MetricsByTau<'a>(&'a [(f64, MetricReport)]);

impl Serialize for MetricsByTau<'_> {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let mut map = s.serialize_map(Some(self.0.len()))?;
        for (tau, report) in self.0 {
            map.serialize_entry(&tau_label(*tau), &MetricJson::from(report))?;
        }
        map.end()
    }
}

pub fn sweep_to_json(r: &SweepReport) -> String {
    to_pretty(&SweepJson {
        grid: &r.grid,
        counts: Counts {
            captions: &r.captions,
            audios: &r.audios,
        },
        metrics: r.metrics.as_deref().map(MetricsByTau),
    })
}

/// Shortest round-tripping decimal form of a threshold, as used in file
/// names and report keys.
pub fn tau_label(tau: f64) -> String {
    format!("{tau}")
}

fn to_pretty<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("report serializes");
    s.push('\n');
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sweep_key_order() {
        let r = SweepReport {
            grid: vec![0.35, 0.4],
            captions: vec![5, 2],
            audios: vec![3, 1],
            metrics: None,
        };
        let v: serde_json::Value = serde_json::from_str(&sweep_to_json(&r)).unwrap();
        assert_eq!(v["counts"]["captions"], serde_json::json!([5, 2]));
        assert!(v["metrics"].is_null());
        let text = sweep_to_json(&r);
        let (g, c, m) = (
            text.find("\"grid\"").unwrap(),
            text.find("\"counts\"").unwrap(),
            text.find("\"metrics\"").unwrap(),
        );
        assert!(g < c && c < m);
    }

    #[test]
    fn metric_report_echoes_config() {
        let r = MetricReport {
            fd: Some(0.0),
            ..MetricReport::default()
        };
        let v: serde_json::Value = serde_json::from_str(&metrics_to_json(&r)).unwrap();
        assert_eq!(v["config"]["is_splits"], 10);
        assert_eq!(v["config"]["cov_divisor"], "n-1");
        assert!(v["fad"].is_null());
    }

    #[test]
    fn metrics_keyed_by_tau_in_grid_order() {
        let r = SweepReport {
            grid: vec![0.5, 0.45],
            captions: vec![0, 0],
            audios: vec![0, 0],
            metrics: Some(vec![(0.5, MetricReport::default()), (0.45, MetricReport::default())]),
        };
        let text = sweep_to_json(&r);
        assert!(text.find("\"0.5\"").unwrap() < text.find("\"0.45\"").unwrap());
    }
}
