//! Allocation-only core of the caption curation toolkit.
//!
//! Everything here is pure computation over in-memory data: the manifest
//! data model and its canonical ordering, similarity scoring with Top-k and
//! threshold filtering, dataset statistics, manifest mixing/augmentation, and
//! the evaluation metrics (Fréchet distance, Inception Score, CLAP score).
//! File formats, the inference client and the CLI live in the `capcurate`
//! crate.
#![no_std]
// `!(a < b)` is used on purpose so that NaN fails the check.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;

mod error;
pub mod linalg;
pub mod manifest;
pub mod metrics;
pub mod mixer;
pub mod similarity;

pub use error::{Error, Result};
pub use manifest::{
    quantize_similarity, AudioClip, CaptionCandidate, DatasetManifest, Entry, Origin,
    ScoredCaption, Violation,
};
pub use metrics::{
    clap_score, estimate_gaussian, frechet_distance, inception_score, GaussianStats,
    MetricConfig, MetricReport, ProbTable, DEFAULT_FD_EPS, DEFAULT_IS_SPLITS,
};
pub use mixer::{augment, merge_manifests, sampling_weights, DedupOn};
pub use similarity::{
    apply_threshold, cosine, dataset_stats, score_candidates, select_top_k, FilterConfig,
    StatsReport,
};
