//! Caption curation pipeline around `capcurate-core`: the manifest and
//! embedding file formats, the inference-service client with its response
//! cache, pipeline stages over files, and the `capcurate` CLI.

pub mod cache;
pub mod cli;
pub mod client;
pub mod config;
pub mod embeddings;
mod error;
pub mod fsutil;
pub mod manifest_io;
pub mod pipeline;
pub mod report;

pub use capcurate_core as core;
pub use error::{exit, Error, Result};
