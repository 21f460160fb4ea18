//! File formats, configuration, run manifests and the command line for the
//! `renovor_core` algorithms.
//!
//! - [`metaimage`]: `.mhd`/`.raw` volumes
//! - [`treejson`]: vessel trees as JSON
//! - [`stats`]: territory statistics as JSON and CSV
//! - [`config`]: JSON run configuration
//! - [`pipeline`]: the processing stages behind the subcommands
//! - [`output`]: output sets and `run-manifest.json`
//! - [`cli`]: argument parsing and exit codes

pub mod cli;
pub mod config;
pub mod metaimage;
pub mod output;
pub mod pipeline;
pub mod stats;
pub mod treejson;
