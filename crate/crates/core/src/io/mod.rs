//! File formats and data plumbing: configuration, long-format CSV, the
//! model file, DOT export and the synthetic data generator.

pub mod config;
pub mod dot;
pub mod ingest;
pub mod model_file;
pub mod simulate;
