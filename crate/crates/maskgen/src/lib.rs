//! Library side of the `maskgen` command: configuration, the stage cache,
//! dataset files, reports and the end-to-end pipeline.

pub mod annotate_io;
pub mod cache;
pub mod commands;
pub mod config;
pub mod data;
pub mod error;
pub mod manifest;
pub mod pipeline;
pub mod report;
pub mod seeds;

pub use config::Config;
pub use error::{HarnessError, Result};
pub use pipeline::{Bundle, E2eOutcome, Pipeline};
pub use report::{EvalReport, MetricRow};
