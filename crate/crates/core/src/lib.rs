//! Mask tokenization, segmentation metrics, synthetic data and annotation
//! tooling for instruction-conditioned mask generation.

pub mod annotate;
pub mod codec;
pub mod dataset;
pub mod mask;
pub mod metrics;
pub mod vocab;
