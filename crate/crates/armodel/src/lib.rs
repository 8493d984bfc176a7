//! A small LLaMA-style decoder that reads `[text] <BOI> [image] <BOM>` and
//! emits mask tokens, with a hand-written backward pass, AdamW training,
//! five decoding strategies and attention-map export.

pub mod attention;
pub mod checkpoint;
pub mod config;
pub mod decode;
pub mod gradcheck;
pub mod loss;
pub mod model;
pub mod params;
pub mod scalar;
pub mod sequence;
pub mod train;

pub use attention::{attention_map, column_alignment_probe, AttentionMap, ProbeResult};
pub use checkpoint::Checkpoint;
pub use config::{ModelConfig, Preset, TrainConfig};
pub use decode::{generate, generate_many, Strategy};
pub use loss::{cross_entropy, mask_loss};
pub use model::{ForwardOptions, Model};
pub use sequence::{build_sequence, Sequence, SequenceLayout};
pub use train::{train, AdamState, TrainReport};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("invalid input: {0}")]
    Input(String),
    #[error("non-finite activations after layer {layer}")]
    NonFinite { layer: usize },
    #[error("training diverged at epoch {epoch}, step {step}")]
    Diverged { epoch: usize, step: usize },
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
