use std::io;

use maskgen_armodel::ModelError;
use maskgen_core::annotate::AnnotateError;
use maskgen_core::codec::CodecError;
use maskgen_core::dataset::DatasetError;
use maskgen_core::mask::ImageError;
use maskgen_core::metrics::MetricError;
use thiserror::Error;

/// Process exit code for bad configuration or malformed inputs.
pub const EXIT_VALIDATION: i32 = 2;
/// Process exit code for failures while running a valid request.
pub const EXIT_RUNTIME: i32 = 3;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("invalid input: {0}")]
    Input(String),
    #[error("stage `{stage}` failed (manifest {manifest}): {source}")]
    Stage {
        stage: String,
        manifest: String,
        #[source]
        source: Box<HarnessError>,
    },
    #[error("cache: {0}")]
    Cache(String),
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Toml(#[from] toml::de::Error),
    #[error(transparent)]
    Image(#[from] ImageError),
    #[error(transparent)]
    Codec(#[from] CodecError),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error(transparent)]
    Annotate(#[from] AnnotateError),
}

impl HarnessError {
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Config(_)
            | HarnessError::Input(_)
            | HarnessError::Toml(_)
            | HarnessError::Json(_)
            | HarnessError::Image(_)
            | HarnessError::Dataset(_)
            | HarnessError::Codec(_)
            | HarnessError::Metric(_)
            | HarnessError::Annotate(_) => EXIT_VALIDATION,
            HarnessError::Model(ModelError::Config(_) | ModelError::Input(_) | ModelError::Checkpoint(_)) => {
                EXIT_VALIDATION
            }
            HarnessError::Stage { source, .. } => source.exit_code(),
            _ => EXIT_RUNTIME,
        }
    }
}

pub type Result<T, E = HarnessError> = std::result::Result<T, E>;
