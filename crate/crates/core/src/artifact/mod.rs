//! On-disk artifact: a JSON manifest plus binary tensor files.
//!
//! ```text
//! <root>/manifest.json
//! <root>/model/<parameter>.bin
//! <root>/stage<s>/stack.bin
//! <root>/stage<s>/mode1_<method>.bin
//! <root>/stage<s>/block<b>/attention.bin
//! <root>/stage<s>/block<b>/mode2_<method>.bin
//! ```

mod extract;
mod manifest;
mod store;
pub mod tensor;
mod validate;

use std::io;
use std::path::PathBuf;

use thiserror::Error;

use crate::attention::AttentionError;
use crate::dimred::DimRedError;
use crate::images::ImageError;
use crate::ssm::ModelError;

pub use extract::{extract, ExtractConfig};
pub use manifest::{
    AnalysisSettings, ArtifactManifest, BlockEntry, EmbeddingRef, ParameterRef, StageEntry, TensorRef,
    FORMAT_VERSION, MANIFEST_FILE,
};
pub use store::{load_model, Artifact, LoadedBlock, LoadedEmbedding, LoadedStage};
pub use tensor::{read_tensor, write_tensor, Tensor, TensorError};
pub use validate::{validate, Finding, FindingKind, ValidationReport};

#[derive(Debug, Error)]
pub enum ArtifactError {
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: io::Error },
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("{}: {source}", path.display())]
    Tensor { path: PathBuf, source: TensorError },
    #[error("{}: {source}", path.display())]
    Manifest { path: PathBuf, source: serde_json::Error },
    #[error("{}: {reason}", path.display())]
    Mismatch { path: PathBuf, reason: String },
    #[error("{artifact}: {source}")]
    Reduction { artifact: String, source: DimRedError },
    #[error("images: {0}")]
    Images(#[from] ImageError),
    #[error(transparent)]
    Model(ModelError),
    #[error(transparent)]
    Attention(#[from] AttentionError),
}

impl From<ModelError> for ArtifactError {
    fn from(e: ModelError) -> Self {
        match e {
            ModelError::InvalidConfig(msg) => ArtifactError::InvalidConfig(msg),
            other => ArtifactError::Model(other),
        }
    }
}

pub(crate) fn io_err(path: impl Into<PathBuf>) -> impl FnOnce(io::Error) -> ArtifactError {
    let path = path.into();
    move |source| ArtifactError::Io { path, source }
}
