use serde::{Deserialize, Serialize};

use crate::attention::ChannelAggregation;
use crate::dimred::{EmbeddingParams, Method};
use crate::ssm::ModelConfig;

pub const FORMAT_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest.json";

/// A tensor file relative to the artifact root, with its expected dims.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TensorRef {
    pub file: String,
    pub dims: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParameterRef {
    pub name: String,
    #[serde(flatten)]
    pub tensor: TensorRef,
}

/// Settings of the attention and reduction passes, echoed for reproducibility.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AnalysisSettings {
    pub aggregation: ChannelAggregation,
    pub perplexity: f64,
    pub tsne_iterations: usize,
    pub learning_rate: f64,
}

impl Default for AnalysisSettings {
    fn default() -> Self {
        let r = crate::dimred::ReduceParams::default();
        Self {
            aggregation: ChannelAggregation::default(),
            perplexity: r.perplexity,
            tsne_iterations: r.iterations,
            learning_rate: r.learning_rate,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingRef {
    pub method: Method,
    /// `k × 2` points.
    pub points: TensorRef,
    /// Block index (Mode 1) or patch index (Mode 2) per point.
    pub labels: Vec<usize>,
    pub params: EmbeddingParams,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockEntry {
    pub block: usize,
    /// Averaged attention, `patch_count × patch_count`.
    pub attention: TensorRef,
    /// Mode 2: one point per patch.
    pub embeddings: Vec<EmbeddingRef>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageEntry {
    pub stage: usize,
    pub rows: usize,
    pub cols: usize,
    pub patch_count: usize,
    pub block_count: usize,
    /// Flattened per-image attention, `(blocks · n_images) × patch_count²`.
    pub stack: TensorRef,
    /// `(image, block)` of every stack row.
    pub stack_labels: Vec<[usize; 2]>,
    /// Mode 1: one point per stack row, labelled by block.
    pub embeddings: Vec<EmbeddingRef>,
    pub blocks: Vec<BlockEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArtifactManifest {
    pub format_version: u32,
    pub config: ModelConfig,
    pub analysis: AnalysisSettings,
    pub n_images: usize,
    pub image_source: String,
    pub seed: u64,
    /// RFC 3339 creation time.
    pub created: String,
    pub parameters: Vec<ParameterRef>,
    pub stages: Vec<StageEntry>,
    /// Human-readable remarks, e.g. embeddings skipped for lack of points.
    #[serde(default)]
    pub notes: Vec<String>,
}

impl ArtifactManifest {
    /// Every tensor the manifest references, in a fixed order.
    pub fn tensor_refs(&self) -> Vec<&TensorRef> {
        let mut out: Vec<&TensorRef> = self.parameters.iter().map(|p| &p.tensor).collect();
        for stage in &self.stages {
            out.push(&stage.stack);
            out.extend(stage.embeddings.iter().map(|e| &e.points));
            for block in &stage.blocks {
                out.push(&block.attention);
                out.extend(block.embeddings.iter().map(|e| &e.points));
            }
        }
        out
    }

    pub fn stage(&self, stage: usize) -> Option<&StageEntry> {
        self.stages.get(stage)
    }
}

impl StageEntry {
    pub fn embedding(&self, method: Method) -> Option<&EmbeddingRef> {
        self.embeddings.iter().find(|e| e.method == method)
    }
}

impl BlockEntry {
    pub fn embedding(&self, method: Method) -> Option<&EmbeddingRef> {
        self.embeddings.iter().find(|e| e.method == method)
    }
}
