use std::fs;
use std::path::{Path, PathBuf};

use super::manifest::{ArtifactManifest, EmbeddingRef, TensorRef, MANIFEST_FILE};
use super::tensor::{self, Tensor};
use super::{io_err, ArtifactError};
use crate::dimred::Method;
use crate::orders::GridShape;
use crate::ssm::Model;

#[derive(Debug, Clone)]
pub struct LoadedEmbedding {
    pub method: Method,
    pub points: Tensor,
}

#[derive(Debug, Clone)]
pub struct LoadedBlock {
    pub attention: Tensor,
    pub embeddings: Vec<LoadedEmbedding>,
}

#[derive(Debug, Clone)]
pub struct LoadedStage {
    pub shape: GridShape,
    pub embeddings: Vec<LoadedEmbedding>,
    pub blocks: Vec<LoadedBlock>,
}

impl LoadedStage {
    pub fn embedding(&self, method: Method) -> Option<&Tensor> {
        find(&self.embeddings, method)
    }
}

impl LoadedBlock {
    pub fn embedding(&self, method: Method) -> Option<&Tensor> {
        find(&self.embeddings, method)
    }
}

fn find(list: &[LoadedEmbedding], method: Method) -> Option<&Tensor> {
    list.iter().find(|e| e.method == method).map(|e| &e.points)
}

/// An artifact directory held in memory for serving.
///
/// Loading reads the manifest, the averaged matrices and all embeddings, and
/// checks every referenced file (stacks and parameters included) against the
/// dims the manifest records.
#[derive(Debug, Clone)]
pub struct Artifact {
    root: PathBuf,
    manifest: ArtifactManifest,
    manifest_json: serde_json::Value,
    stages: Vec<LoadedStage>,
}

fn read_manifest(root: &Path) -> Result<(ArtifactManifest, serde_json::Value), ArtifactError> {
    let path = root.join(MANIFEST_FILE);
    let bytes = fs::read(&path).map_err(io_err(&path))?;
    let json: serde_json::Value = serde_json::from_slice(&bytes).map_err(|source| ArtifactError::Manifest {
        path: path.clone(),
        source,
    })?;
    let manifest = serde_json::from_value(json.clone()).map_err(|source| ArtifactError::Manifest { path, source })?;
    Ok((manifest, json))
}

fn load_ref(root: &Path, r: &TensorRef) -> Result<Tensor, ArtifactError> {
    let path = root.join(&r.file);
    let t = tensor::read_tensor(&path).map_err(|source| ArtifactError::Tensor {
        path: path.clone(),
        source,
    })?;
    if t.dims() != r.dims.as_slice() {
        return Err(ArtifactError::Mismatch {
            path,
            reason: format!("manifest dims {:?}, file dims {:?}", r.dims, t.dims()),
        });
    }
    Ok(t)
}

/// Checks the header and length of a referenced file without keeping it.
fn check_ref(root: &Path, r: &TensorRef) -> Result<(), ArtifactError> {
    load_ref(root, r).map(drop)
}

fn load_embedding(root: &Path, e: &EmbeddingRef) -> Result<LoadedEmbedding, ArtifactError> {
    let points = load_ref(root, &e.points)?;
    let path = root.join(&e.points.file);
    if points.dims().len() != 2 || points.dims()[1] != 2 || points.dims()[0] != e.labels.len() {
        return Err(ArtifactError::Mismatch {
            path,
            reason: format!("{} labels for points with dims {:?}", e.labels.len(), points.dims()),
        });
    }
    Ok(LoadedEmbedding {
        method: e.method,
        points,
    })
}

impl Artifact {
    pub fn load(root: impl AsRef<Path>) -> Result<Self, ArtifactError> {
        let root = root.as_ref().to_path_buf();
        let (manifest, manifest_json) = read_manifest(&root)?;
        for p in &manifest.parameters {
            check_ref(&root, &p.tensor)?;
        }
        let mut stages = Vec::with_capacity(manifest.stages.len());
        for (s, entry) in manifest.stages.iter().enumerate() {
            let mismatch = |reason: String| ArtifactError::Mismatch {
                path: root.join(MANIFEST_FILE),
                reason: format!("stage {s}: {reason}"),
            };
            if entry.stage != s {
                return Err(mismatch(format!("listed as stage {}", entry.stage)));
            }
            let shape = GridShape::new(entry.rows, entry.cols).map_err(|e| mismatch(e.to_string()))?;
            let p = shape.patch_count();
            if entry.patch_count != p || entry.block_count != entry.blocks.len() {
                return Err(mismatch("patch or block count disagrees with grid".into()));
            }
            let stack_rows = entry.block_count * manifest.n_images;
            if entry.stack.dims != [stack_rows, p * p] || entry.stack_labels.len() != stack_rows {
                return Err(mismatch(format!(
                    "stack dims {:?} with {} labels, expected [{stack_rows}, {}]",
                    entry.stack.dims,
                    entry.stack_labels.len(),
                    p * p
                )));
            }
            check_ref(&root, &entry.stack)?;
            let embeddings = entry
                .embeddings
                .iter()
                .map(|e| load_embedding(&root, e))
                .collect::<Result<Vec<_>, _>>()?;
            if entry.embeddings.iter().any(|e| e.labels.len() != stack_rows) {
                return Err(mismatch("Mode-1 embedding size differs from blocks x images".into()));
            }
            let mut blocks = Vec::with_capacity(entry.blocks.len());
            for (b, block) in entry.blocks.iter().enumerate() {
                if block.block != b || block.attention.dims != [p, p] {
                    return Err(mismatch(format!("block {b} entry malformed")));
                }
                let attention = load_ref(&root, &block.attention)?;
                let embeddings = block
                    .embeddings
                    .iter()
                    .map(|e| load_embedding(&root, e))
                    .collect::<Result<Vec<_>, _>>()?;
                if block.embeddings.iter().any(|e| e.labels.len() != p) {
                    return Err(mismatch(format!("block {b} Mode-2 embedding size differs from patch count")));
                }
                blocks.push(LoadedBlock { attention, embeddings });
            }
            stages.push(LoadedStage {
                shape,
                embeddings,
                blocks,
            });
        }
        Ok(Self {
            root,
            manifest,
            manifest_json,
            stages,
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn manifest(&self) -> &ArtifactManifest {
        &self.manifest
    }

    /// The manifest exactly as parsed from disk.
    pub fn manifest_json(&self) -> &serde_json::Value {
        &self.manifest_json
    }

    pub fn stages(&self) -> &[LoadedStage] {
        &self.stages
    }

    pub fn stage(&self, stage: usize) -> Option<&LoadedStage> {
        self.stages.get(stage)
    }
}

/// Rebuilds the model whose parameters an artifact stores.
pub fn load_model(root: impl AsRef<Path>) -> Result<Model, ArtifactError> {
    let root = root.as_ref();
    let (manifest, _) = read_manifest(root)?;
    let mut failure = None;
    let model = Model::from_named_tensors(manifest.config.clone(), |name, dims| {
        let p = manifest.parameters.iter().find(|p| p.name == name)?;
        if p.tensor.dims != dims {
            failure = Some(ArtifactError::Mismatch {
                path: root.join(&p.tensor.file),
                reason: format!("parameter {name} has dims {:?}, model expects {dims:?}", p.tensor.dims),
            });
            return None;
        }
        match load_ref(root, &p.tensor) {
            Ok(t) => Some(t.to_f64()),
            Err(e) => {
                failure = Some(e);
                None
            }
        }
    });
    match (model, failure) {
        (_, Some(e)) => Err(e),
        (m, None) => Ok(m?),
    }
}
