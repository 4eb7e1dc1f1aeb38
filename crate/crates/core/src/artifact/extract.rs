use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::manifest::{
    AnalysisSettings, ArtifactManifest, BlockEntry, EmbeddingRef, ParameterRef, StageEntry, TensorRef,
    FORMAT_VERSION, MANIFEST_FILE,
};
use super::tensor::Tensor;
use super::{io_err, ArtifactError};
use crate::attention::analyze_all_stages;
use crate::dimred::{reduce, DimRedError, Method, ReduceParams};
use crate::images::ImageSource;
use crate::matrix::Matrix;
use crate::ssm::{init_model, ModelConfig};

/// Everything `extract` needs besides the image source: model
/// hyperparameters at the top level plus an optional `[analysis]` table.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ExtractConfig {
    #[serde(flatten)]
    pub model: ModelConfig,
    #[serde(default)]
    pub analysis: AnalysisSettings,
}

struct Writer<'a> {
    root: &'a Path,
}

impl Writer<'_> {
    fn tensor(&self, rel: &str, tensor: &Tensor) -> Result<TensorRef, ArtifactError> {
        let path = self.root.join(rel);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).map_err(io_err(parent))?;
        }
        fs::write(&path, tensor.encode()).map_err(io_err(&path))?;
        Ok(TensorRef {
            file: rel.to_string(),
            dims: tensor.dims().to_vec(),
        })
    }

    fn matrix(&self, rel: &str, m: &Matrix) -> Result<TensorRef, ArtifactError> {
        let t = Tensor::from_f64(vec![m.rows(), m.cols()], m.as_slice()).expect("matrix dims");
        self.tensor(rel, &t)
    }
}

/// Runs the full analysis and writes an artifact directory under `out`.
///
/// `seed` overrides `config.model.seed` and also seeds synthetic images and
/// t-SNE. Tensor files are byte-identical across reruns with the same inputs;
/// only the manifest's `created` timestamp differs. Embeddings that need more
/// points than available are skipped and noted in the manifest.
pub fn extract(
    config: &ExtractConfig,
    source: &ImageSource,
    out: &Path,
    seed: u64,
) -> Result<ArtifactManifest, ArtifactError> {
    let mut model_config = config.model.clone();
    model_config.seed = seed;
    model_config.validate()?;
    let settings = config.analysis.clone();
    if !(settings.perplexity.is_finite() && settings.perplexity >= 1.0) {
        return Err(ArtifactError::InvalidConfig(format!(
            "perplexity must be at least 1, got {}",
            settings.perplexity
        )));
    }
    if !(settings.learning_rate.is_finite() && settings.learning_rate > 0.0) {
        return Err(ArtifactError::InvalidConfig(format!(
            "learning_rate must be positive, got {}",
            settings.learning_rate
        )));
    }

    fs::create_dir_all(out).map_err(io_err(out))?;
    let images = source.load(model_config.image_size, seed)?;
    let model = init_model(&model_config)?;
    let writer = Writer { root: out };

    let mut parameters = Vec::new();
    for (name, dims, data) in model.named_tensors() {
        let t = Tensor::from_f64(dims, &data).expect("parameter dims");
        parameters.push(ParameterRef {
            tensor: writer.tensor(&format!("model/{name}.bin"), &t)?,
            name,
        });
    }

    let reduce_params = ReduceParams {
        perplexity: settings.perplexity,
        iterations: settings.tsne_iterations,
        learning_rate: settings.learning_rate,
        seed,
    };
    let mut notes = Vec::new();
    let mut embed = |rel: String, data: &Matrix, labels: Vec<usize>| -> Result<Vec<EmbeddingRef>, ArtifactError> {
        let mut refs = Vec::new();
        for method in Method::SUPPORTED {
            let path = format!("{rel}_{method}.bin");
            match reduce(data, labels.clone(), method, &reduce_params) {
                Ok(set) => refs.push(EmbeddingRef {
                    method,
                    points: writer.matrix(&path, &set.points)?,
                    labels: set.labels,
                    params: set.params,
                }),
                Err(e @ DimRedError::TooFewPoints { .. }) => notes.push(format!("{path} skipped: {e}")),
                Err(source) => return Err(ArtifactError::Reduction { artifact: path, source }),
            }
        }
        Ok(refs)
    };

    let analyses = analyze_all_stages(&model, &images, settings.aggregation)?;
    let mut stages = Vec::with_capacity(analyses.len());
    for analysis in &analyses {
        let s = analysis.stack.stage;
        let shape = analysis.stack.shape;
        let stack = writer.matrix(&format!("stage{s}/stack.bin"), &analysis.stack.entries)?;
        let block_labels = analysis.stack.labels.iter().map(|&(_, b)| b).collect();
        let embeddings = embed(format!("stage{s}/mode1"), &analysis.stack.entries, block_labels)?;

        let mut blocks = Vec::with_capacity(analysis.averages.len());
        for avg in &analysis.averages {
            let b = avg.block;
            let attention = writer.matrix(&format!("stage{s}/block{b}/attention.bin"), &avg.matrix)?;
            let patches = (0..shape.patch_count()).collect();
            let embeddings = embed(format!("stage{s}/block{b}/mode2"), &avg.matrix, patches)?;
            blocks.push(BlockEntry {
                block: b,
                attention,
                embeddings,
            });
        }
        stages.push(StageEntry {
            stage: s,
            rows: shape.rows(),
            cols: shape.cols(),
            patch_count: shape.patch_count(),
            block_count: blocks.len(),
            stack,
            stack_labels: analysis.stack.labels.iter().map(|&(i, b)| [i, b]).collect(),
            embeddings,
            blocks,
        });
    }

    let manifest = ArtifactManifest {
        format_version: FORMAT_VERSION,
        config: model_config,
        analysis: settings,
        n_images: images.len(),
        image_source: source.describe(),
        seed,
        created: chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true),
        parameters,
        stages,
        notes,
    };
    let path = out.join(MANIFEST_FILE);
    let json = serde_json::to_vec_pretty(&manifest).map_err(|source| ArtifactError::Manifest {
        path: path.clone(),
        source,
    })?;
    fs::write(&path, json).map_err(io_err(&path))?;
    Ok(manifest)
}
