//! Dimensionality reduction: PCA and exact t-SNE.
//!
//! High-dimensional inputs to t-SNE are first projected with PCA to at most
//! [`PRE_PROJECTION_DIM`] dimensions.

pub mod jacobi;
mod pca;
pub mod tsne;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::matrix::Matrix;

pub use pca::{pca, PcaBasis};
pub use tsne::{affinities, kl_divergence, tsne, Affinities, TsneParams, TsneResult};

pub const PRE_PROJECTION_DIM: usize = 100;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DimRedError {
    #[error("{0}")]
    UnsupportedMethod(String),
    #[error("perplexity {perplexity} outside [1, {max}]")]
    BadPerplexity { perplexity: f64, max: f64 },
    #[error("need at least {needed} points, got {got}")]
    TooFewPoints { needed: usize, got: usize },
    #[error("cannot project to {requested} dims (max {max})")]
    BadDims { requested: usize, max: usize },
    #[error("non-finite values in {0}")]
    NonFinite(String),
    #[error("eigensolver did not converge in {0} sweeps")]
    NotConverged(usize),
    #[error("{labels} labels for {points} points")]
    LabelMismatch { labels: usize, points: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Pca,
    Tsne,
    Umap,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Pca => "pca",
            Method::Tsne => "tsne",
            Method::Umap => "umap",
        }
    }

    /// Methods this crate can actually run.
    pub const SUPPORTED: [Method; 2] = [Method::Pca, Method::Tsne];
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = DimRedError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().replace('-', "").as_str() {
            "pca" => Ok(Method::Pca),
            "tsne" => Ok(Method::Tsne),
            "umap" => Ok(Method::Umap),
            _ => Err(DimRedError::UnsupportedMethod(format!(
                "unknown method {s:?}; use PCA or TSNE"
            ))),
        }
    }
}

/// Requested reduction settings. `perplexity` is clamped to `(k - 1) / 3`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReduceParams {
    pub perplexity: f64,
    pub iterations: usize,
    pub learning_rate: f64,
    pub seed: u64,
}

impl Default for ReduceParams {
    fn default() -> Self {
        let t = TsneParams::default();
        Self {
            perplexity: t.perplexity,
            iterations: t.iterations,
            learning_rate: t.learning_rate,
            seed: t.seed,
        }
    }
}

/// Parameters actually used to produce an embedding.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingParams {
    pub method: Method,
    pub input_dim: usize,
    /// Dimension after PCA pre-projection, when one was applied.
    pub pre_projection_dim: Option<usize>,
    pub perplexity: Option<f64>,
    pub iterations: Option<usize>,
    pub learning_rate: Option<f64>,
    pub seed: Option<u64>,
    pub initial_kl: Option<f64>,
    pub final_kl: Option<f64>,
    pub explained_variance: Option<Vec<f64>>,
}

/// 2-D points with one label per point.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingSet {
    /// `k × 2`.
    pub points: Matrix,
    pub labels: Vec<usize>,
    pub params: EmbeddingParams,
}

impl EmbeddingSet {
    pub fn method(&self) -> Method {
        self.params.method
    }

    pub fn len(&self) -> usize {
        self.points.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.points.rows() == 0
    }
}

pub fn reduce(
    data: &Matrix,
    labels: Vec<usize>,
    method: Method,
    params: &ReduceParams,
) -> Result<EmbeddingSet, DimRedError> {
    let (k, d) = (data.rows(), data.cols());
    if labels.len() != k {
        return Err(DimRedError::LabelMismatch {
            labels: labels.len(),
            points: k,
        });
    }
    match method {
        Method::Umap => Err(DimRedError::UnsupportedMethod(
            "UMAP not implemented; use PCA or TSNE".into(),
        )),
        Method::Pca => {
            // Two points span one direction; pad the layout with a zero column.
            let dims = 2.min(k.saturating_sub(1)).min(d).max(1);
            let (projected, mut basis) = pca(data, dims)?;
            let points = Matrix::from_fn(k, 2, |i, j| if j < dims { projected[(i, j)] } else { 0.0 });
            basis.explained_variance.resize(2, 0.0);
            Ok(EmbeddingSet {
                points,
                labels,
                params: EmbeddingParams {
                    method,
                    input_dim: d,
                    pre_projection_dim: None,
                    perplexity: None,
                    iterations: None,
                    learning_rate: None,
                    seed: None,
                    initial_kl: None,
                    final_kl: None,
                    explained_variance: Some(basis.explained_variance),
                },
            })
        }
        Method::Tsne => {
            let perplexity = params.perplexity.min((k.saturating_sub(1)) as f64 / 3.0);
            tsne::check_perplexity(k, perplexity)?;
            let (input, pre) = if d > PRE_PROJECTION_DIM {
                let dims = PRE_PROJECTION_DIM.min(k - 1);
                let (projected, basis) = pca(data, dims)?;
                let keep = basis.rank.clamp(1, dims);
                let trimmed = Matrix::from_fn(k, keep, |i, j| projected[(i, j)]);
                (trimmed, Some(keep))
            } else {
                (data.clone(), None)
            };
            let tparams = TsneParams {
                perplexity,
                iterations: params.iterations,
                learning_rate: params.learning_rate,
                seed: params.seed,
            };
            let result = tsne(&input, &tparams)?;
            Ok(EmbeddingSet {
                points: result.points,
                labels,
                params: EmbeddingParams {
                    method,
                    input_dim: d,
                    pre_projection_dim: pre,
                    perplexity: Some(perplexity),
                    iterations: Some(params.iterations),
                    learning_rate: Some(params.learning_rate),
                    seed: Some(params.seed),
                    initial_kl: Some(result.initial_kl),
                    final_kl: Some(result.final_kl),
                    explained_variance: None,
                },
            })
        }
    }
}
