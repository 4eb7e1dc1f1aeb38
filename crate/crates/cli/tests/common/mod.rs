//! Shared helpers: in-process requests and strict response schemas.
#![allow(dead_code)]

use std::path::Path;
use std::sync::Arc;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use http_body_util::BodyExt;
use serde::Deserialize;
use tower::ServiceExt;

use scanlens::api;
use scanlens_core::artifact::{extract, AnalysisSettings, Artifact, ArtifactManifest, ExtractConfig};
use scanlens_core::images::ImageSource;
use scanlens_core::ssm::ModelConfig;

pub struct Client {
    router: axum::Router,
    runtime: tokio::runtime::Runtime,
}

impl Client {
    pub fn new(artifact: Artifact) -> Self {
        Self {
            router: api::router(Arc::new(artifact)),
            runtime: tokio::runtime::Builder::new_current_thread().build().unwrap(),
        }
    }

    pub fn get(&self, uri: &str) -> (StatusCode, Vec<u8>) {
        self.runtime.block_on(async {
            let req = Request::get(uri).body(Body::empty()).unwrap();
            let resp = self.router.clone().oneshot(req).await.unwrap();
            let status = resp.status();
            let bytes = resp.into_body().collect().await.unwrap().to_bytes().to_vec();
            (status, bytes)
        })
    }

    pub fn json<T: serde::de::DeserializeOwned>(&self, uri: &str) -> Result<T, String> {
        let (status, body) = self.get(uri);
        if status != StatusCode::OK {
            return Err(format!("{uri}: status {status}: {}", String::from_utf8_lossy(&body)));
        }
        serde_json::from_slice(&body).map_err(|e| format!("{uri}: schema: {e}"))
    }

    /// Status and error code of a failing request.
    pub fn error(&self, uri: &str) -> (StatusCode, String) {
        let (status, body) = self.get(uri);
        let parsed: ErrorBody = serde_json::from_slice(&body)
            .unwrap_or_else(|e| panic!("{uri}: error schema: {e}: {}", String::from_utf8_lossy(&body)));
        (status, parsed.error.code)
    }
}

pub fn small_config(channels: usize) -> ExtractConfig {
    ExtractConfig {
        model: ModelConfig {
            image_size: 32,
            patch_size: 4,
            channels: vec![channels, channels],
            state_dim: 4,
            blocks_per_stage: vec![2, 2],
            ..ModelConfig::default()
        },
        analysis: AnalysisSettings::default(),
    }
}

pub fn build_artifact(dir: &Path, n_images: usize, seed: u64) -> ArtifactManifest {
    extract(&small_config(8), &ImageSource::Synthetic(n_images), dir, seed).unwrap()
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ErrorBody {
    pub error: ErrorDetail,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ErrorDetail {
    pub code: String,
    pub message: String,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BlockSummary {
    pub block: usize,
    pub methods: Vec<String>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StageSummary {
    pub stage: usize,
    pub rows: usize,
    pub cols: usize,
    pub patch_count: usize,
    pub block_count: usize,
    pub n_images: usize,
    pub methods: Vec<String>,
    pub blocks: Vec<BlockSummary>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EmbeddingParamsBody {
    pub method: String,
    pub input_dim: usize,
    pub pre_projection_dim: Option<usize>,
    pub perplexity: Option<f64>,
    pub iterations: Option<usize>,
    pub learning_rate: Option<f64>,
    pub seed: Option<u64>,
    pub initial_kl: Option<f64>,
    pub final_kl: Option<f64>,
    pub explained_variance: Option<Vec<f64>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EmbeddingBody {
    pub stage: usize,
    pub block: Option<usize>,
    pub mode: u8,
    pub method: String,
    pub label_kind: String,
    pub points: Vec<[f64; 2]>,
    pub labels: Vec<usize>,
    pub params: EmbeddingParamsBody,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AttentionBody {
    pub stage: usize,
    pub block: usize,
    pub rows: usize,
    pub cols: usize,
    pub patch_count: usize,
    pub values: Vec<f64>,
    pub min: f64,
    pub max: f64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AttentionRowBody {
    pub stage: usize,
    pub block: usize,
    pub patch: usize,
    pub row: usize,
    pub col: usize,
    pub values: Vec<f64>,
    pub min: f64,
    pub max: f64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridBody {
    pub stage: usize,
    pub rows: usize,
    pub cols: usize,
    pub patch_count: usize,
    pub index: Vec<Vec<usize>>,
}

/// Values a JSON body carried, as the `f32` they were serialized from.
pub fn as_f32(values: &[f64]) -> Vec<u32> {
    values.iter().map(|&v| (v as f32).to_bits()).collect()
}
