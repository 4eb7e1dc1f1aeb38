//! Read-only JSON API over a loaded artifact.
//!
//! Every response is computed from the [`Artifact`] loaded at startup; the
//! service keeps no other state. Errors use
//! `{"error": {"code": ..., "message": ...}}` with status 400 for malformed
//! requests and 404 for unknown stages, blocks, patches or embeddings.

use std::collections::HashMap;
use std::sync::Arc;

use axum::extract::{Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::get;
use axum::{Json, Router};
use serde::Serialize;
use serde_json::{json, Value};
use tower_http::cors::CorsLayer;

use scanlens_core::artifact::{Artifact, LoadedStage, StageEntry};
use scanlens_core::dimred::{EmbeddingParams, Method};
use scanlens_core::PatchCoord;

pub type SharedArtifact = Arc<Artifact>;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ApiError {
    pub status: StatusCode,
    pub code: &'static str,
    pub message: String,
}

impl ApiError {
    fn bad(code: &'static str, message: impl Into<String>) -> Self {
        Self {
            status: StatusCode::BAD_REQUEST,
            code,
            message: message.into(),
        }
    }

    fn not_found(code: &'static str, message: impl Into<String>) -> Self {
        Self {
            status: StatusCode::NOT_FOUND,
            code,
            message: message.into(),
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = json!({ "error": { "code": self.code, "message": self.message } });
        (self.status, Json(body)).into_response()
    }
}

type ApiResult<T> = Result<Json<T>, ApiError>;
type Params = Query<HashMap<String, String>>;

pub fn router(artifact: SharedArtifact) -> Router {
    Router::new()
        .route("/api/config", get(config))
        .route("/api/stages", get(stages))
        .route("/api/embedding", get(embedding))
        .route("/api/attention", get(attention))
        .route("/api/attention_row", get(attention_row))
        .route("/api/grid", get(grid))
        .fallback(|| async { ApiError::not_found("no_such_endpoint", "no such endpoint") })
        .layer(CorsLayer::permissive())
        .with_state(artifact)
}

fn required<'a>(params: &'a HashMap<String, String>, name: &str) -> Result<&'a str, ApiError> {
    params
        .get(name)
        .map(String::as_str)
        .ok_or_else(|| ApiError::bad("missing_parameter", format!("query parameter {name:?} is required")))
}

fn index(params: &HashMap<String, String>, name: &str) -> Result<Option<usize>, ApiError> {
    params
        .get(name)
        .map(|v| {
            v.parse::<usize>().map_err(|_| {
                ApiError::bad(
                    "invalid_parameter",
                    format!("{name} must be a non-negative integer, got {v:?}"),
                )
            })
        })
        .transpose()
}

fn required_index(params: &HashMap<String, String>, name: &str) -> Result<usize, ApiError> {
    required(params, name)?;
    Ok(index(params, name)?.expect("present"))
}

fn stage_of(artifact: &Artifact, stage: usize) -> Result<(&StageEntry, &LoadedStage), ApiError> {
    match (artifact.manifest().stage(stage), artifact.stage(stage)) {
        (Some(entry), Some(loaded)) => Ok((entry, loaded)),
        _ => Err(ApiError::not_found(
            "unknown_stage",
            format!("stage {stage} does not exist ({} stages)", artifact.stages().len()),
        )),
    }
}

fn check_block(entry: &StageEntry, block: usize) -> Result<(), ApiError> {
    if block >= entry.blocks.len() {
        return Err(ApiError::not_found(
            "unknown_block",
            format!("block {block} does not exist in stage {} ({} blocks)", entry.stage, entry.blocks.len()),
        ));
    }
    Ok(())
}

fn parse_method(raw: &str) -> Result<Method, ApiError> {
    let method: Method = raw
        .parse()
        .map_err(|e: scanlens_core::dimred::DimRedError| ApiError::bad("invalid_method", e.to_string()))?;
    if method == Method::Umap {
        return Err(ApiError::bad("unsupported_method", "UMAP not implemented; use PCA or TSNE"));
    }
    Ok(method)
}

fn range(values: &[f32]) -> (f32, f32) {
    let min = values.iter().copied().fold(f32::INFINITY, f32::min);
    let max = values.iter().copied().fold(f32::NEG_INFINITY, f32::max);
    (min, max)
}

async fn config(State(artifact): State<SharedArtifact>) -> Json<Value> {
    Json(artifact.manifest_json().clone())
}

#[derive(Debug, Serialize)]
pub struct BlockSummary {
    pub block: usize,
    pub methods: Vec<Method>,
}

#[derive(Debug, Serialize)]
pub struct StageSummary {
    pub stage: usize,
    pub rows: usize,
    pub cols: usize,
    pub patch_count: usize,
    pub block_count: usize,
    pub n_images: usize,
    /// Methods with a Mode-1 embedding for this stage.
    pub methods: Vec<Method>,
    pub blocks: Vec<BlockSummary>,
}

async fn stages(State(artifact): State<SharedArtifact>) -> Json<Vec<StageSummary>> {
    let m = artifact.manifest();
    Json(
        m.stages
            .iter()
            .map(|s| StageSummary {
                stage: s.stage,
                rows: s.rows,
                cols: s.cols,
                patch_count: s.patch_count,
                block_count: s.block_count,
                n_images: m.n_images,
                methods: s.embeddings.iter().map(|e| e.method).collect(),
                blocks: s
                    .blocks
                    .iter()
                    .map(|b| BlockSummary {
                        block: b.block,
                        methods: b.embeddings.iter().map(|e| e.method).collect(),
                    })
                    .collect(),
            })
            .collect(),
    )
}

#[derive(Debug, Serialize)]
pub struct EmbeddingBody {
    pub stage: usize,
    /// Present for Mode-2 (per-block) embeddings.
    pub block: Option<usize>,
    pub mode: u8,
    pub method: Method,
    /// `"block"` for Mode 1, `"patch"` for Mode 2.
    pub label_kind: &'static str,
    pub points: Vec<[f32; 2]>,
    pub labels: Vec<usize>,
    pub params: EmbeddingParams,
}

async fn embedding(State(artifact): State<SharedArtifact>, Query(q): Params) -> ApiResult<EmbeddingBody> {
    let stage = required_index(&q, "stage")?;
    let method = parse_method(required(&q, "method")?)?;
    let block = index(&q, "block")?;
    let (entry, loaded) = stage_of(&artifact, stage)?;
    let (meta, points, mode) = match block {
        None => (entry.embedding(method), loaded.embedding(method), 1),
        Some(b) => {
            check_block(entry, b)?;
            (entry.blocks[b].embedding(method), loaded.blocks[b].embedding(method), 2)
        }
    };
    let (Some(meta), Some(points)) = (meta, points) else {
        return Err(ApiError::not_found(
            "embedding_unavailable",
            format!("no {method} embedding was produced for this selection"),
        ));
    };
    Ok(Json(EmbeddingBody {
        stage,
        block,
        mode,
        method,
        label_kind: if mode == 1 { "block" } else { "patch" },
        points: points.data().chunks_exact(2).map(|p| [p[0], p[1]]).collect(),
        labels: meta.labels.clone(),
        params: meta.params.clone(),
    }))
}

#[derive(Debug, Serialize)]
pub struct AttentionBody {
    pub stage: usize,
    pub block: usize,
    pub rows: usize,
    pub cols: usize,
    pub patch_count: usize,
    /// `patch_count × patch_count`, row-major.
    pub values: Vec<f32>,
    pub min: f32,
    pub max: f32,
}

async fn attention(State(artifact): State<SharedArtifact>, Query(q): Params) -> ApiResult<AttentionBody> {
    let stage = required_index(&q, "stage")?;
    let block = required_index(&q, "block")?;
    let (entry, loaded) = stage_of(&artifact, stage)?;
    check_block(entry, block)?;
    let values = loaded.blocks[block].attention.data().to_vec();
    let (min, max) = range(&values);
    Ok(Json(AttentionBody {
        stage,
        block,
        rows: entry.rows,
        cols: entry.cols,
        patch_count: entry.patch_count,
        values,
        min,
        max,
    }))
}

#[derive(Debug, Serialize)]
pub struct AttentionRowBody {
    pub stage: usize,
    pub block: usize,
    pub patch: usize,
    pub row: usize,
    pub col: usize,
    /// Attention from `patch` to every patch, canonical order.
    pub values: Vec<f32>,
    pub min: f32,
    pub max: f32,
}

async fn attention_row(State(artifact): State<SharedArtifact>, Query(q): Params) -> ApiResult<AttentionRowBody> {
    let stage = required_index(&q, "stage")?;
    let block = required_index(&q, "block")?;
    let patch = required_index(&q, "patch")?;
    let (entry, loaded) = stage_of(&artifact, stage)?;
    check_block(entry, block)?;
    let Some(row) = loaded.blocks[block].attention.row(patch) else {
        return Err(ApiError::not_found(
            "unknown_patch",
            format!("patch {patch} does not exist ({} patches)", entry.patch_count),
        ));
    };
    let (min, max) = range(row);
    let coord = loaded.shape.coord_of(patch).expect("row exists");
    Ok(Json(AttentionRowBody {
        stage,
        block,
        patch,
        row: coord.row,
        col: coord.col,
        values: row.to_vec(),
        min,
        max,
    }))
}

#[derive(Debug, Serialize)]
pub struct GridBody {
    pub stage: usize,
    pub rows: usize,
    pub cols: usize,
    pub patch_count: usize,
    /// `index[r][c]` is the canonical (row-major) index of patch `(r, c)`.
    pub index: Vec<Vec<usize>>,
}

async fn grid(State(artifact): State<SharedArtifact>, Query(q): Params) -> ApiResult<GridBody> {
    let stage = required_index(&q, "stage")?;
    let (entry, loaded) = stage_of(&artifact, stage)?;
    let shape = loaded.shape;
    let index = (0..shape.rows())
        .map(|r| {
            (0..shape.cols())
                .map(|c| shape.canonical_index(PatchCoord::new(r, c)).expect("in bounds"))
                .collect()
        })
        .collect();
    Ok(Json(GridBody {
        stage,
        rows: entry.rows,
        cols: entry.cols,
        patch_count: entry.patch_count,
        index,
    }))
}
