//! Toy-scale cross-scan selective-scan vision model.
//!
//! Patch embedding, per-route selective scans merged by summation with a
//! residual, and 2×2 downsampling between stages. Weights are seeded, never
//! trained.

mod config;
mod forward;
mod params;
mod scan;

use thiserror::Error;

use crate::orders::OrderError;

pub use config::ModelConfig;
pub use forward::{block_forward, downsample, model_forward, patch_embed, ForwardTrace, TokenGrid};
pub use params::{init_model, softplus, BlockParams, Linear, Model, RouteParams, StageParams, DELTA_MAX, DELTA_MIN};
pub use scan::{discretize, selective_scan, DiscretizedRoute, DiscretizedScan};

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("invalid model config: {0}")]
    InvalidConfig(String),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("cannot downsample a {rows}x{cols} grid: sides must be even")]
    OddGrid { rows: usize, cols: usize },
    #[error("missing model parameter {0}")]
    MissingParameter(String),
    #[error(transparent)]
    Order(#[from] OrderError),
}
