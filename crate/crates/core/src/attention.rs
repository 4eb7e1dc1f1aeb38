//! Hidden attention of selective scans.
//!
//! With the discretized parameters frozen, a route's scan is a linear map from
//! inputs to outputs. Per channel `d`, output `i` receives input `j ≤ i` with
//! weight
//!
//! ```text
//! a_d(i, j) = Σ_n C_i[n] · (Π_{k=j+1..i} Ā_k[n][d]) · B̄_j[n][d]
//! ```
//!
//! Channels are aggregated into one patch-to-patch matrix per route, the
//! route matrices are mapped to canonical patch indices and summed, and the
//! resulting per-image matrices are stacked across blocks of a stage or
//! averaged over images for a single block.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::images::Image;
use crate::matrix::Matrix;
use crate::orders::{permutation, GridShape, OrderError, Permutation};
use crate::ssm::{model_forward, DiscretizedRoute, DiscretizedScan, Model, ModelError};

/// State products whose log falls below this are flushed to zero.
pub const LOG_FLUSH: f64 = -60.0;

#[derive(Debug, thiserror::Error)]
pub enum AttentionError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("patch {patch} out of bounds for {len} patches")]
    OutOfBounds { patch: usize, len: usize },
    #[error("stage {stage} does not exist (model has {stages})")]
    UnknownStage { stage: usize, stages: usize },
    #[error("block {block} does not exist in stage {stage} ({blocks} blocks)")]
    UnknownBlock { stage: usize, block: usize, blocks: usize },
    #[error("at least one image is required")]
    NoImages,
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Order(#[from] OrderError),
}

/// How per-channel attentions collapse into one entry.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ChannelAggregation {
    #[default]
    MeanAbs,
    MeanSigned,
    MaxAbs,
}

impl ChannelAggregation {
    fn apply(self, a: &[f64]) -> f64 {
        match self {
            ChannelAggregation::MeanAbs => a.iter().map(|v| v.abs()).sum::<f64>() / a.len() as f64,
            ChannelAggregation::MeanSigned => a.iter().sum::<f64>() / a.len() as f64,
            ChannelAggregation::MaxAbs => a.iter().fold(0.0, |m, v| m.max(v.abs())),
        }
    }
}

/// Visits every causal entry `(i, j)`, `j ≤ i`, with its per-channel
/// attention vector. Products accumulate multiplicatively in the same order as
/// the recurrence; a parallel log-space sum decides flushing.
fn for_each_entry(disc: &DiscretizedRoute, mut visit: impl FnMut(usize, usize, &[f64])) {
    let (len, n_state, d_model) = (disc.len(), disc.state_dim(), disc.channels());
    let width = n_state * d_model;
    let mut prod = vec![0.0; width];
    let mut log_sum = vec![0.0; width];
    let mut live = vec![true; width];
    let mut a = vec![0.0; d_model];
    for j in 0..len {
        prod.copy_from_slice(disc.b_bar_at(j));
        log_sum.iter_mut().for_each(|v| *v = 0.0);
        live.iter_mut().for_each(|v| *v = true);
        let mut live_count = width;
        for i in j..len {
            if i > j {
                let la = disc.log_a_bar_at(i);
                for k in 0..width {
                    if !live[k] {
                        continue;
                    }
                    log_sum[k] += la[k];
                    if log_sum[k] < LOG_FLUSH {
                        live[k] = false;
                        prod[k] = 0.0;
                        live_count -= 1;
                    } else {
                        prod[k] *= la[k].exp();
                    }
                }
                if live_count == 0 {
                    break;
                }
            }
            let c = disc.c_at(i);
            a.iter_mut().for_each(|v| *v = 0.0);
            for n in 0..n_state {
                for d in 0..d_model {
                    a[d] += c[n] * prod[n * d_model + d];
                }
            }
            visit(i, j, &a);
        }
    }
}

/// Signed attention per channel: `channels[d][(i, j)] = a_d(i, j)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SignedAttention {
    pub channels: Vec<Matrix>,
}

impl SignedAttention {
    /// `y_i[d] = Σ_j a_d(i, j) x_j[d]`; reproduces the scan output.
    pub fn apply(&self, inputs: &Matrix) -> Matrix {
        let len = inputs.rows();
        Matrix::from_fn(len, self.channels.len(), |i, d| {
            let m = &self.channels[d];
            (0..=i).map(|j| m[(i, j)] * inputs[(j, d)]).sum()
        })
    }
}

pub fn signed_route_attention(disc: &DiscretizedRoute) -> SignedAttention {
    let len = disc.len();
    let mut channels = vec![Matrix::zeros(len, len); disc.channels()];
    for_each_entry(disc, |i, j, a| {
        for (m, &v) in channels.iter_mut().zip(a) {
            m[(i, j)] = v;
        }
    });
    SignedAttention { channels }
}

/// Lower-triangular attention of one route, in route sequence order.
pub fn route_attention(disc: &DiscretizedRoute, aggregation: ChannelAggregation) -> Matrix {
    let len = disc.len();
    let mut out = Matrix::zeros(len, len);
    for_each_entry(disc, |i, j, a| out[(i, j)] = aggregation.apply(a));
    out
}

/// One block's merged attention in canonical patch indexing.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionMatrix {
    pub stage: usize,
    pub block: usize,
    pub shape: GridShape,
    pub data: Matrix,
}

/// Sums route matrices after mapping each to canonical indexing:
/// `merged(i, j) = Σ_r R_r(inv_r(i), inv_r(j))`.
pub fn merge_attention(
    route_matrices: &[Matrix],
    permutations: &[Permutation],
    shape: GridShape,
) -> Result<Matrix, AttentionError> {
    let n = shape.patch_count();
    if route_matrices.len() != permutations.len() {
        return Err(AttentionError::ShapeMismatch(format!(
            "{} route matrices but {} permutations",
            route_matrices.len(),
            permutations.len()
        )));
    }
    let mut merged = Matrix::zeros(n, n);
    for (m, perm) in route_matrices.iter().zip(permutations) {
        if m.rows() != n || m.cols() != n || perm.len() != n {
            return Err(AttentionError::ShapeMismatch(format!(
                "route matrix {}x{} / permutation {} for {n} patches",
                m.rows(),
                m.cols(),
                perm.len()
            )));
        }
        let inv = perm.inverse();
        for i in 0..n {
            let src = m.row(inv[i]);
            let dst = merged.row_mut(i);
            for (j, v) in dst.iter_mut().enumerate() {
                *v += src[inv[j]];
            }
        }
    }
    Ok(merged)
}

/// Merged attention of a block from its discretized routes.
pub fn block_attention(
    scan: &DiscretizedScan,
    shape: GridShape,
    aggregation: ChannelAggregation,
) -> Result<Matrix, AttentionError> {
    let mut mats = Vec::with_capacity(scan.routes.len());
    let mut perms = Vec::with_capacity(scan.routes.len());
    for route in &scan.routes {
        if route.len() != shape.patch_count() {
            return Err(AttentionError::ShapeMismatch(format!(
                "route of length {} on a {shape} grid",
                route.len()
            )));
        }
        mats.push(route_attention(route, aggregation));
        perms.push(permutation(route.order(), shape)?);
    }
    merge_attention(&mats, &perms, shape)
}

/// All blocks of one stage for every image, flattened row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct StageAttentionStack {
    pub stage: usize,
    pub shape: GridShape,
    /// `(images · blocks) × patch_count²`.
    pub entries: Matrix,
    /// `(image, block)` per row, 0-based, image-major then block-minor.
    pub labels: Vec<(usize, usize)>,
}

/// Element-wise mean of one block's matrices over all images.
#[derive(Debug, Clone, PartialEq)]
pub struct AveragedAttention {
    pub stage: usize,
    pub block: usize,
    pub shape: GridShape,
    pub matrix: Matrix,
}

/// Attention output of one stage: the stacked matrices and per-block averages.
#[derive(Debug, Clone, PartialEq)]
pub struct StageAnalysis {
    pub stack: StageAttentionStack,
    pub averages: Vec<AveragedAttention>,
}

fn check_stage(model: &Model, stage: usize) -> Result<(), AttentionError> {
    if stage >= model.stages.len() {
        return Err(AttentionError::UnknownStage {
            stage,
            stages: model.stages.len(),
        });
    }
    Ok(())
}

/// Merged matrices of every block of every stage for one image.
pub fn image_attention(
    model: &Model,
    image: &Image,
    aggregation: ChannelAggregation,
) -> Result<Vec<Vec<AttentionMatrix>>, AttentionError> {
    let trace = model_forward(model, image)?;
    trace
        .stages
        .iter()
        .zip(&trace.grids)
        .enumerate()
        .map(|(s, (blocks, &shape))| {
            blocks
                .iter()
                .enumerate()
                .map(|(b, scan)| {
                    Ok(AttentionMatrix {
                        stage: s,
                        block: b,
                        shape,
                        data: block_attention(scan, shape, aggregation)?,
                    })
                })
                .collect()
        })
        .collect()
}

/// Runs every image once and assembles stacks and averages for all stages.
///
/// Images are processed in parallel; appending and summation happen
/// sequentially in image order, so results do not depend on thread count.
pub fn analyze_all_stages(
    model: &Model,
    images: &[Image],
    aggregation: ChannelAggregation,
) -> Result<Vec<StageAnalysis>, AttentionError> {
    if images.is_empty() {
        return Err(AttentionError::NoImages);
    }
    let per_image: Vec<Vec<Vec<AttentionMatrix>>> = images
        .par_iter()
        .map(|img| image_attention(model, img, aggregation))
        .collect::<Result<_, _>>()?;
    (0..model.stages.len())
        .map(|s| Ok(assemble_stage(s, &per_image)))
        .collect()
}

fn assemble_stage(stage: usize, per_image: &[Vec<Vec<AttentionMatrix>>]) -> StageAnalysis {
    let n = per_image.len();
    let shape = per_image[0][stage][0].shape;
    let m = per_image[0][stage].len();
    let p2 = shape.patch_count();
    let mut entries = Matrix::zeros(n * m, p2 * p2);
    let mut labels = Vec::with_capacity(n * m);
    let mut sums = vec![Matrix::zeros(p2, p2); m];
    for (i, blocks) in per_image.iter().enumerate() {
        for (j, att) in blocks[stage].iter().enumerate() {
            entries.row_mut(i * m + j).copy_from_slice(att.data.as_slice());
            labels.push((i, j));
            sums[j].add_assign(&att.data);
        }
    }
    let averages = sums
        .into_iter()
        .enumerate()
        .map(|(b, mut sum)| {
            sum.scale_div(n as f64);
            AveragedAttention {
                stage,
                block: b,
                shape,
                matrix: sum,
            }
        })
        .collect();
    StageAnalysis {
        stack: StageAttentionStack {
            stage,
            shape,
            entries,
            labels,
        },
        averages,
    }
}

/// Stacks every block's merged attention of `stage` over all images.
pub fn collect_stage_attention(
    model: &Model,
    images: &[Image],
    stage: usize,
    aggregation: ChannelAggregation,
) -> Result<StageAttentionStack, AttentionError> {
    check_stage(model, stage)?;
    Ok(stage_analysis(model, images, stage, aggregation)?.stack)
}

/// Mean merged attention of one block over all images.
pub fn average_block_attention(
    model: &Model,
    images: &[Image],
    stage: usize,
    block: usize,
    aggregation: ChannelAggregation,
) -> Result<AveragedAttention, AttentionError> {
    check_stage(model, stage)?;
    let blocks = model.stages[stage].blocks.len();
    if block >= blocks {
        return Err(AttentionError::UnknownBlock { stage, block, blocks });
    }
    let mut analysis = stage_analysis(model, images, stage, aggregation)?;
    Ok(analysis.averages.swap_remove(block))
}

fn stage_analysis(
    model: &Model,
    images: &[Image],
    stage: usize,
    aggregation: ChannelAggregation,
) -> Result<StageAnalysis, AttentionError> {
    if images.is_empty() {
        return Err(AttentionError::NoImages);
    }
    let per_image: Vec<Vec<Vec<AttentionMatrix>>> = images
        .par_iter()
        .map(|img| image_attention(model, img, aggregation))
        .collect::<Result<_, _>>()?;
    Ok(assemble_stage(stage, &per_image))
}

/// One row of an attention matrix with its range, for client-side scaling.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttentionRow {
    pub values: Vec<f64>,
    pub min: f64,
    pub max: f64,
}

pub fn attention_row(matrix: &Matrix, patch: usize) -> Result<AttentionRow, AttentionError> {
    if patch >= matrix.rows() {
        return Err(AttentionError::OutOfBounds {
            patch,
            len: matrix.rows(),
        });
    }
    let values = matrix.row(patch).to_vec();
    let min = values.iter().copied().fold(f64::INFINITY, f64::min);
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Ok(AttentionRow { values, min, max })
}

/// Fraction of query patches whose mean attention inside `region(query, key)`
/// exceeds their mean attention outside it. Queries with an empty inside or
/// outside set are skipped.
pub fn region_contrast(
    matrix: &Matrix,
    shape: GridShape,
    region: impl Fn(usize, usize) -> bool,
) -> f64 {
    let n = shape.patch_count();
    let mut hits = 0usize;
    let mut counted = 0usize;
    for q in 0..n {
        let (mut sin, mut nin, mut sout, mut nout) = (0.0, 0usize, 0.0, 0usize);
        for (k, &v) in matrix.row(q).iter().enumerate() {
            if region(q, k) {
                sin += v;
                nin += 1;
            } else {
                sout += v;
                nout += 1;
            }
        }
        if nin == 0 || nout == 0 {
            continue;
        }
        counted += 1;
        if sin / nin as f64 > sout / nout as f64 {
            hits += 1;
        }
    }
    if counted == 0 {
        0.0
    } else {
        hits as f64 / counted as f64
    }
}

/// `region_contrast` with the query's own row and column as the region.
pub fn row_column_contrast(matrix: &Matrix, shape: GridShape) -> f64 {
    let cols = shape.cols();
    region_contrast(matrix, shape, |q, k| q / cols == k / cols || q % cols == k % cols)
}

/// `region_contrast` with anti-diagonals within `band` of the query's.
pub fn anti_diagonal_contrast(matrix: &Matrix, shape: GridShape, band: usize) -> f64 {
    let cols = shape.cols();
    let diag = |i: usize| i / cols + i % cols;
    region_contrast(matrix, shape, |q, k| diag(q).abs_diff(diag(k)) <= band)
}
