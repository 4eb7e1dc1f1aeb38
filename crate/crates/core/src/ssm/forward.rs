use super::params::{BlockParams, Linear, Model};
use super::scan::{discretize, selective_scan, DiscretizedScan};
use super::ModelError;
use crate::images::Image;
use crate::matrix::Matrix;
use crate::orders::{permutation, GridShape};

/// Tokens of one stage, one row per patch in canonical (row-major) order.
#[derive(Debug, Clone, PartialEq)]
pub struct TokenGrid {
    shape: GridShape,
    data: Matrix,
}

impl TokenGrid {
    pub fn new(shape: GridShape, data: Matrix) -> Result<Self, ModelError> {
        if data.rows() != shape.patch_count() {
            return Err(ModelError::ShapeMismatch(format!(
                "{} token rows for a {shape} grid",
                data.rows()
            )));
        }
        Ok(Self { shape, data })
    }

    pub fn shape(&self) -> GridShape {
        self.shape
    }

    pub fn data(&self) -> &Matrix {
        &self.data
    }

    pub fn channels(&self) -> usize {
        self.data.cols()
    }
}

/// Splits `image` into patches and projects each to the stage-0 width.
///
/// A patch is flattened as `[y][x][rgb]` within the patch.
pub fn patch_embed(image: &Image, model: &Model) -> Result<TokenGrid, ModelError> {
    let cfg = &model.config;
    if image.size() != cfg.image_size {
        return Err(ModelError::ShapeMismatch(format!(
            "image is {0}x{0} but the model expects {1}x{1}",
            image.size(),
            cfg.image_size
        )));
    }
    let p = cfg.patch_size;
    let side = cfg.base_side();
    let shape = GridShape::square(side)?;
    let mut data = Matrix::zeros(shape.patch_count(), model.patch_embed.out_dim());
    let mut patch = Vec::with_capacity(p * p * 3);
    for pr in 0..side {
        for pc in 0..side {
            patch.clear();
            for y in 0..p {
                for x in 0..p {
                    for ch in 0..3 {
                        patch.push(image.pixel(pr * p + y, pc * p + x, ch));
                    }
                }
            }
            let token = model.patch_embed.apply(&patch);
            data.row_mut(pr * side + pc).copy_from_slice(&token);
        }
    }
    TokenGrid::new(shape, data)
}

/// One scan-merge block: every route scans the tokens in its own order, the
/// outputs are mapped back to canonical order and summed, and the input is
/// added back as a residual.
pub fn block_forward(block: &BlockParams, tokens: &TokenGrid) -> Result<(TokenGrid, DiscretizedScan), ModelError> {
    let shape = tokens.shape;
    let mut merged = tokens.data.clone();
    let mut routes = Vec::with_capacity(block.routes.len());
    for params in &block.routes {
        let perm = permutation(params.order, shape)?;
        let sequence = Matrix::from_fn(shape.patch_count(), tokens.channels(), |pos, d| {
            tokens.data[(perm.forward()[pos], d)]
        });
        let disc = discretize(params, &sequence)?;
        let y = selective_scan(&disc, &sequence)?;
        for (pos, &idx) in perm.forward().iter().enumerate() {
            for (m, v) in merged.row_mut(idx).iter_mut().zip(y.row(pos)) {
                *m += v;
            }
        }
        routes.push(disc);
    }
    Ok((TokenGrid::new(shape, merged)?, DiscretizedScan { routes }))
}

/// Concatenates each 2×2 neighborhood (top-left, top-right, bottom-left,
/// bottom-right) and projects it with `projection`; halves both grid sides.
pub fn downsample(tokens: &TokenGrid, projection: &Linear) -> Result<TokenGrid, ModelError> {
    let shape = tokens.shape;
    if !shape.rows().is_multiple_of(2) || !shape.cols().is_multiple_of(2) {
        return Err(ModelError::OddGrid {
            rows: shape.rows(),
            cols: shape.cols(),
        });
    }
    let d = tokens.channels();
    if projection.in_dim() != 4 * d {
        return Err(ModelError::ShapeMismatch(format!(
            "downsample projection takes {} inputs, neighborhoods have {}",
            projection.in_dim(),
            4 * d
        )));
    }
    let out_shape = GridShape::new(shape.rows() / 2, shape.cols() / 2)?;
    let mut data = Matrix::zeros(out_shape.patch_count(), projection.out_dim());
    let mut concat = Vec::with_capacity(4 * d);
    for r in 0..out_shape.rows() {
        for c in 0..out_shape.cols() {
            concat.clear();
            for (dr, dc) in [(0, 0), (0, 1), (1, 0), (1, 1)] {
                let idx = (2 * r + dr) * shape.cols() + 2 * c + dc;
                concat.extend_from_slice(tokens.data.row(idx));
            }
            data.row_mut(r * out_shape.cols() + c)
                .copy_from_slice(&projection.apply(&concat));
        }
    }
    TokenGrid::new(out_shape, data)
}

/// Everything attention extraction needs from one forward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardTrace {
    /// `stages[s][b]` is block `b` of stage `s`.
    pub stages: Vec<Vec<DiscretizedScan>>,
    pub grids: Vec<GridShape>,
    pub output: TokenGrid,
}

pub fn model_forward(model: &Model, image: &Image) -> Result<ForwardTrace, ModelError> {
    let mut tokens = patch_embed(image, model)?;
    let mut stages = Vec::with_capacity(model.stages.len());
    let mut grids = Vec::with_capacity(model.stages.len());
    for stage in &model.stages {
        grids.push(tokens.shape());
        let mut scans = Vec::with_capacity(stage.blocks.len());
        for block in &stage.blocks {
            let (next, disc) = block_forward(block, &tokens)?;
            tokens = next;
            scans.push(disc);
        }
        stages.push(scans);
        if let Some(proj) = &stage.downsample {
            tokens = downsample(&tokens, proj)?;
        }
    }
    Ok(ForwardTrace {
        stages,
        grids,
        output: tokens,
    })
}
