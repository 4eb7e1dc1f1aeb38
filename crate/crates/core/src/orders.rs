//! Patch sequencing orders.
//!
//! Every order is a bijection between 2-D patch coordinates and 1-D sequence
//! positions. The canonical patch index used everywhere downstream is the
//! row-major index `row * cols + col` (cross-scan route 1).
//!
//! | kind                | traversal                                                  |
//! |---------------------|------------------------------------------------------------|
//! | `CrossScanRoute1`   | left→right, then top→down (row-major)                      |
//! | `CrossScanRoute2`   | top→down, then left→right (column-major)                   |
//! | `CrossScanRoute3`   | reverse of route 1                                         |
//! | `CrossScanRoute4`   | reverse of route 2                                         |
//! | `Diagonal`          | anti-diagonals `row + col` ascending, ties by ascending row|
//! | `Morton`            | z-order curve, column bit least significant                |
//! | `Spiral`            | clockwise inward from (0, 0), center last                  |
//!
//! Each `*Reverse` kind visits its base kind's sequence back to front.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum OrderError {
    #[error("coordinate ({row}, {col}) out of bounds for {rows}x{cols} grid")]
    CoordOutOfBounds {
        row: usize,
        col: usize,
        rows: usize,
        cols: usize,
    },
    #[error("sequence position {pos} out of bounds for {len} patches")]
    SeqOutOfBounds { pos: usize, len: usize },
    #[error("{order} does not support a {rows}x{cols} grid: {reason}")]
    UnsupportedShape {
        order: ScanOrder,
        rows: usize,
        cols: usize,
        reason: &'static str,
    },
    #[error("grid must have at least 2 patches, got {0}")]
    DegenerateGrid(usize),
    #[error("grid dimensions must be positive, got {rows}x{cols}")]
    EmptyGrid { rows: usize, cols: usize },
    #[error("cannot parse grid shape {0:?}, expected RxC")]
    BadShape(String),
    #[error("unknown scan order {0:?}")]
    UnknownOrder(String),
}

/// Patch lattice dimensions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct GridShape {
    rows: usize,
    cols: usize,
}

impl GridShape {
    pub fn new(rows: usize, cols: usize) -> Result<Self, OrderError> {
        if rows == 0 || cols == 0 {
            return Err(OrderError::EmptyGrid { rows, cols });
        }
        Ok(Self { rows, cols })
    }

    pub fn square(side: usize) -> Result<Self, OrderError> {
        Self::new(side, side)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn patch_count(&self) -> usize {
        self.rows * self.cols
    }

    pub fn canonical_index(&self, coord: PatchCoord) -> Result<usize, OrderError> {
        self.check(coord)?;
        Ok(coord.row * self.cols + coord.col)
    }

    pub fn coord_of(&self, index: usize) -> Result<PatchCoord, OrderError> {
        if index >= self.patch_count() {
            return Err(OrderError::SeqOutOfBounds {
                pos: index,
                len: self.patch_count(),
            });
        }
        Ok(PatchCoord::new(index / self.cols, index % self.cols))
    }

    fn check(&self, coord: PatchCoord) -> Result<(), OrderError> {
        if coord.row >= self.rows || coord.col >= self.cols {
            return Err(OrderError::CoordOutOfBounds {
                row: coord.row,
                col: coord.col,
                rows: self.rows,
                cols: self.cols,
            });
        }
        Ok(())
    }
}

impl fmt::Display for GridShape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}", self.rows, self.cols)
    }
}

impl FromStr for GridShape {
    type Err = OrderError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || OrderError::BadShape(s.to_string());
        let (r, c) = s
            .split_once(['x', 'X', '×'])
            .ok_or_else(bad)?;
        let rows = r.trim().parse().map_err(|_| bad())?;
        let cols = c.trim().parse().map_err(|_| bad())?;
        GridShape::new(rows, cols)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct PatchCoord {
    pub row: usize,
    pub col: usize,
}

impl PatchCoord {
    pub const fn new(row: usize, col: usize) -> Self {
        Self { row, col }
    }
}

/// Serialized by [`ScanOrder::name`]; deserialization accepts every spelling
/// `FromStr` does.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "&'static str")]
pub enum ScanOrder {
    CrossScanRoute1,
    CrossScanRoute2,
    CrossScanRoute3,
    CrossScanRoute4,
    Diagonal,
    DiagonalReverse,
    Morton,
    MortonReverse,
    Spiral,
    SpiralReverse,
}

impl ScanOrder {
    pub const ALL: [ScanOrder; 10] = [
        ScanOrder::CrossScanRoute1,
        ScanOrder::CrossScanRoute2,
        ScanOrder::CrossScanRoute3,
        ScanOrder::CrossScanRoute4,
        ScanOrder::Diagonal,
        ScanOrder::DiagonalReverse,
        ScanOrder::Morton,
        ScanOrder::MortonReverse,
        ScanOrder::Spiral,
        ScanOrder::SpiralReverse,
    ];

    /// VMamba's four-way cross-scan.
    pub const CROSS_SCAN: [ScanOrder; 4] = [
        ScanOrder::CrossScanRoute1,
        ScanOrder::CrossScanRoute2,
        ScanOrder::CrossScanRoute3,
        ScanOrder::CrossScanRoute4,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ScanOrder::CrossScanRoute1 => "route1",
            ScanOrder::CrossScanRoute2 => "route2",
            ScanOrder::CrossScanRoute3 => "route3",
            ScanOrder::CrossScanRoute4 => "route4",
            ScanOrder::Diagonal => "diagonal",
            ScanOrder::DiagonalReverse => "diagonal-reverse",
            ScanOrder::Morton => "morton",
            ScanOrder::MortonReverse => "morton-reverse",
            ScanOrder::Spiral => "spiral",
            ScanOrder::SpiralReverse => "spiral-reverse",
        }
    }

    /// The order visiting the same patches back to front.
    pub fn reversed(self) -> ScanOrder {
        match self {
            ScanOrder::CrossScanRoute1 => ScanOrder::CrossScanRoute3,
            ScanOrder::CrossScanRoute3 => ScanOrder::CrossScanRoute1,
            ScanOrder::CrossScanRoute2 => ScanOrder::CrossScanRoute4,
            ScanOrder::CrossScanRoute4 => ScanOrder::CrossScanRoute2,
            ScanOrder::Diagonal => ScanOrder::DiagonalReverse,
            ScanOrder::DiagonalReverse => ScanOrder::Diagonal,
            ScanOrder::Morton => ScanOrder::MortonReverse,
            ScanOrder::MortonReverse => ScanOrder::Morton,
            ScanOrder::Spiral => ScanOrder::SpiralReverse,
            ScanOrder::SpiralReverse => ScanOrder::Spiral,
        }
    }

    /// Forward base traversal and whether this kind reverses it.
    fn base(self) -> (Base, bool) {
        match self {
            ScanOrder::CrossScanRoute1 => (Base::RowMajor, false),
            ScanOrder::CrossScanRoute2 => (Base::ColumnMajor, false),
            ScanOrder::CrossScanRoute3 => (Base::RowMajor, true),
            ScanOrder::CrossScanRoute4 => (Base::ColumnMajor, true),
            ScanOrder::Diagonal => (Base::Diagonal, false),
            ScanOrder::DiagonalReverse => (Base::Diagonal, true),
            ScanOrder::Morton => (Base::Morton, false),
            ScanOrder::MortonReverse => (Base::Morton, true),
            ScanOrder::Spiral => (Base::Spiral, false),
            ScanOrder::SpiralReverse => (Base::Spiral, true),
        }
    }

    /// Checks that this order is defined on `shape`.
    pub fn supports(self, shape: GridShape) -> Result<(), OrderError> {
        if self.base().0 == Base::Morton
            && !(shape.rows.is_power_of_two() && shape.cols.is_power_of_two())
        {
            return Err(OrderError::UnsupportedShape {
                order: self,
                rows: shape.rows,
                cols: shape.cols,
                reason: "morton order requires power-of-two dimensions",
            });
        }
        Ok(())
    }
}

impl fmt::Display for ScanOrder {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl From<ScanOrder> for &'static str {
    fn from(order: ScanOrder) -> Self {
        order.name()
    }
}

impl TryFrom<String> for ScanOrder {
    type Error = OrderError;

    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

impl FromStr for ScanOrder {
    type Err = OrderError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let key: String = s
            .chars()
            .filter(|c| c.is_ascii_alphanumeric())
            .map(|c| c.to_ascii_lowercase())
            .collect();
        let order = match key.as_str() {
            "route1" | "crossscanroute1" => ScanOrder::CrossScanRoute1,
            "route2" | "crossscanroute2" => ScanOrder::CrossScanRoute2,
            "route3" | "crossscanroute3" => ScanOrder::CrossScanRoute3,
            "route4" | "crossscanroute4" => ScanOrder::CrossScanRoute4,
            "diagonal" => ScanOrder::Diagonal,
            "diagonalreverse" => ScanOrder::DiagonalReverse,
            "morton" | "zorder" => ScanOrder::Morton,
            "mortonreverse" | "zorderreverse" => ScanOrder::MortonReverse,
            "spiral" => ScanOrder::Spiral,
            "spiralreverse" => ScanOrder::SpiralReverse,
            _ => return Err(OrderError::UnknownOrder(s.to_string())),
        };
        Ok(order)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Base {
    RowMajor,
    ColumnMajor,
    Diagonal,
    Morton,
    Spiral,
}

/// Position of `coord` in the sequence produced by `order`.
pub fn grid_to_seq(order: ScanOrder, shape: GridShape, coord: PatchCoord) -> Result<usize, OrderError> {
    shape.check(coord)?;
    order.supports(shape)?;
    let (base, reverse) = order.base();
    let pos = match base {
        Base::RowMajor => coord.row * shape.cols + coord.col,
        Base::ColumnMajor => coord.col * shape.rows + coord.row,
        Base::Diagonal => diagonal_pos(shape, coord),
        Base::Morton => morton_encode(shape, coord),
        Base::Spiral => spiral_pos(shape, coord),
    };
    Ok(if reverse { shape.patch_count() - 1 - pos } else { pos })
}

/// Patch visited at `seq_pos` by `order`; inverse of [`grid_to_seq`].
pub fn seq_to_grid(order: ScanOrder, shape: GridShape, seq_pos: usize) -> Result<PatchCoord, OrderError> {
    let len = shape.patch_count();
    if seq_pos >= len {
        return Err(OrderError::SeqOutOfBounds { pos: seq_pos, len });
    }
    order.supports(shape)?;
    let (base, reverse) = order.base();
    let pos = if reverse { len - 1 - seq_pos } else { seq_pos };
    let coord = match base {
        Base::RowMajor => PatchCoord::new(pos / shape.cols, pos % shape.cols),
        Base::ColumnMajor => PatchCoord::new(pos % shape.rows, pos / shape.rows),
        Base::Diagonal => diagonal_coord(shape, pos),
        Base::Morton => morton_decode(shape, pos),
        Base::Spiral => spiral_coord(shape, pos),
    };
    Ok(coord)
}

/// A scan order materialized over one grid.
///
/// `forward[seq_pos]` is the canonical index visited at `seq_pos`;
/// `inverse[canonical]` is the sequence position of that patch.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Permutation {
    forward: Vec<usize>,
    inverse: Vec<usize>,
}

impl Permutation {
    pub fn identity(len: usize) -> Self {
        Self {
            forward: (0..len).collect(),
            inverse: (0..len).collect(),
        }
    }

    /// Builds from a forward array; `None` unless it is a permutation of `0..len`.
    pub fn from_forward(forward: Vec<usize>) -> Option<Self> {
        let len = forward.len();
        let mut inverse = vec![usize::MAX; len];
        for (pos, &idx) in forward.iter().enumerate() {
            if idx >= len || inverse[idx] != usize::MAX {
                return None;
            }
            inverse[idx] = pos;
        }
        Some(Self { forward, inverse })
    }

    pub fn len(&self) -> usize {
        self.forward.len()
    }

    pub fn is_empty(&self) -> bool {
        self.forward.is_empty()
    }

    pub fn forward(&self) -> &[usize] {
        &self.forward
    }

    pub fn inverse(&self) -> &[usize] {
        &self.inverse
    }

    /// Reorders canonical-indexed rows into sequence order.
    pub fn gather<T: Clone>(&self, canonical: &[T]) -> Vec<T> {
        self.forward.iter().map(|&i| canonical[i].clone()).collect()
    }

    /// Reorders sequence-ordered rows back to canonical order.
    pub fn scatter<T: Clone>(&self, sequence: &[T]) -> Vec<T> {
        self.inverse.iter().map(|&p| sequence[p].clone()).collect()
    }
}

pub fn permutation(order: ScanOrder, shape: GridShape) -> Result<Permutation, OrderError> {
    order.supports(shape)?;
    let forward = (0..shape.patch_count())
        .map(|pos| seq_to_grid(order, shape, pos).map(|c| c.row * shape.cols + c.col))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(Permutation::from_forward(forward).expect("scan orders are bijective"))
}

/// Mean Manhattan distance between consecutively scanned patches.
pub fn locality_score(order: ScanOrder, shape: GridShape) -> Result<f64, OrderError> {
    let n = shape.patch_count();
    if n < 2 {
        return Err(OrderError::DegenerateGrid(n));
    }
    let mut prev = seq_to_grid(order, shape, 0)?;
    let mut total = 0usize;
    for pos in 1..n {
        let cur = seq_to_grid(order, shape, pos)?;
        total += prev.row.abs_diff(cur.row) + prev.col.abs_diff(cur.col);
        prev = cur;
    }
    Ok(total as f64 / (n - 1) as f64)
}

/// True when for every ordered pair (i, j) some route scans j no later than i,
/// i.e. every patch can receive information from every other patch.
pub fn covers_all_pairs(routes: &[ScanOrder], shape: GridShape) -> Result<bool, OrderError> {
    let perms = routes
        .iter()
        .map(|&r| permutation(r, shape))
        .collect::<Result<Vec<_>, _>>()?;
    if perms.is_empty() {
        return Ok(false);
    }
    // A route together with its reverse covers everything.
    if routes.iter().any(|r| routes.contains(&r.reversed())) {
        return Ok(true);
    }
    let n = shape.patch_count();
    for i in 0..n {
        for j in 0..n {
            if !perms.iter().any(|p| p.inverse[j] <= p.inverse[i]) {
                return Ok(false);
            }
        }
    }
    Ok(true)
}

fn diagonal_len(shape: GridShape, d: usize) -> usize {
    let lo = d.saturating_sub(shape.cols - 1);
    let hi = d.min(shape.rows - 1);
    hi + 1 - lo
}

fn diagonal_pos(shape: GridShape, coord: PatchCoord) -> usize {
    let d = coord.row + coord.col;
    let before: usize = (0..d).map(|k| diagonal_len(shape, k)).sum();
    before + coord.row - d.saturating_sub(shape.cols - 1)
}

fn diagonal_coord(shape: GridShape, mut pos: usize) -> PatchCoord {
    let mut d = 0;
    loop {
        let len = diagonal_len(shape, d);
        if pos < len {
            let row = d.saturating_sub(shape.cols - 1) + pos;
            return PatchCoord::new(row, d - row);
        }
        pos -= len;
        d += 1;
    }
}

/// Spreads the low 32 bits of `v` to the even bit positions.
fn spread_bits(v: u64) -> u64 {
    let mut x = v & 0xffff_ffff;
    x = (x | (x << 16)) & 0x0000_ffff_0000_ffff;
    x = (x | (x << 8)) & 0x00ff_00ff_00ff_00ff;
    x = (x | (x << 4)) & 0x0f0f_0f0f_0f0f_0f0f;
    x = (x | (x << 2)) & 0x3333_3333_3333_3333;
    x = (x | (x << 1)) & 0x5555_5555_5555_5555;
    x
}

fn compact_bits(v: u64) -> u64 {
    let mut x = v & 0x5555_5555_5555_5555;
    x = (x | (x >> 1)) & 0x3333_3333_3333_3333;
    x = (x | (x >> 2)) & 0x0f0f_0f0f_0f0f_0f0f;
    x = (x | (x >> 4)) & 0x00ff_00ff_00ff_00ff;
    x = (x | (x >> 8)) & 0x0000_ffff_0000_ffff;
    x = (x | (x >> 16)) & 0x0000_0000_ffff_ffff;
    x
}

// Rectangular power-of-two grids interleave the low `min` bits of both axes
// and place the remaining high bits of the longer axis on top, which is the
// rank of the plain interleaved code among the grid's cells.
fn morton_encode(shape: GridShape, coord: PatchCoord) -> usize {
    let row_bits = shape.rows.trailing_zeros();
    let col_bits = shape.cols.trailing_zeros();
    let shared = row_bits.min(col_bits);
    let mask = (1u64 << shared) - 1;
    let (r, c) = (coord.row as u64, coord.col as u64);
    let low = spread_bits(c & mask) | (spread_bits(r & mask) << 1);
    let high = (r >> shared) | (c >> shared);
    (low | (high << (2 * shared))) as usize
}

fn morton_decode(shape: GridShape, pos: usize) -> PatchCoord {
    let row_bits = shape.rows.trailing_zeros();
    let col_bits = shape.cols.trailing_zeros();
    let shared = row_bits.min(col_bits);
    let pos = pos as u64;
    let low = pos & ((1u64 << (2 * shared)) - 1);
    let high = pos >> (2 * shared);
    let mut col = compact_bits(low);
    let mut row = compact_bits(low >> 1);
    if row_bits > col_bits {
        row |= high << shared;
    } else {
        col |= high << shared;
    }
    PatchCoord::new(row as usize, col as usize)
}

fn spiral_ring_start(shape: GridShape, ring: usize) -> usize {
    shape.patch_count() - (shape.rows - 2 * ring) * (shape.cols - 2 * ring)
}

fn spiral_pos(shape: GridShape, coord: PatchCoord) -> usize {
    let PatchCoord { row: r, col: c } = coord;
    let k = r.min(c).min(shape.rows - 1 - r).min(shape.cols - 1 - c);
    let h = shape.rows - 2 * k;
    let w = shape.cols - 2 * k;
    let (top, left, bottom, right) = (k, k, k + h - 1, k + w - 1);
    let offset = if h == 1 {
        c - left
    } else if w == 1 {
        r - top
    } else if r == top {
        c - left
    } else if c == right {
        (w - 1) + (r - top)
    } else if r == bottom {
        (w - 1) + (h - 1) + (right - c)
    } else {
        2 * (w - 1) + (h - 1) + (bottom - r)
    };
    spiral_ring_start(shape, k) + offset
}

fn spiral_coord(shape: GridShape, pos: usize) -> PatchCoord {
    let max_ring = (shape.rows.min(shape.cols) - 1) / 2;
    let mut k = 0;
    while k < max_ring && spiral_ring_start(shape, k + 1) <= pos {
        k += 1;
    }
    let h = shape.rows - 2 * k;
    let w = shape.cols - 2 * k;
    let (top, left, bottom, right) = (k, k, k + h - 1, k + w - 1);
    let off = pos - spiral_ring_start(shape, k);
    if h == 1 {
        return PatchCoord::new(top, left + off);
    }
    if w == 1 {
        return PatchCoord::new(top + off, left);
    }
    if off < w {
        PatchCoord::new(top, left + off)
    } else if off < w + h - 1 {
        PatchCoord::new(top + off - (w - 1), right)
    } else if off < 2 * (w - 1) + h {
        PatchCoord::new(bottom, right - (off - (w - 1) - (h - 1)))
    } else {
        PatchCoord::new(bottom - (off - 2 * (w - 1) - (h - 1)), left)
    }
}
