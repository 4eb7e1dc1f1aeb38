//! Hidden-attention workbench for cross-scan selective-scan vision models.
//!
//! The pipeline runs images through a seeded toy model ([`ssm`]), materializes
//! each block's patch-to-patch attention ([`attention`]), reduces the
//! resulting matrices to 2-D ([`dimred`]) and persists everything as an
//! artifact directory ([`artifact`]) for a read-only viewer.

pub mod artifact;
pub mod attention;
pub mod dimred;
pub mod images;
pub mod matrix;
pub mod orders;
pub mod ssm;

pub use matrix::Matrix;
pub use orders::{GridShape, PatchCoord, Permutation, ScanOrder};
