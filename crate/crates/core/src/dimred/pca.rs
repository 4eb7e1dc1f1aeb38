use serde::{Deserialize, Serialize};

use super::jacobi::symmetric_eigen;
use super::DimRedError;
use crate::matrix::{dot, Matrix};

/// Eigenvalues below this fraction of the largest count as zero variance.
const RANK_TOLERANCE: f64 = 1e-10;

/// Principal directions of a dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcaBasis {
    pub mean: Vec<f64>,
    /// `out_dims × d`, orthonormal rows.
    pub components: Vec<Vec<f64>>,
    /// Per-component variance (divisor `k - 1`), non-increasing.
    pub explained_variance: Vec<f64>,
    /// Numerical rank of the centered data.
    pub rank: usize,
}

impl PcaBasis {
    /// True when zero-variance components were padded in.
    pub fn rank_deficient(&self) -> bool {
        self.components.len() > self.rank
    }

    pub fn transform(&self, data: &Matrix) -> Matrix {
        let mut centered = vec![0.0; self.mean.len()];
        Matrix::from_fn(data.rows(), self.components.len(), |i, c| {
            for ((dst, x), m) in centered.iter_mut().zip(data.row(i)).zip(&self.mean) {
                *dst = x - m;
            }
            dot(&centered, &self.components[c])
        })
    }

    pub fn reconstruct(&self, points: &Matrix) -> Matrix {
        Matrix::from_fn(points.rows(), self.mean.len(), |i, j| {
            self.mean[j]
                + self
                    .components
                    .iter()
                    .zip(points.row(i))
                    .map(|(comp, p)| comp[j] * p)
                    .sum::<f64>()
        })
    }
}

/// Projects `data` (`k × d`) onto its top `out_dims` principal directions.
///
/// The eigenproblem is solved on the smaller of the `d × d` covariance and the
/// `k × k` Gram matrix. Each component is signed so its largest-magnitude
/// entry is positive.
pub fn pca(data: &Matrix, out_dims: usize) -> Result<(Matrix, PcaBasis), DimRedError> {
    let (k, d) = (data.rows(), data.cols());
    if k < 2 {
        return Err(DimRedError::TooFewPoints { needed: 2, got: k });
    }
    if out_dims == 0 || out_dims > (k - 1).min(d) {
        return Err(DimRedError::BadDims {
            requested: out_dims,
            max: (k - 1).min(d),
        });
    }
    if data.as_slice().iter().any(|v| !v.is_finite()) {
        return Err(DimRedError::NonFinite("input data".into()));
    }

    let mut mean = vec![0.0; d];
    for i in 0..k {
        for (m, x) in mean.iter_mut().zip(data.row(i)) {
            *m += x;
        }
    }
    mean.iter_mut().for_each(|m| *m /= k as f64);
    let centered = Matrix::from_fn(k, d, |i, j| data[(i, j)] - mean[j]);
    let denom = (k - 1) as f64;

    let mut components: Vec<Vec<f64>> = Vec::with_capacity(out_dims);
    let mut variances = Vec::with_capacity(out_dims);
    let rank;

    if d <= k {
        let mut cov = centered.transpose().matmul(&centered);
        cov.scale_div(denom);
        let eig = symmetric_eigen(&cov)?;
        let top = eig.values[0].max(0.0);
        rank = eig.values.iter().filter(|&&v| v > RANK_TOLERANCE * top && v > 0.0).count();
        for c in 0..out_dims {
            components.push(eig.vectors.column(c));
            variances.push(if c < rank { eig.values[c] } else { 0.0 });
        }
    } else {
        let gram = centered.matmul(&centered.transpose());
        let eig = symmetric_eigen(&gram)?;
        let top = eig.values[0].max(0.0);
        rank = eig.values.iter().filter(|&&v| v > RANK_TOLERANCE * top && v > 0.0).count();
        for c in 0..out_dims.min(rank) {
            let u = eig.vectors.column(c);
            let norm = eig.values[c].sqrt();
            let v: Vec<f64> = (0..d)
                .map(|j| (0..k).map(|i| centered[(i, j)] * u[i]).sum::<f64>() / norm)
                .collect();
            components.push(v);
            variances.push(eig.values[c] / denom);
        }
        complete_orthonormal(&mut components, d, out_dims);
        variances.resize(out_dims, 0.0);
    }

    for comp in &mut components {
        fix_sign(comp);
    }
    let basis = PcaBasis {
        mean,
        components,
        explained_variance: variances,
        rank,
    };
    let points = basis.transform(data);
    Ok((points, basis))
}

/// Extends `basis` to `target` orthonormal vectors by Gram–Schmidt over the
/// standard basis.
fn complete_orthonormal(basis: &mut Vec<Vec<f64>>, dim: usize, target: usize) {
    let mut e = 0;
    while basis.len() < target && e < dim {
        let mut v = vec![0.0; dim];
        v[e] = 1.0;
        e += 1;
        for _ in 0..2 {
            for b in basis.iter() {
                let proj = dot(&v, b);
                v.iter_mut().zip(b).for_each(|(x, y)| *x -= proj * y);
            }
        }
        let norm = dot(&v, &v).sqrt();
        if norm > 1e-6 {
            v.iter_mut().for_each(|x| *x /= norm);
            basis.push(v);
        }
    }
}

fn fix_sign(v: &mut [f64]) {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if x.abs() > v[best].abs() {
            best = i;
        }
    }
    if v[best] < 0.0 {
        v.iter_mut().for_each(|x| *x = -*x);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn line_y_equals_2x() {
        let data = Matrix::from_fn(6, 2, |i, j| {
            let t = i as f64 - 1.5;
            if j == 0 {
                t
            } else {
                2.0 * t
            }
        });
        let (points, basis) = pca(&data, 2).unwrap();
        let s5 = 5f64.sqrt();
        assert!((basis.components[0][0] - 1.0 / s5).abs() < 1e-12);
        assert!((basis.components[0][1] - 2.0 / s5).abs() < 1e-12);
        assert_eq!(basis.explained_variance[1], 0.0);
        assert_eq!(basis.rank, 1);
        assert!(basis.rank_deficient());
        assert!(points.column(1).iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn isotropic_data() {
        // Four points at (±1, 0), (0, ±1): mean zero, equal variances.
        let data = Matrix::from_rows(&[vec![1.0, 0.0], vec![-1.0, 0.0], vec![0.0, 1.0], vec![0.0, -1.0]]);
        let (_, basis) = pca(&data, 2).unwrap();
        let c = &basis.components;
        assert!(dot(&c[0], &c[1]).abs() < 1e-12);
        assert!((dot(&c[0], &c[0]) - 1.0).abs() < 1e-12);
        let total: f64 = basis.explained_variance.iter().sum();
        assert!((total - 4.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn gram_route_pads_rank_deficient() {
        // 4 points in 10-D spanning a 1-D line: Gram route with padding.
        let data = Matrix::from_fn(4, 10, |i, j| i as f64 * (j as f64 + 1.0));
        let (_, basis) = pca(&data, 3).unwrap();
        assert_eq!(basis.rank, 1);
        assert!(basis.rank_deficient());
        for a in 0..3 {
            for b in 0..3 {
                let expect = if a == b { 1.0 } else { 0.0 };
                assert!((dot(&basis.components[a], &basis.components[b]) - expect).abs() < 1e-9);
            }
        }
        assert_eq!(&basis.explained_variance[1..], &[0.0, 0.0]);
    }

    #[test]
    fn dims_errors() {
        let data = Matrix::zeros(3, 5);
        assert!(matches!(pca(&data, 3), Err(DimRedError::BadDims { .. })));
        assert!(matches!(pca(&Matrix::zeros(1, 3), 1), Err(DimRedError::TooFewPoints { .. })));
    }
}
