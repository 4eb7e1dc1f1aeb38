//! Exact t-SNE.
//!
//! Per-point Gaussian bandwidths are found by bisection so every conditional
//! distribution has the requested perplexity (entropy `log2(perplexity)`
//! bits). The symmetrized affinities are matched by a Student-t embedding
//! through gradient descent with momentum, per-parameter gains and early
//! exaggeration.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::DimRedError;
use crate::matrix::Matrix;

pub const EXAGGERATION: f64 = 12.0;
pub const EXAGGERATION_STEPS: usize = 250;
pub const MOMENTUM_SWITCH: usize = 250;
pub const INITIAL_MOMENTUM: f64 = 0.5;
pub const FINAL_MOMENTUM: f64 = 0.8;
pub const INIT_STD: f64 = 1e-4;
const MIN_GAIN: f64 = 0.01;
const ENTROPY_TOL: f64 = 1e-10;
const MAX_BISECTION: usize = 200;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TsneParams {
    pub perplexity: f64,
    pub iterations: usize,
    pub learning_rate: f64,
    pub seed: u64,
}

impl Default for TsneParams {
    fn default() -> Self {
        Self {
            perplexity: 30.0,
            iterations: 1000,
            learning_rate: 200.0,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TsneResult {
    /// `k × 2`.
    pub points: Matrix,
    /// KL(P‖Q) at the initial layout, without exaggeration.
    pub initial_kl: f64,
    pub final_kl: f64,
}

/// Symmetrized input affinities.
#[derive(Debug, Clone, PartialEq)]
pub struct Affinities {
    /// `P_ij = (p_{j|i} + p_{i|j}) / 2k`, zero diagonal.
    pub joint: Matrix,
    /// Entropy in bits of each conditional distribution `p_{·|i}`.
    pub entropies: Vec<f64>,
    /// Gaussian precision `β_i = 1 / 2σ_i²`.
    pub betas: Vec<f64>,
}

pub fn squared_distances(data: &Matrix) -> Matrix {
    let k = data.rows();
    let mut d = Matrix::zeros(k, k);
    for i in 0..k {
        for j in i + 1..k {
            let s: f64 = data
                .row(i)
                .iter()
                .zip(data.row(j))
                .map(|(a, b)| (a - b) * (a - b))
                .sum();
            d[(i, j)] = s;
            d[(j, i)] = s;
        }
    }
    d
}

/// Conditional distribution of row `i` at precision `beta`, returning its
/// entropy in nats. Distances are shifted by the row minimum for stability.
fn conditional_row(dist: &[f64], i: usize, beta: f64, out: &mut [f64]) -> f64 {
    let min = dist
        .iter()
        .enumerate()
        .filter(|&(j, _)| j != i)
        .map(|(_, &v)| v)
        .fold(f64::INFINITY, f64::min);
    let mut sum = 0.0;
    for (j, (o, &dj)) in out.iter_mut().zip(dist).enumerate() {
        *o = if j == i { 0.0 } else { (-(dj - min) * beta).exp() };
        sum += *o;
    }
    let mut h = 0.0;
    for o in out.iter_mut() {
        *o /= sum;
        if *o > 0.0 {
            h -= *o * o.ln();
        }
    }
    h
}

pub fn check_perplexity(k: usize, perplexity: f64) -> Result<(), DimRedError> {
    if k < 4 {
        return Err(DimRedError::TooFewPoints { needed: 4, got: k });
    }
    let max = (k - 1) as f64 / 3.0;
    if !(perplexity >= 1.0 && perplexity <= max) {
        return Err(DimRedError::BadPerplexity { perplexity, max });
    }
    Ok(())
}

pub fn affinities(data: &Matrix, perplexity: f64) -> Result<Affinities, DimRedError> {
    let k = data.rows();
    check_perplexity(k, perplexity)?;
    let dist = squared_distances(data);
    let target = perplexity.ln();
    let mut cond = Matrix::zeros(k, k);
    let mut entropies = Vec::with_capacity(k);
    let mut betas = Vec::with_capacity(k);

    for i in 0..k {
        let row = dist.row(i);
        let mean_d = row.iter().sum::<f64>() / (k - 1) as f64;
        let mut beta = if mean_d > 0.0 { 1.0 / mean_d } else { 1.0 };
        let (mut lo, mut hi) = (0.0f64, f64::INFINITY);
        let mut p = vec![0.0; k];
        let mut h = conditional_row(row, i, beta, &mut p);
        for _ in 0..MAX_BISECTION {
            let diff = h - target;
            if diff.abs() < ENTROPY_TOL {
                break;
            }
            if diff > 0.0 {
                lo = beta;
                beta = if hi.is_finite() { (beta + hi) / 2.0 } else { beta * 2.0 };
            } else {
                hi = beta;
                beta = (beta + lo) / 2.0;
            }
            h = conditional_row(row, i, beta, &mut p);
        }
        cond.row_mut(i).copy_from_slice(&p);
        entropies.push(h / std::f64::consts::LN_2);
        betas.push(beta);
    }

    let denom = 2.0 * k as f64;
    let joint = Matrix::from_fn(k, k, |i, j| (cond[(i, j)] + cond[(j, i)]) / denom);
    Ok(Affinities {
        joint,
        entropies,
        betas,
    })
}

fn student_kernel(y: &Matrix, num: &mut Matrix) -> f64 {
    let k = y.rows();
    let mut sum = 0.0;
    for i in 0..k {
        for j in i + 1..k {
            let dx = y[(i, 0)] - y[(j, 0)];
            let dy = y[(i, 1)] - y[(j, 1)];
            let v = 1.0 / (1.0 + dx * dx + dy * dy);
            num[(i, j)] = v;
            num[(j, i)] = v;
            sum += 2.0 * v;
        }
    }
    sum
}

/// KL(P‖Q) for the layout `y`.
pub fn kl_divergence(p: &Matrix, y: &Matrix) -> f64 {
    let k = y.rows();
    let mut num = Matrix::zeros(k, k);
    let sum = student_kernel(y, &mut num);
    kl_from_kernel(p, &num, sum)
}

fn kl_from_kernel(p: &Matrix, num: &Matrix, sum: f64) -> f64 {
    let k = p.rows();
    let mut kl = 0.0;
    for i in 0..k {
        for j in 0..k {
            let pij = p[(i, j)];
            if i != j && pij > 0.0 {
                let q = (num[(i, j)] / sum).max(1e-300);
                kl += pij * (pij / q).ln();
            }
        }
    }
    kl
}

pub fn tsne(data: &Matrix, params: &TsneParams) -> Result<TsneResult, DimRedError> {
    if data.as_slice().iter().any(|v| !v.is_finite()) {
        return Err(DimRedError::NonFinite("input data".into()));
    }
    let aff = affinities(data, params.perplexity)?;
    let p = aff.joint;
    let k = data.rows();

    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let normal = Normal::new(0.0, INIT_STD).expect("finite std");
    let mut y = Matrix::from_fn(k, 2, |_, _| normal.sample(&mut rng));
    let initial_kl = kl_divergence(&p, &y);

    let mut velocity = Matrix::zeros(k, 2);
    let mut gains = Matrix::from_fn(k, 2, |_, _| 1.0);
    let mut num = Matrix::zeros(k, k);
    let mut grad = Matrix::zeros(k, 2);
    let mut exaggeration = EXAGGERATION;

    for iter in 0..params.iterations {
        if iter == EXAGGERATION_STEPS {
            exaggeration = 1.0;
        }
        let sum = student_kernel(&y, &mut num);
        for i in 0..k {
            let (mut gx, mut gy) = (0.0, 0.0);
            for j in 0..k {
                if i == j {
                    continue;
                }
                let w = (exaggeration * p[(i, j)] - num[(i, j)] / sum) * num[(i, j)];
                gx += w * (y[(i, 0)] - y[(j, 0)]);
                gy += w * (y[(i, 1)] - y[(j, 1)]);
            }
            grad[(i, 0)] = 4.0 * gx;
            grad[(i, 1)] = 4.0 * gy;
        }

        let momentum = if iter < MOMENTUM_SWITCH {
            INITIAL_MOMENTUM
        } else {
            FINAL_MOMENTUM
        };
        for idx in 0..2 * k {
            let g = grad.as_slice()[idx];
            let vel = velocity.as_slice()[idx];
            let gain = &mut gains.as_mut_slice()[idx];
            *gain = if (g > 0.0) != (vel > 0.0) {
                *gain + 0.2
            } else {
                (*gain * 0.8).max(MIN_GAIN)
            };
            let step = momentum * vel - params.learning_rate * *gain * g;
            velocity.as_mut_slice()[idx] = step;
            y.as_mut_slice()[idx] += step;
        }
        for c in 0..2 {
            let mean = (0..k).map(|i| y[(i, c)]).sum::<f64>() / k as f64;
            for i in 0..k {
                y[(i, c)] -= mean;
            }
        }
        if y.as_slice().iter().any(|v| !v.is_finite()) {
            return Err(DimRedError::NonFinite(format!("t-SNE layout at iteration {iter}")));
        }
    }

    let final_kl = kl_divergence(&p, &y);
    if !final_kl.is_finite() {
        return Err(DimRedError::NonFinite("t-SNE cost".into()));
    }
    Ok(TsneResult {
        points: y,
        initial_kl,
        final_kl,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn blobs(seed: u64) -> Matrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Matrix::from_fn(12, 5, |i, _| (i / 4) as f64 * 5.0 + rng.random_range(-0.5..0.5))
    }

    #[test]
    fn affinities_normalize_and_hit_perplexity() {
        let data = blobs(1);
        let aff = affinities(&data, 3.0).unwrap();
        let total: f64 = aff.joint.as_slice().iter().sum();
        assert!((total - 1.0).abs() < 1e-12);
        for h in &aff.entropies {
            assert!((h - 3f64.log2()).abs() < 1e-6, "{h}");
        }
    }

    #[test]
    fn rejects_bad_perplexity() {
        let data = blobs(2);
        assert!(matches!(affinities(&data, 4.0), Err(DimRedError::BadPerplexity { .. })));
        assert!(matches!(affinities(&data, 0.5), Err(DimRedError::BadPerplexity { .. })));
        assert!(matches!(
            affinities(&Matrix::zeros(3, 2), 1.0),
            Err(DimRedError::TooFewPoints { .. })
        ));
    }

    #[test]
    fn deterministic_and_improving() {
        let data = blobs(3);
        let params = TsneParams {
            perplexity: 3.0,
            iterations: 300,
            ..TsneParams::default()
        };
        let a = tsne(&data, &params).unwrap();
        let b = tsne(&data, &params).unwrap();
        assert_eq!(a, b);
        assert!(a.final_kl < a.initial_kl);
    }

    #[test]
    fn rejects_non_finite_input() {
        let mut data = blobs(4);
        data[(0, 0)] = f64::NAN;
        assert!(matches!(tsne(&data, &TsneParams::default()), Err(DimRedError::NonFinite(_))));
    }
}
