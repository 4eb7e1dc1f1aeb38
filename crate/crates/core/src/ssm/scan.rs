//! Token-dependent discretization and the selective-scan recurrence.
//!
//! For the token `x` at route position `i`:
//!
//! ```text
//! Δ_i  = softplus(W_Δ x + b_Δ)          (D)
//! Ā_i  = exp(Δ_i ⊙ A)                   (N × D, A < 0)
//! B̄_i  = Δ_i ⊙ (W_B x)                  (N × D, Euler)
//! C_i  = W_C x                          (N)
//!
//! h_0 = 0,  h_i = Ā_i ⊙ h_{i-1} + B̄_i ⊙ x_i,  y_i[d] = Σ_n C_i[n] h_i[n][d]
//! ```
//!
//! There is no skip term, so the output is fully explained by the hidden
//! attention operator in [`crate::attention`].

use super::params::{softplus, RouteParams};
use super::ModelError;
use crate::matrix::Matrix;
use crate::orders::ScanOrder;

/// Frozen per-position scan parameters of one route, in route order.
///
/// Storage is `[position][state][channel]` for `Ā` and `B̄`, `[position][state]`
/// for `C`. `Ā` is kept as its logarithm `Δ ⊙ A` so long products can be
/// formed without underflow.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscretizedRoute {
    order: ScanOrder,
    len: usize,
    state_dim: usize,
    channels: usize,
    log_a_bar: Vec<f64>,
    b_bar: Vec<f64>,
    c: Vec<f64>,
}

impl DiscretizedRoute {
    /// Builds a route from raw buffers; `log_a_bar` entries must be finite and `≤ 0`.
    pub fn from_parts(
        order: ScanOrder,
        len: usize,
        state_dim: usize,
        channels: usize,
        log_a_bar: Vec<f64>,
        b_bar: Vec<f64>,
        c: Vec<f64>,
    ) -> Result<Self, ModelError> {
        let nd = len * state_dim * channels;
        if log_a_bar.len() != nd || b_bar.len() != nd || c.len() != len * state_dim {
            return Err(ModelError::ShapeMismatch(format!(
                "discretized route buffers do not match length {len}, state {state_dim}, channels {channels}"
            )));
        }
        if log_a_bar.iter().any(|v| !v.is_finite() || *v > 0.0) {
            return Err(ModelError::ShapeMismatch("log Ā entries must be finite and non-positive".into()));
        }
        Ok(Self {
            order,
            len,
            state_dim,
            channels,
            log_a_bar,
            b_bar,
            c,
        })
    }

    pub fn order(&self) -> ScanOrder {
        self.order
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn state_dim(&self) -> usize {
        self.state_dim
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    #[inline]
    fn at(&self, i: usize, n: usize, d: usize) -> usize {
        (i * self.state_dim + n) * self.channels + d
    }

    pub fn log_a_bar(&self, i: usize, n: usize, d: usize) -> f64 {
        self.log_a_bar[self.at(i, n, d)]
    }

    pub fn a_bar(&self, i: usize, n: usize, d: usize) -> f64 {
        self.log_a_bar(i, n, d).exp()
    }

    pub fn b_bar(&self, i: usize, n: usize, d: usize) -> f64 {
        self.b_bar[self.at(i, n, d)]
    }

    pub fn c(&self, i: usize, n: usize) -> f64 {
        self.c[i * self.state_dim + n]
    }

    /// `log Ā` for position `i`, laid out `[state][channel]`.
    pub fn log_a_bar_at(&self, i: usize) -> &[f64] {
        let w = self.state_dim * self.channels;
        &self.log_a_bar[i * w..(i + 1) * w]
    }

    pub fn b_bar_at(&self, i: usize) -> &[f64] {
        let w = self.state_dim * self.channels;
        &self.b_bar[i * w..(i + 1) * w]
    }

    pub fn c_at(&self, i: usize) -> &[f64] {
        &self.c[i * self.state_dim..(i + 1) * self.state_dim]
    }
}

/// Per-route scan parameters of one block, in the block's route order.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscretizedScan {
    pub routes: Vec<DiscretizedRoute>,
}

/// Discretizes a token sequence already arranged in `params.order`.
pub fn discretize(params: &RouteParams, sequence: &Matrix) -> Result<DiscretizedRoute, ModelError> {
    let d_model = params.channels();
    if sequence.cols() != d_model {
        return Err(ModelError::ShapeMismatch(format!(
            "tokens have width {} but route expects {d_model}",
            sequence.cols()
        )));
    }
    let len = sequence.rows();
    let n_state = params.state_dim();
    let mut log_a_bar = Vec::with_capacity(len * n_state * d_model);
    let mut b_bar = Vec::with_capacity(len * n_state * d_model);
    let mut c = Vec::with_capacity(len * n_state);

    for i in 0..len {
        let x = sequence.row(i);
        let delta: Vec<f64> = params
            .w_delta
            .mul_vec(x)
            .iter()
            .zip(&params.b_delta)
            .map(|(z, b)| softplus(z + b))
            .collect();
        let b = params.w_b.mul_vec(x);
        for n in 0..n_state {
            for d in 0..d_model {
                log_a_bar.push(delta[d] * params.a(n, d));
                b_bar.push(delta[d] * b[n]);
            }
        }
        c.extend(params.w_c.mul_vec(x));
    }
    DiscretizedRoute::from_parts(params.order, len, n_state, d_model, log_a_bar, b_bar, c)
}

/// Runs the recurrence over `inputs` (`len × D`, route order).
pub fn selective_scan(disc: &DiscretizedRoute, inputs: &Matrix) -> Result<Matrix, ModelError> {
    if inputs.rows() != disc.len || inputs.cols() != disc.channels {
        return Err(ModelError::ShapeMismatch(format!(
            "scan inputs are {}x{} but the route has length {} and {} channels",
            inputs.rows(),
            inputs.cols(),
            disc.len,
            disc.channels
        )));
    }
    let (n_state, d_model) = (disc.state_dim, disc.channels);
    let mut h = vec![0.0; n_state * d_model];
    let mut out = Matrix::zeros(disc.len, d_model);
    for i in 0..disc.len {
        let x = inputs.row(i);
        let la = disc.log_a_bar_at(i);
        let bb = disc.b_bar_at(i);
        let c = disc.c_at(i);
        let y = out.row_mut(i);
        for n in 0..n_state {
            for d in 0..d_model {
                let k = n * d_model + d;
                h[k] = la[k].exp() * h[k] + bb[k] * x[d];
                y[d] += c[n] * h[k];
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ssm::params::RouteParams;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn seeded_route(len: usize, n: usize, d: usize, seed: u64) -> (RouteParams, Matrix) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let params = RouteParams::init(ScanOrder::CrossScanRoute1, d, n, &mut rng);
        let xs = Matrix::from_fn(len, d, |i, j| ((i * 7 + j * 3) % 5) as f64 / 5.0 - 0.4);
        (params, xs)
    }

    #[test]
    fn hand_evaluated_scalar_case() {
        let params = RouteParams {
            order: ScanOrder::CrossScanRoute1,
            a_log: Matrix::from_vec(1, 1, vec![0.0]),
            w_delta: Matrix::from_vec(1, 1, vec![0.3]),
            b_delta: vec![-0.2],
            w_b: Matrix::from_vec(1, 1, vec![2.0]),
            w_c: Matrix::from_vec(1, 1, vec![-1.5]),
        };
        let disc = discretize(&params, &Matrix::from_vec(1, 1, vec![1.0])).unwrap();
        let dt = (1.0 + f64::exp(0.3 - 0.2)).ln();
        assert!((disc.a_bar(0, 0, 0) - (-dt).exp()).abs() < 1e-15);
        assert!((disc.b_bar(0, 0, 0) - 2.0 * dt).abs() < 1e-15);
        assert_eq!(disc.c(0, 0), -1.5);
    }

    #[test]
    fn large_negative_bias_limit() {
        let (mut params, xs) = seeded_route(3, 2, 3, 1);
        params.b_delta = vec![-60.0; 3];
        let disc = discretize(&params, &xs).unwrap();
        for i in 0..3 {
            for n in 0..2 {
                for d in 0..3 {
                    assert!((disc.a_bar(i, n, d) - 1.0).abs() < 1e-20);
                    assert!(disc.b_bar(i, n, d).abs() < 1e-20);
                }
            }
        }
    }

    #[test]
    fn a_bar_strictly_inside_unit_interval() {
        let (params, xs) = seeded_route(16, 4, 8, 2);
        let disc = discretize(&params, &xs).unwrap();
        for i in 0..16 {
            for n in 0..4 {
                for d in 0..8 {
                    let a = disc.a_bar(i, n, d);
                    assert!(a > 0.0 && a < 1.0, "{a}");
                }
            }
        }
    }

    #[test]
    fn length_one_scan() {
        let (params, xs) = seeded_route(1, 3, 4, 3);
        let disc = discretize(&params, &xs).unwrap();
        let y = selective_scan(&disc, &xs).unwrap();
        for d in 0..4 {
            let cb: f64 = (0..3).map(|n| disc.c(0, n) * disc.b_bar(0, n, d)).sum();
            assert!((y[(0, d)] - cb * xs[(0, d)]).abs() < 1e-14);
        }
    }

    #[test]
    fn zero_b_bar_gives_zero_output() {
        let (mut params, xs) = seeded_route(5, 2, 3, 4);
        params.w_b = Matrix::zeros(2, 3);
        let disc = discretize(&params, &xs).unwrap();
        let y = selective_scan(&disc, &xs).unwrap();
        assert!(y.as_slice().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn matches_hand_unrolled_length_three() {
        let (params, xs) = seeded_route(3, 2, 2, 5);
        let disc = discretize(&params, &xs).unwrap();
        let y = selective_scan(&disc, &xs).unwrap();
        for d in 0..2 {
            // h1 = B̄1 x1; h2 = Ā2 h1 + B̄2 x2; h3 = Ā3 h2 + B̄3 x3, per state.
            let mut expect = [0.0; 3];
            for n in 0..2 {
                let h1 = disc.b_bar(0, n, d) * xs[(0, d)];
                let h2 = disc.a_bar(1, n, d) * h1 + disc.b_bar(1, n, d) * xs[(1, d)];
                let h3 = disc.a_bar(2, n, d) * h2 + disc.b_bar(2, n, d) * xs[(2, d)];
                expect[0] += disc.c(0, n) * h1;
                expect[1] += disc.c(1, n) * h2;
                expect[2] += disc.c(2, n) * h3;
            }
            for i in 0..3 {
                assert!((y[(i, d)] - expect[i]).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn shape_errors() {
        let (params, xs) = seeded_route(3, 2, 2, 6);
        assert!(discretize(&params, &Matrix::zeros(3, 5)).is_err());
        let disc = discretize(&params, &xs).unwrap();
        assert!(selective_scan(&disc, &Matrix::zeros(4, 2)).is_err());
        assert!(DiscretizedRoute::from_parts(ScanOrder::Spiral, 1, 1, 1, vec![0.5], vec![0.0], vec![0.0]).is_err());
    }
}
