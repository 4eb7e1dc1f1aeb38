use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use scanlens_core::attention::signed_route_attention;
use scanlens_core::dimred::pca;
use scanlens_core::orders::{grid_to_seq, permutation, seq_to_grid};
use scanlens_core::ssm::{discretize, selective_scan, RouteParams};
use scanlens_core::{GridShape, Matrix, ScanOrder};

fn any_order() -> impl Strategy<Value = ScanOrder> {
    prop::sample::select(ScanOrder::ALL.to_vec())
}

fn random_matrix(rows: usize, cols: usize, seed: u64) -> Matrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Matrix::from_fn(rows, cols, |_, _| rng.random_range(-1.0..1.0))
}

proptest! {
    #[test]
    fn orders_are_bijections(order in any_order(), rows in 1usize..12, cols in 1usize..12) {
        let shape = GridShape::new(rows, cols).unwrap();
        prop_assume!(order.supports(shape).is_ok());
        let perm = permutation(order, shape).unwrap();
        let mut seen = vec![false; shape.patch_count()];
        for pos in 0..shape.patch_count() {
            let c = seq_to_grid(order, shape, pos).unwrap();
            prop_assert_eq!(grid_to_seq(order, shape, c).unwrap(), pos);
            let idx = shape.canonical_index(c).unwrap();
            prop_assert!(!seen[idx]);
            seen[idx] = true;
            prop_assert_eq!(perm.inverse()[perm.forward()[pos]], pos);
        }
    }

    #[test]
    fn reverse_orders_mirror_their_base(order in any_order(), side in 1usize..10) {
        let shape = GridShape::square(side).unwrap();
        prop_assume!(order.supports(shape).is_ok());
        let n = shape.patch_count();
        let a = permutation(order, shape).unwrap();
        let b = permutation(order.reversed(), shape).unwrap();
        for pos in 0..n {
            prop_assert_eq!(a.forward()[pos], b.forward()[n - 1 - pos]);
        }
    }

    #[test]
    fn scan_is_linear_and_causal_for_fixed_discretization(
        len in 1usize..20, seed in any::<u64>(), t in 0usize..20, alpha in -2.0f64..2.0,
    ) {
        let t = t % len;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let params = RouteParams::init(ScanOrder::CrossScanRoute1, 3, 2, &mut rng);
        let disc = discretize(&params, &random_matrix(len, 3, seed ^ 1)).unwrap();
        let x = random_matrix(len, 3, seed ^ 2);
        let z = random_matrix(len, 3, seed ^ 3);
        let combo = Matrix::from_fn(len, 3, |i, d| x[(i, d)] + alpha * z[(i, d)]);
        let (yx, yz, yc) = (
            selective_scan(&disc, &x).unwrap(),
            selective_scan(&disc, &z).unwrap(),
            selective_scan(&disc, &combo).unwrap(),
        );
        for i in 0..len {
            for d in 0..3 {
                prop_assert!((yc[(i, d)] - yx[(i, d)] - alpha * yz[(i, d)]).abs() < 1e-9);
            }
        }
        let mut bumped = x.clone();
        bumped[(t, 1)] += 1.0;
        let yb = selective_scan(&disc, &bumped).unwrap();
        for i in 0..t {
            prop_assert_eq!(yb.row(i), yx.row(i));
        }
    }

    #[test]
    fn signed_attention_reproduces_scan(len in 1usize..24, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let params = RouteParams::init(ScanOrder::CrossScanRoute2, 4, 3, &mut rng);
        let x = random_matrix(len, 4, seed ^ 9);
        let disc = discretize(&params, &x).unwrap();
        let y = selective_scan(&disc, &x).unwrap();
        let via = signed_route_attention(&disc).apply(&x);
        prop_assert!(y.max_abs_diff(&via) < 1e-10);
    }

    #[test]
    fn pca_is_translation_invariant(seed in any::<u64>(), shift in -50.0f64..50.0) {
        let data = random_matrix(12, 5, seed);
        let moved = Matrix::from_fn(12, 5, |i, j| data[(i, j)] + shift * (j as f64 + 1.0));
        let (a, _) = pca(&data, 2).unwrap();
        let (b, _) = pca(&moved, 2).unwrap();
        prop_assert!(a.max_abs_diff(&b) < 1e-9);
    }
}
