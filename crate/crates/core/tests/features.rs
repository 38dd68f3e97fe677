mod common;

use common::{central, lcg_points, neuron, rel_err};
use hdelm::{FeatureLayer, OpBatch, PointBlock, PointOp};
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn values_match_direct_tanh(seed in 0u64..10_000, dim in 1usize..6, width in 1usize..40, r_m in 0.01f64..3.0) {
        let layer = FeatureLayer::new(dim, width, r_m, seed).unwrap();
        let pts = lcg_points(dim, 7, -1.0, 1.0, seed ^ 0x55);
        let ev = layer.eval_features(&pts, 0).unwrap();
        for (i, x) in pts.iter().enumerate() {
            for j in 0..width {
                prop_assert!((ev.values[(i, j)] - neuron(&layer, j, x)).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn first_derivatives_match_differences(seed in 0u64..10_000, dim in 1usize..5, r_m in 0.05f64..2.0) {
        let layer = FeatureLayer::new(dim, 12, r_m, seed).unwrap();
        let pts = lcg_points(dim, 4, -1.0, 1.0, seed);
        let ev = layer.eval_features(&pts, 3).unwrap();
        for (i, x) in pts.iter().enumerate() {
            for j in 0..12 {
                for k in 0..dim {
                    let fd = central(&|p| neuron(&layer, j, p), x, k, 1, 1e-5);
                    prop_assert!(rel_err(ev.grad[k][(i, j)], fd, 1e-3) < 1e-6);
                    let g = |p: &[f64]| {
                        let one = PointBlock::from_rows(dim, p.to_vec()).unwrap();
                        layer.eval_features(&one, 1).unwrap().grad[k][(0, j)]
                    };
                    let fd2 = central(&g, x, k, 1, 1e-5);
                    prop_assert!(rel_err(ev.diag2[k][(i, j)], fd2, 1e-3) < 1e-6);
                }
            }
        }
    }

    #[test]
    fn seeds_reproduce_and_bounds_hold(seed in any::<u64>(), r_m in 1e-3f64..5.0) {
        let a = FeatureLayer::new(3, 20, r_m, seed).unwrap();
        let b = FeatureLayer::new(3, 20, r_m, seed).unwrap();
        prop_assert_eq!(a.biases(), b.biases());
        prop_assert!(a.biases().iter().all(|v| v.abs() <= r_m));
        let w = a.weights();
        for j in 0..20 {
            for k in 0..3 {
                prop_assert_eq!(w[(j, k)], b.weights()[(j, k)]);
                prop_assert!(w[(j, k)].abs() <= r_m);
            }
        }
    }

    #[test]
    fn concatenated_blocks_evaluate_rowwise(seed in 0u64..1000, n1 in 1usize..20, n2 in 1usize..20) {
        let layer = FeatureLayer::new(2, 9, 1.0, seed).unwrap();
        let p1 = lcg_points(2, n1, -1.0, 1.0, seed + 1);
        let p2 = lcg_points(2, n2, -1.0, 1.0, seed + 2);
        let both = PointBlock::concat(2, [&p1, &p2]);
        let (e1, e2, e) = (
            layer.eval_features(&p1, 2).unwrap(),
            layer.eval_features(&p2, 2).unwrap(),
            layer.eval_features(&both, 2).unwrap(),
        );
        for j in 0..9 {
            for i in 0..n1 {
                prop_assert_eq!(e.diag2[1][(i, j)], e1.diag2[1][(i, j)]);
            }
            for i in 0..n2 {
                prop_assert_eq!(e.values[(n1 + i, j)], e2.values[(i, j)]);
            }
        }
    }
}

#[test]
fn prediction_is_linear_in_coefficients() {
    let layer = FeatureLayer::new(4, 30, 0.7, 3).unwrap();
    let pts = lcg_points(4, 50, -1.0, 1.0, 9);
    let a: Vec<f64> = (0..30).map(|j| (j as f64 * 0.37).sin()).collect();
    let b: Vec<f64> = (0..30).map(|j| (j as f64 * 1.3).cos()).collect();
    let ab: Vec<f64> = a.iter().zip(&b).map(|(x, y)| 2.0 * x - 3.0 * y).collect();
    let (pa, pb, pab) = (layer.predict(&pts, &a).unwrap(), layer.predict(&pts, &b).unwrap(), layer.predict(&pts, &ab).unwrap());
    for i in 0..50 {
        assert!((pab[i] - (2.0 * pa[i] - 3.0 * pb[i])).abs() < 1e-12);
    }
}

#[test]
fn batched_laplacian_matches_summed_diagonals() {
    let layer = FeatureLayer::new(3, 25, 1.0, 11).unwrap();
    let pts = lcg_points(3, 600, -1.0, 1.0, 4);
    let ev = layer.eval_features(&pts, 2).unwrap();
    let mut batch = OpBatch::new(3);
    let lap = PointOp::laplacian(3, 3);
    for (i, x) in pts.iter().enumerate() {
        batch.push(i, x, 1.0, &lap);
    }
    let m = batch.evaluate(&layer, 600).unwrap();
    for i in 0..600 {
        for j in 0..25 {
            let want: f64 = (0..3).map(|k| ev.diag2[k][(i, j)]).sum();
            assert!((m[(i, j)] - want).abs() < 1e-12);
        }
    }
}
