mod common;

use common::central;
use hdelm::atfc::{apply_a, full_tfc, mismatch_rows, tfc_level};
use hdelm::problems::FnField;
use hdelm::{BoxDomain, FeatureLayer, FieldDerivs, PointBlock, PointOp, ScalarField};
use proptest::prelude::*;

fn wavy(x: &[f64]) -> f64 {
    x.iter().enumerate().map(|(k, v)| ((k as f64 + 1.0) * v).sin()).sum::<f64>() + x.iter().product::<f64>().exp()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn full_expansion_interpolates_on_faces(d in 1usize..4, face in 0usize..6, u in proptest::collection::vec(0.0f64..1.0, 3)) {
        let dom = BoxDomain::cube(d, -1.0, 2.0, None).unwrap();
        let face = face % (2 * d);
        let mut x: Vec<f64> = u[..d].iter().map(|v| -1.0 + 3.0 * v).collect();
        x[face / 2] = if face % 2 == 0 { -1.0 } else { 2.0 };
        let t = full_tfc(&wavy, &x, &dom).unwrap();
        prop_assert!((t.value - wavy(&x)).abs() < 1e-12);
        prop_assert_eq!(t.terms, 3usize.pow(d as u32) - 1);
    }

    #[test]
    fn face_operator_reproduces_constants(d in 1usize..6, c in -5.0f64..5.0, evolution in any::<bool>(), u in proptest::collection::vec(0.0f64..1.0, 6)) {
        let dom = BoxDomain::cube(d, 0.0, 1.0, evolution.then_some(2.0)).unwrap();
        let mut x = u[..d].to_vec();
        let mut want = d as f64 * c;
        if evolution {
            x.push(2.0 * u[5]);
            want += (2.0 - x[d]) / 2.0 * c;
        }
        let got = apply_a(&dom, &FnField(move |_: &[f64]| c), &x, &PointOp::value()).unwrap();
        prop_assert!((got - want).abs() < 1e-12);
    }

    #[test]
    fn first_level_matches_face_operator(d in 1usize..4, u in proptest::collection::vec(0.0f64..1.0, 3)) {
        let dom = BoxDomain::cube(d, -1.0, 1.0, None).unwrap();
        let x: Vec<f64> = u[..d].iter().map(|v| 2.0 * v - 1.0).collect();
        let a = apply_a(&dom, &FnField(wavy), &x, &PointOp::value()).unwrap();
        let t = tfc_level(&wavy, &x, &dom, 1).unwrap();
        prop_assert!((a - t.value).abs() < 1e-13);
    }
}

/// `sin(x0) cos(2 x1) + x0^3` with exact pure partials.
#[derive(Debug)]
struct Separable;

impl ScalarField for Separable {
    fn value(&self, x: &[f64]) -> f64 {
        x[0].sin() * (2.0 * x[1]).cos() + x[0].powi(3)
    }

    fn derivs(&self, x: &[f64], _max_order: usize) -> FieldDerivs {
        let (s0, c0, s1, c1) = (x[0].sin(), x[0].cos(), (2.0 * x[1]).sin(), (2.0 * x[1]).cos());
        FieldDerivs {
            value: self.value(x),
            grad: vec![c0 * c1 + 3.0 * x[0] * x[0], -2.0 * s0 * s1],
            diag2: vec![-s0 * c1 + 6.0 * x[0], -4.0 * s0 * c1],
            diag3: vec![-c0 * c1 + 6.0, 8.0 * s0 * s1],
        }
    }
}

#[test]
fn derivatives_of_the_face_operator_match_differences() {
    let dom = BoxDomain::cube(2, -1.0, 1.0, None).unwrap();
    let f = Separable;
    let value = |p: &[f64]| apply_a(&dom, &f, p, &PointOp::value()).unwrap();
    for x in [[0.3, -0.2], [-0.7, 0.55], [0.0, 0.9]] {
        let lap = apply_a(&dom, &f, &x, &PointOp::laplacian(2, 2)).unwrap();
        let fd: f64 = (0..2).map(|k| central(&value, &x, k, 2, 1e-4)).sum();
        assert!((lap - fd).abs() < 1e-5, "laplacian {lap} vs {fd}");
        for k in 0..2 {
            let dk = apply_a(&dom, &f, &x, &PointOp::partial(2, k, 1)).unwrap();
            let fd = central(&value, &x, k, 1, 1e-6);
            assert!((dk - fd).abs() < 1e-8, "{dk} vs {fd}");
        }
    }
}

#[test]
fn mismatch_rows_vanish_when_the_boundary_is_a_feature_combination() {
    let dom = BoxDomain::cube(2, -1.0, 1.0, None).unwrap();
    let layer = FeatureLayer::new(2, 15, 1.0, 4).unwrap();
    let phi: Vec<f64> = (0..15).map(|j| (0.3 * j as f64).cos()).collect();
    let l2 = layer.clone();
    let p2 = phi.clone();
    let h = FnField(move |x: &[f64]| l2.predict(&PointBlock::from_rows(2, x.to_vec()).unwrap(), &p2).unwrap()[0]);
    let y = PointBlock::from_rows(2, vec![-1.0, 0.2, 1.0, -0.4, 0.5, -1.0, 0.1, 1.0]).unwrap();
    let (rows, rhs) = mismatch_rows(&layer, &dom, &h, &y).unwrap();
    for i in 0..4 {
        let r: f64 = (0..15).map(|j| rows[(i, j)] * phi[j]).sum();
        assert!((r - rhs[i]).abs() < 1e-12);
    }
}
