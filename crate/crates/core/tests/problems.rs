mod common;

use common::{central, lcg_points};
use hdelm::problems::{apply_linear, verify_manufactured, CATALOG};
use hdelm::{make_problem, Error, FeatureLayer, LinearOperatorSpec, PointBlock};

#[test]
fn poisson_operator_matches_differences_of_predictions() {
    let p = make_problem("poisson", 3).unwrap();
    let layer = FeatureLayer::new(3, 10, 0.8, 6).unwrap();
    let pts = lcg_points(3, 5, -0.9, 0.9, 2);
    let a = apply_linear(&p.linear, &p.domain, &layer.eval_features(&pts, 2).unwrap()).unwrap();
    let phi: Vec<f64> = (0..10).map(|j| 1.0 / (j as f64 + 1.0)).collect();
    let u = |x: &[f64]| layer.predict(&PointBlock::from_rows(3, x.to_vec()).unwrap(), &phi).unwrap()[0];
    for (i, x) in pts.iter().enumerate() {
        let got: f64 = (0..10).map(|j| a[(i, j)] * phi[j]).sum();
        let want = -(0..3).map(|k| central(&u, x, k, 2, 1e-4)).sum::<f64>();
        assert!((got - want).abs() < 1e-6, "{got} vs {want}");
    }
}

#[test]
fn every_catalog_problem_is_consistent() {
    for name in CATALOG {
        for d in [1, 4] {
            let p = make_problem(name, d).unwrap();
            let pts = lcg_points(p.domain.dim_total(), 20, -0.9, 0.9, d as u64).iter().map(|x| {
                let mut y = x.to_vec();
                if let Some(t) = p.domain.time_index() {
                    y[t] = 0.5 * (y[t] + 1.0);
                }
                y
            }).fold(PointBlock::new(p.domain.dim_total()), |mut b, y| {
                b.push(&y);
                b
            });
            let worst = verify_manufactured(&p, &pts).unwrap();
            // third differences at h = 1e-2 carry about h²/4 · |∂⁵u| truncation
            let tol = if p.max_order() == 3 { 5e-5 } else { 1e-5 };
            assert!(worst < tol, "{name} d={d}: {worst:e}");
        }
    }
}

#[test]
fn unknown_names_and_bad_operators_are_rejected() {
    assert!(matches!(make_problem("wave", 2), Err(Error::NotFound(_))));
    assert!(make_problem("poisson", 0).is_err());
    let stationary = make_problem("poisson", 2).unwrap().domain;
    assert!(LinearOperatorSpec { c_time: 1.0, ..Default::default() }.validate(&stationary).is_err());
    assert!(LinearOperatorSpec { advection: vec![1.0; 3], ..Default::default() }.validate(&stationary).is_err());
}

#[test]
fn operator_order_drives_required_derivatives() {
    let p = make_problem("kdv", 2).unwrap();
    let layer = FeatureLayer::new(3, 4, 1.0, 1).unwrap();
    let pts = lcg_points(3, 2, 0.0, 0.5, 1);
    assert!(apply_linear(&p.linear, &p.domain, &layer.eval_features(&pts, 2).unwrap()).is_err());
    assert!(apply_linear(&p.linear, &p.domain, &layer.eval_features(&pts, 3).unwrap()).is_ok());
}
