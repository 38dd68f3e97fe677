mod common;

use common::normal_equations;
use faer::Mat;
use hdelm::lsq::{gauss_newton_trust, nllsq_perturb};
use hdelm::{min_norm_lsq, NllsqOptions};
use proptest::prelude::*;

fn mat(n: usize, m: usize, f: impl Fn(usize, usize) -> f64) -> Mat<f64> {
    Mat::from_fn(n, m, f)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn solution_satisfies_normal_equations(entries in proptest::collection::vec(-1.0f64..1.0, 15 * 6), b in proptest::collection::vec(-3.0f64..3.0, 15)) {
        let a = mat(15, 6, |i, j| entries[i * 6 + j] + if i == j { 2.0 } else { 0.0 });
        let s = min_norm_lsq(&a, &b).unwrap();
        let want = normal_equations(&a, &b);
        for j in 0..6 {
            prop_assert!((s.phi[j] - want[j]).abs() < 1e-9 * (1.0 + want[j].abs()));
        }
        prop_assert_eq!(s.rank, Some(6));
    }
}

#[test]
fn rank_deficient_solution_is_orthogonal_to_the_null_space() {
    // columns 2 and 3 repeat column 0 and 1, so (1,0,-1,0) and (0,1,0,-1) span the null space
    let base = mat(10, 2, |i, j| ((i + 1) as f64 * (j as f64 + 0.5)).sin());
    let a = mat(10, 4, |i, j| base[(i, j % 2)]);
    let b: Vec<f64> = (0..10).map(|i| i as f64 * 0.1 - 0.4).collect();
    let s = min_norm_lsq(&a, &b).unwrap();
    assert_eq!(s.rank, Some(2));
    assert!((s.phi[0] - s.phi[2]).abs() < 1e-12 && (s.phi[1] - s.phi[3]).abs() < 1e-12);
    let reduced = normal_equations(&base, &b);
    assert!((2.0 * s.phi[0] - reduced[0]).abs() < 1e-10);
    assert!((2.0 * s.phi[1] - reduced[1]).abs() < 1e-10);
}

#[test]
fn gauss_newton_solves_a_linear_problem_in_one_step() {
    let a = mat(8, 3, |i, j| ((i * 3 + j) as f64).cos() + if i == j { 3.0 } else { 0.0 });
    let b: Vec<f64> = (0..8).map(|i| (i as f64).sin()).collect();
    let a2 = a.clone();
    let b2 = b.clone();
    let res = move |p: &[f64]| (0..8).map(|i| (0..3).map(|j| a2[(i, j)] * p[j]).sum::<f64>() - b2[i]).collect::<Vec<_>>();
    let a3 = a.clone();
    let r = gauss_newton_trust(&res, &move |_: &[f64]| a3.clone(), &[0.0; 3], &NllsqOptions::default()).unwrap();
    let want = normal_equations(&a, &b);
    for j in 0..3 {
        assert!((r.phi[j] - want[j]).abs() < 1e-12);
    }
}

#[test]
fn perturbed_restarts_leave_the_stationary_start() {
    // gradient vanishes at 0 for (x^2 - 1, y^2 - 4); restarts are needed
    let res = |p: &[f64]| vec![p[0] * p[0] - 1.0, p[1] * p[1] - 4.0];
    let jac = |p: &[f64]| mat(2, 2, |i, j| if i == j { 2.0 * p[i] } else { 0.0 });
    let r = nllsq_perturb(&res, &jac, 2, &NllsqOptions { seed: 9, ..Default::default() }).unwrap();
    assert!(r.converged);
    assert!(r.restarts >= 1);
    assert!((r.phi[0].abs() - 1.0).abs() < 1e-10 && (r.phi[1].abs() - 2.0).abs() < 1e-10);
}

#[test]
fn same_seed_same_answer() {
    let res = |p: &[f64]| vec![p[0].powi(3) - p[0] - 0.3, (p[0] * p[1]).sin()];
    let jac = |p: &[f64]| mat(2, 2, |i, j| match (i, j) {
        (0, 0) => 3.0 * p[0] * p[0] - 1.0,
        (0, 1) => 0.0,
        (1, 0) => p[1] * (p[0] * p[1]).cos(),
        _ => p[0] * (p[0] * p[1]).cos(),
    });
    let o = NllsqOptions { seed: 4, ..Default::default() };
    let a = nllsq_perturb(&res, &jac, 2, &o).unwrap();
    let b = nllsq_perturb(&res, &jac, 2, &o).unwrap();
    assert_eq!(a.phi, b.phi);
}
