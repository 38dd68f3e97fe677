mod common;

use common::jacobian_fd_error;
use hdelm::assembly::{loc_elm_layers, RowKind};
use hdelm::geometry::{decompose, sample_collocation, sample_test_set};
use hdelm::lsq::solve_system;
use hdelm::{assemble_atfc, assemble_elm, assemble_loc_elm, make_problem, AssemblyOptions, FeatureLayer, NllsqOptions, PointBlock, System, TrainedModel};

fn linear(s: System) -> hdelm::assembly::LinearSystem {
    match s {
        System::Linear(l) => l,
        System::Nonlinear(_) => panic!("expected a linear system"),
    }
}

#[test]
fn single_subdomain_matches_global_assembly_bitwise() {
    for (name, n_t0) in [("poisson", 0), ("advection-diffusion", 6)] {
        let p = make_problem(name, 2).unwrap();
        let dec = decompose(&p.domain, &[], &[]).unwrap();
        let layers = loc_elm_layers(&dec, 40, 0.8, 3).unwrap();
        let sets = dec.sample(25, 5, n_t0, 3).unwrap();
        let loc = linear(assemble_loc_elm(&p, &dec, &layers, &sets, &AssemblyOptions::default()).unwrap());
        let layer = FeatureLayer::new(p.domain.dim_total(), 40, 0.8, 3).unwrap();
        let set = sample_collocation(&p.domain, 25, 5, n_t0, 3).unwrap();
        let glob = linear(assemble_elm(&p, &layer, &set, &AssemblyOptions::default()).unwrap());
        assert_eq!(loc.matrix, glob.matrix);
        assert_eq!(loc.rhs, glob.rhs);
    }
}

#[test]
fn nonlinear_jacobian_matches_differences() {
    let p = make_problem("nonlinear-poisson", 2).unwrap();
    let layer = FeatureLayer::new(2, 15, 1.0, 2).unwrap();
    let set = sample_collocation(&p.domain, 10, 3, 0, 2).unwrap();
    let sys = assemble_elm(&p, &layer, &set, &AssemblyOptions::default()).unwrap();
    let phi: Vec<f64> = (0..15).map(|j| 0.2 * (j as f64).sin()).collect();
    assert!(jacobian_fd_error(&sys, &phi, 1e-6) < 1e-6);
    let atfc = assemble_atfc(&p, &layer, &set, &AssemblyOptions::default()).unwrap();
    assert!(jacobian_fd_error(&atfc, &phi, 1e-6) < 1e-6);
}

#[test]
fn homogeneous_problem_gives_zero_coefficients() {
    let p = make_problem("zero", 3).unwrap();
    let layer = FeatureLayer::new(3, 60, 0.5, 1).unwrap();
    let set = sample_collocation(&p.domain, 40, 6, 0, 1).unwrap();
    let sys = assemble_elm(&p, &layer, &set, &AssemblyOptions::default()).unwrap();
    let sol = solve_system(&sys, &NllsqOptions::default()).unwrap();
    assert!(sol.phi.iter().all(|v| *v == 0.0));
}

#[test]
fn one_dimensional_face_operator_is_exact_on_the_boundary() {
    let p = make_problem("poisson", 1).unwrap();
    let layer = FeatureLayer::new(1, 8, 0.3, 5).unwrap();
    let set = sample_collocation(&p.domain, 5, 1, 0, 5).unwrap();
    let sys = linear(assemble_atfc(&p, &layer, &set, &AssemblyOptions::default()).unwrap());
    let sol = solve_system(&System::Linear(sys), &NllsqOptions::default()).unwrap();
    let model = TrainedModel::atfc(&p, layer, &sol.phi).unwrap();
    let ends = PointBlock::from_rows(1, vec![-1.0, 1.0]).unwrap();
    let u = model.predict(&ends).unwrap();
    let exact = p.exact.as_ref().unwrap();
    assert!((u[0] - exact.value(&[-1.0])).abs() < 1e-12);
    assert!((u[1] - exact.value(&[1.0])).abs() < 1e-12);
}

#[test]
fn face_operator_boundary_error_is_bounded_by_row_residual() {
    let p = make_problem("poisson", 2).unwrap();
    let layer = FeatureLayer::new(2, 200, 1.0, 8).unwrap();
    let set = sample_collocation(&p.domain, 200, 30, 0, 8).unwrap();
    let sys = linear(assemble_atfc(&p, &layer, &set, &AssemblyOptions::default()).unwrap());
    let sol = solve_system(&System::Linear(sys.clone()), &NllsqOptions::default()).unwrap();
    let r = sys.residual(&sol.phi);
    let bnorm = sys
        .layout
        .rows
        .iter()
        .filter(|b| b.kind == RowKind::Boundary)
        .flat_map(|b| b.rows.clone())
        .map(|i| r[i] * r[i])
        .sum::<f64>()
        .sqrt();
    let model = TrainedModel::atfc(&p, layer, &sol.phi).unwrap();
    let held = sample_test_set(&p.domain, 50, 0, 99);
    let u = model.predict(&held).unwrap();
    let exact = p.exact.as_ref().unwrap();
    let worst = held.iter().zip(&u).map(|(x, v)| (v - exact.value(x)).abs()).fold(0.0, f64::max);
    assert!(worst <= 10.0 * bnorm, "boundary error {worst:e} vs row residual {bnorm:e}");
}

#[test]
fn row_counts_follow_the_layout() {
    let p = make_problem("heat", 2).unwrap();
    let dec = decompose(&p.domain, &[0], &[2]).unwrap();
    let layers = loc_elm_layers(&dec, 20, 1.0, 1).unwrap();
    let sets = dec.sample(30, 4, 5, 1).unwrap();
    let sys = assemble_loc_elm(&p, &dec, &layers, &sets, &AssemblyOptions::default()).unwrap();
    let l = sys.layout();
    // per sub-domain: 4 faces x 4 points + 5 initial points
    assert_eq!(l.count(RowKind::Pde), 2 * (30 + 16 + 5));
    assert_eq!(l.count(RowKind::Boundary), 2 * 3 * 4);
    assert_eq!(l.count(RowKind::Initial), 2 * 5);
    assert_eq!(l.count(RowKind::Continuity0), 4);
    assert_eq!(l.count(RowKind::Continuity1), 4);
    assert_eq!(l.n_dof(), 40);
    assert_eq!(sys.n_rows(), l.n_rows());
}
