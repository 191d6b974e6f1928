use nalgebra::DMatrix;

use super::*;
use crate::semilinear::{calibrate_arctan, TridiagonalOperator};

fn annulus_op(n: usize) -> (GridDomain, SparseOperator) {
    let g = GridDomain::annulus(n).unwrap();
    let op = build_fd_laplacian(&g).unwrap();
    (g, op)
}

#[test]
fn strip_recovers_the_tridiagonal_operator() {
    let t = TridiagonalOperator::with_nodes(15).unwrap();
    let g = GridDomain::strip(15, std::f64::consts::PI / 16.0).unwrap();
    let op = build_fd_laplacian(&g).unwrap();
    assert_eq!(op.stiffness.to_dense(), t.to_dense());
}

#[test]
fn unit_square_ground_state_converges() {
    let op = build_fd_laplacian(&GridDomain::unit_square(64).unwrap()).unwrap();
    let l1 = op.modes(1).unwrap().values[0];
    let exact = 2.0 * std::f64::consts::PI.powi(2);
    assert!((l1 - exact).abs() / exact < 0.02, "lambda_1 = {l1}");
}

#[test]
fn hole_raises_the_ground_state() {
    let n = 31;
    let full = build_fd_laplacian(&GridDomain::unit_square(n).unwrap()).unwrap();
    let h = 1.0 / (n as f64 + 1.0);
    let holed = GridDomain::from_predicate(n, n, h, [0.0, 0.0], |x, y| (x - 0.5).abs() > 0.15 || (y - 0.5).abs() > 0.15).unwrap();
    let holed = build_fd_laplacian(&holed).unwrap();
    assert!(holed.modes(1).unwrap().values[0] > full.modes(1).unwrap().values[0]);
}

#[test]
fn disconnected_mask_is_rejected() {
    let e = GridDomain::from_predicate(10, 10, 0.1, [0.0, 0.0], |x, _| (x - 0.55).abs() > 0.1).unwrap_err();
    assert!(matches!(e, Error::DisconnectedDomain { components: 2 }));
}

#[test]
fn fd_operator_is_positive_definite_with_positive_ground_state() {
    let (_, op) = annulus_op(16);
    let m = op.modes(4).unwrap();
    assert!(m.values[0] > 0.0);
    assert!(m.values.windows(2).all(|w| w[0] < w[1]), "annulus eigenvalues are simple: {:?}", m.values);
    assert!(m.vectors[0].iter().all(|&v| v > 0.0));
    assert!((m.vectors[0].amax() - 1.0).abs() < 1e-14);
}

#[test]
fn matrix_market_round_trip_preserves_the_spectrum() {
    let (_, op) = annulus_op(12);
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("k.mtx");
    write_matrix_market(&op.stiffness, &p).unwrap();
    let back = ingest_operator(&p, None).unwrap();
    assert_eq!(back.provenance, Provenance::Ingested);
    assert_eq!(back.stiffness, op.stiffness);
    let a = op.modes(4).unwrap().values;
    let b = back.modes(4).unwrap().values;
    for (x, y) in a.iter().zip(&b) {
        assert!((x - y).abs() <= 1e-12 * x.abs());
    }
}

#[test]
fn nonsymmetric_and_nondiagonal_mass_files_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("a.mtx");
    std::fs::write(&p, "%%MatrixMarket matrix coordinate real general\n2 2 3\n1 1 2\n1 2 1\n2 2 2\n").unwrap();
    assert!(matches!(ingest_operator(&p, None), Err(Error::NotSymmetric(_))));
    let k = dir.path().join("k.mtx");
    std::fs::write(&k, "%%MatrixMarket matrix coordinate real symmetric\n2 2 3\n1 1 2\n2 1 -1\n2 2 2\n").unwrap();
    assert!(matches!(ingest_operator(&k, Some(&k)), Err(Error::BadFormat(_))));
    std::fs::write(&p, "%%MatrixMarket matrix array real general\n2 2\n").unwrap();
    assert!(matches!(ingest_operator(&p, None), Err(Error::BadFormat(_))));
}

#[test]
fn lumped_mass_gives_the_generalized_spectrum() {
    let (_, op) = annulus_op(8);
    let n = op.dim();
    let mass = DVector::from_fn(n, |i, _| 0.5 + (i % 5) as f64 * 0.1);
    let gen = SparseOperator::new(op.stiffness.clone(), Some(mass.clone()), Provenance::Ingested).unwrap();
    let m = gen.modes(3).unwrap();
    // Oracle: dense eigenvalues of M^-1 K via its symmetric similarity.
    let k = op.stiffness.to_dense();
    let s = DMatrix::from_fn(n, n, |i, j| k[(i, j)] / (mass[i] * mass[j]).sqrt());
    let mut ev: Vec<f64> = s.symmetric_eigen().eigenvalues.iter().copied().collect();
    ev.sort_by(f64::total_cmp);
    for (a, b) in m.values.iter().zip(&ev) {
        assert!((a - b).abs() <= 1e-9 * b.abs());
    }
    // K phi = lambda M phi for the physical eigenvector.
    let r = k * &m.vectors[0] - mass.component_mul(&m.vectors[0]) * m.values[0];
    assert!(r.norm() <= 1e-8 * m.values[0]);
}

#[test]
fn arctan_scan_decreases_and_counts_enclosed_eigenvalues() {
    let (_, op) = annulus_op(14);
    let lam = op.modes(4).unwrap().values;
    for k in 1..=3 {
        let nl = Nonlinearity::Arctan(calibrate_arctan(-1.0, 0.5 * (lam[k - 1] + lam[k])).unwrap());
        let p = EllipticProblem::new(op.clone(), nl);
        let s = vertical_scan(&p, &State::zeros(op.dim()), (-3e4, 3e4), k + 1, 61, Exec::Parallel).unwrap();
        assert!(s.strictly_decreasing);
        assert_eq!(s.total_crossings(), k, "{:?}", s.crossing_counts);
        assert!(s.samples.iter().all(|x| x.eigenvalues.windows(2).all(|w| w[0] <= w[1])));
    }
}

#[test]
fn linear_f_scan_is_flat() {
    let (_, op) = annulus_op(8);
    let lam = op.modes(1).unwrap().values[0];
    let p = EllipticProblem::new(op.clone(), Nonlinearity::Linear { slope: 3.0 });
    let s = vertical_scan(&p, &State::zeros(op.dim()), (-10.0, 10.0), 2, 5, Exec::Sequential).unwrap();
    assert!(s.flat && !s.strictly_decreasing && !s.degenerate);
    assert!((s.samples[0].eigenvalues[0] - (lam - 3.0)).abs() < 1e-9);
    let p = EllipticProblem::new(op.clone(), Nonlinearity::Linear { slope: lam });
    let s = vertical_scan(&p, &State::zeros(op.dim()), (-10.0, 10.0), 2, 5, Exec::Sequential).unwrap();
    assert!(s.flat && s.degenerate);
}

#[test]
fn zero_nonlinearity_gives_the_single_linear_solution() {
    let (_, op) = annulus_op(10);
    let p = EllipticProblem::new(op.clone(), Nonlinearity::Linear { slope: 0.0 });
    let mut cfg = SoliminiConfig::default();
    cfg.t_load = 10.0;
    cfg.s_range = (-10.0, 10.0);
    let out = run_solimini_experiment(&p, &cfg).unwrap();
    assert_eq!(out.solutions.len(), 1);
    let u = &out.solutions.items[0].u;
    let direct = p.map().solve_jac(u, &out.load).unwrap();
    assert!((u - &direct).norm() <= 1e-9 * direct.norm());
}
