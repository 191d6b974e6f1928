//! Property tests for the counting laws and numerical invariants.

use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

use foldtrace::continuation::{spectral_tangent, trace, CodomainPath, LineSpec, StepConfig, TraceOptions};
use foldtrace::elliptic::{build_fd_laplacian, vertical_scan, EllipticProblem, GridDomain};
use foldtrace::planar::{count_preimages, PlanarMap, PlaneBox};
use foldtrace::problem::{default_fd_step, fd_jacobian, relative_residue, LinearMap};
use foldtrace::semilinear::{calibrate_arctan, LinearPart, Nonlinearity, PLNonlinearity, SemilinearMap, TridiagonalOperator};
use foldtrace::solutions::{Solution, SolutionSet};
use foldtrace::sturm::{enumerate_pl_solutions, slope_ladder};
use foldtrace::{Exec, MapHandle, State};

fn arctan_map(n: usize, ell_minus: f64, ell_plus: f64) -> MapHandle {
    let t = TridiagonalOperator::with_nodes(n).unwrap();
    MapHandle::new(SemilinearMap::new(LinearPart::Tridiagonal(t), Nonlinearity::Arctan(calibrate_arctan(ell_minus, ell_plus).unwrap())))
}

fn pl_map(n: usize, ell_minus: f64, ell_plus: f64) -> MapHandle {
    let t = TridiagonalOperator::with_nodes(n).unwrap();
    MapHandle::new(SemilinearMap::new(LinearPart::Tridiagonal(t), Nonlinearity::PiecewiseLinear(PLNonlinearity::new(ell_minus, ell_plus).unwrap())))
}

fn state(n: usize, scale: f64) -> impl Strategy<Value = State> {
    proptest::collection::vec(-scale..scale, n).prop_map(DVector::from_vec)
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 32, ..ProptestConfig::default() })]

    #[test]
    fn fd_jacobian_matches_analytic((n, u) in (2usize..12).prop_flat_map(|n| (Just(n), state(n, 5.0)))) {
        let map = arctan_map(n, -1.0, 30.0);
        let exact = map.jac(&u).unwrap();
        let fd = fd_jacobian(&map, &u, default_fd_step(&u)).unwrap();
        prop_assert!((&fd - &exact).amax() <= 1e-5 * exact.amax());
    }

    #[test]
    fn pl_map_is_positively_homogeneous((n, u) in (2usize..12).prop_flat_map(|n| (Just(n), state(n, 3.0))), c in 0.01f64..100.0) {
        let map = pl_map(n, 0.5, 40.0);
        let lhs = map.eval(&(&u * c)).unwrap();
        let rhs = map.eval(&u).unwrap() * c;
        prop_assert!((&lhs - &rhs).amax() <= 1e-12 * (1.0 + rhs.amax()));
    }

    #[test]
    fn relative_residue_is_scale_covariant(
        (n, u, g) in (2usize..10).prop_flat_map(|n| (Just(n), state(n, 2.0), state(n, 2.0))),
        c in 0.01f64..100.0,
    ) {
        prop_assume!(g.norm() > 1e-3);
        let map = pl_map(n, -2.0, 25.0);
        let a = relative_residue(&map, &u, &g, 1.0).unwrap();
        let b = relative_residue(&map, &(&u * c), &(&g * c), 1.0).unwrap();
        prop_assert!((a.epsilon - b.epsilon).abs() <= 1e-10 * (1.0 + a.epsilon));
        prop_assert_eq!(a.accepted, a.epsilon <= 1.0);
    }

    #[test]
    fn planar_det_matches_jacobian(x in -3.0f64..3.0, y in -3.0f64..3.0, which in 0usize..4) {
        let map = [PlanarMap::fold_circle(), PlanarMap::pleat(), PlanarMap::cubic(), PlanarMap::square()][which].clone();
        let j = map.jac2([x, y]);
        let det = j[0][0] * j[1][1] - j[0][1] * j[1][0];
        prop_assert!((map.det([x, y]) - det).abs() <= 1e-10 * (1.0 + det.abs()));
        let h = 1e-6;
        let g = map.det_grad([x, y]);
        let gx = (map.det([x + h, y]) - map.det([x - h, y])) / (2.0 * h);
        let gy = (map.det([x, y + h]) - map.det([x, y - h])) / (2.0 * h);
        prop_assert!((g[0] - gx).abs() + (g[1] - gy).abs() <= 1e-5 * (1.0 + gx.abs() + gy.abs()));
    }

    #[test]
    fn spectral_tangent_solves_the_homotopy((n, u) in (2usize..10).prop_flat_map(|n| (Just(n), state(n, 4.0))), dir in 0usize..2) {
        let map = arctan_map(n, -1.0, 30.0);
        let d = State::from_fn(n, |i, _| if dir == 0 { 1.0 } else { (i as f64 + 1.0).sin() });
        let path = CodomainPath::segment(State::zeros(n), d, (-1.0, 1.0));
        let tan = spectral_tangent(&map, &path, &u, 0.0, 1.0).unwrap();
        let lhs = map.jac(&u).unwrap() * &tan.u_dot - path.gamma_prime(0.0) * tan.t_dot;
        let scale = map.jac(&u).unwrap().amax() * tan.u_dot.norm() + tan.t_dot.abs() * path.gamma_prime(0.0).norm();
        prop_assert!(tan.norm() > 0.0);
        prop_assert!(lhs.norm() <= 1e-8 * scale);
    }

    #[test]
    fn fold_circle_counts_are_even(x in -1.9f64..1.9, y in -1.9f64..1.9) {
        let c = count_preimages(&PlanarMap::fold_circle(), [x, y], &PlaneBox::square(4.0), 40, Exec::Parallel);
        prop_assume!(!c.suspect_undercount);
        prop_assert!(c.count() == 2 || c.count() == 4, "count {}", c.count());
    }

    #[test]
    fn cubic_counts_are_odd(x in -3.0f64..3.0, y in -3.0f64..3.0) {
        let c = count_preimages(&PlanarMap::cubic(), [x, y], &PlaneBox::square(6.0), 60, Exec::Parallel);
        prop_assume!(!c.suspect_undercount);
        prop_assert!(c.count() % 2 == 1 && c.count() <= 9, "count {}", c.count());
    }

    #[test]
    fn solution_set_ignores_arrival_order(pts in proptest::collection::vec(state(3, 4.0), 1..12), seed in any::<u64>()) {
        let sols: Vec<Solution> = pts.iter().enumerate().map(|(k, u)| Solution { u: u.clone(), morse_index: Some(k % 3), residue: 0.0 }).collect();
        let mut shuffled = sols.clone();
        let k = (seed as usize) % shuffled.len();
        shuffled.rotate_left(k);
        shuffled.reverse();
        let a = SolutionSet::from_candidates(sols, 1e-6);
        let b = SolutionSet::from_candidates(shuffled, 1e-6);
        prop_assert_eq!(a.len(), b.len());
        for (x, y) in a.items.iter().zip(&b.items) {
            prop_assert_eq!(&x.u, &y.u);
        }
    }

    #[test]
    fn census_accounts_for_every_orthant(n in 2usize..9, k_frac in 0.0f64..1.0, gap in 0.2f64..0.8) {
        let t = TridiagonalOperator::with_nodes(n).unwrap();
        let lam = t.eigenvalues();
        let k = 1 + ((n - 1) as f64 * k_frac) as usize;
        let ell_plus = if k < n { lam[k - 1] + gap * (lam[k] - lam[k - 1]) } else { lam[n - 1] + 10.0 };
        let nl = PLNonlinearity::new(0.5 * lam[0], ell_plus).unwrap();
        let g = -t.mode(1);
        let c = enumerate_pl_solutions(&LinearPart::Tridiagonal(t), &nl, &g, Exec::Parallel).unwrap();
        prop_assert_eq!(c.consistent + c.inconsistent + c.singular, 1usize << n);
        let map = pl_map(n, nl.ell_minus, nl.ell_plus);
        for s in &c.solutions.items {
            prop_assert!(relative_residue(&map, &s.u, &g, 1e-10).unwrap().accepted);
        }
    }
}

#[test]
fn census_grows_along_the_ladder() {
    let t = TridiagonalOperator::with_nodes(12).unwrap();
    let g = -t.mode(1);
    let mut last = 0;
    for (k, ell_minus, ell_plus) in slope_ladder(&t) {
        let nl = PLNonlinearity::new(ell_minus, ell_plus).unwrap();
        let n = enumerate_pl_solutions(&LinearPart::Tridiagonal(t.clone()), &nl, &g, Exec::Parallel).unwrap().solutions.len();
        assert!(n >= last, "k = {k}: {n} < {last}");
        last = n;
    }
}

#[test]
fn fd_ground_states_are_positive() {
    for grid in [GridDomain::annulus(12).unwrap(), GridDomain::unit_square(9).unwrap(), GridDomain::strip(20, 0.1).unwrap()] {
        let modes = build_fd_laplacian(&grid).unwrap().modes(2).unwrap();
        assert!(modes.vectors[0].iter().all(|&v| v > 0.0));
        assert!(modes.values[0] < modes.values[1]);
    }
}

#[test]
fn scan_crossings_match_continuation_folds() {
    let op = build_fd_laplacian(&GridDomain::strip(30, std::f64::consts::PI / 31.0).unwrap()).unwrap();
    let modes = op.modes(3).unwrap();
    let ell_plus = 0.5 * (modes.values[1] + modes.values[2]);
    let problem = EllipticProblem::new(op, Nonlinearity::Arctan(calibrate_arctan(-1.0, ell_plus).unwrap()));
    let base = State::zeros(problem.op.dim());
    let scan = vertical_scan(&problem, &base, (-200.0, 200.0), 3, 81, Exec::Parallel).unwrap();
    assert_eq!(scan.total_crossings(), 2);

    let line = LineSpec::new(base.clone(), scan.direction.clone(), (-200.0, 200.0)).unwrap();
    let path = CodomainPath::line_image(problem.map(), &line);
    let cfg = StepConfig { max_step: 5.0, initial_step: 0.5, fold_tol: 1e-11, ..StepConfig::default() };
    let r = trace(problem.map(), &path, &line.point(-200.0), -200.0, &cfg, TraceOptions { direction: 1.0, ..TraceOptions::default() }).unwrap();
    assert_eq!(r.folds.len(), scan.crossings.len());
    let mut fold_t: Vec<f64> = r.folds.iter().map(|f| f.t).collect();
    let mut scan_t: Vec<f64> = scan.crossings.iter().map(|c| c.t).collect();
    fold_t.sort_by(f64::total_cmp);
    scan_t.sort_by(f64::total_cmp);
    for (a, b) in fold_t.iter().zip(&scan_t) {
        assert!((a - b).abs() <= 1e-6, "fold at {a}, scan crossing at {b}");
    }
}

#[test]
fn linear_map_residue_is_exact() {
    let a = DMatrix::from_row_slice(2, 2, &[3.0, 1.0, 1.0, 2.0]);
    let map = MapHandle::new(LinearMap { a: a.clone() });
    let u = State::from_vec(vec![0.3, -1.2]);
    let g = &a * &u;
    assert!(relative_residue(&map, &u, &g, 1e-12).unwrap().accepted);
}
