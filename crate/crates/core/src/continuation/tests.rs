use super::*;
use crate::problem::{LinearMap, SquareFold};
use crate::semilinear::{LinearPart, Nonlinearity, PLNonlinearity, SemilinearMap, TridiagonalOperator};

fn unit_path() -> CodomainPath {
    CodomainPath::segment(State::zeros(1), State::from_element(1, 1.0), (-1.0, 1.0))
}

#[test]
fn spectral_tangent_at_small_u() {
    let map = MapHandle::new(SquareFold);
    let tan = spectral_tangent(&map, &unit_path(), &State::from_element(1, 0.01), 1e-4, 1.0).unwrap();
    assert!((tan.u_dot[0] + 1.0).abs() < 1e-12);
    assert!((tan.t_dot + 0.02).abs() < 1e-12);
    // Proportional to the regular tangent (1/(2u), 1) with factor -lambda.
    let reg = regular_tangent(&map, &unit_path(), &State::from_element(1, 0.01), 1e-4, 1e-3).unwrap();
    assert!((reg.u_dot[0] * -0.02 - tan.u_dot[0]).abs() < 1e-12);
}

#[test]
fn regular_tangent_refuses_fold_band() {
    let map = MapHandle::new(SquareFold);
    let r = regular_tangent(&map, &unit_path(), &State::from_element(1, 0.01), 1e-4, 0.5);
    assert!(matches!(r, Err(Error::NearSingularJacobian { .. })));
}

#[test]
fn transversality_failure_is_reported() {
    // F(u1, u2) = (u1^2, u2) with gamma' = (0, 1): kernel e1 is orthogonal to gamma'.
    struct Fold2;
    impl crate::problem::NonlinearMap for Fold2 {
        fn dim(&self) -> usize {
            2
        }
        fn eval(&self, u: &State) -> State {
            State::from_vec(vec![u[0] * u[0], u[1]])
        }
        fn jacobian(&self, u: &State) -> Option<DMatrix<f64>> {
            Some(DMatrix::from_row_slice(2, 2, &[2.0 * u[0], 0.0, 0.0, 1.0]))
        }
        fn is_symmetric(&self) -> bool {
            true
        }
    }
    let map = MapHandle::new(Fold2);
    let path = CodomainPath::segment(State::zeros(2), State::from_vec(vec![0.0, 1.0]), (-1.0, 1.0));
    let r = spectral_tangent(&map, &path, &State::zeros(2), 0.0, 1.0);
    assert!(matches!(r, Err(Error::TransversalityFailure(_))));
}

#[test]
fn corrector_keeps_points_on_path() {
    let map = MapHandle::new(SquareFold);
    let path = unit_path();
    let u = State::from_element(1, 0.5);
    let tan = Tangent { u_dot: State::from_element(1, 1.0), t_dot: 1.0, mode: TangentMode::Regular };
    let c = correct(&map, &path, &u, 0.25, &tan, &StepConfig::default()).unwrap();
    assert_eq!(c.iterations, 0);
    let c = correct(&map, &path, &State::from_element(1, 0.55), 0.3, &tan, &StepConfig::default()).unwrap();
    assert!((c.u[0] * c.u[0] - c.t).abs() <= 1e-10);
}

#[test]
fn spectral_trace_crosses_the_fold_of_u_squared() {
    let map = MapHandle::new(SquareFold);
    let cfg = StepConfig { max_step: 0.1, ..StepConfig::default() };
    let opts = TraceOptions { direction: -1.0, ..TraceOptions::default() };
    let r = trace(&map, &unit_path(), &State::from_element(1, 1.0), 1.0, &cfg, opts).unwrap();
    assert_eq!(r.terminal, Terminal::RangeExhausted);
    assert_eq!(r.folds.len(), 1);
    let f = &r.folds[0];
    assert_eq!(f.kind, FoldKind::Turning);
    assert!(f.t <= cfg.fold_tol * cfg.fold_tol);
    let last = r.points.last().unwrap();
    assert!(last.u[0] < -0.9, "reached the mirror branch");
    for p in &r.points {
        assert!((p.u[0] * p.u[0] - p.t).abs() <= cfg.newton_tol * (1.0 + p.t.abs()));
    }
}

#[test]
fn regular_trace_stalls_before_the_fold() {
    let map = MapHandle::new(SquareFold);
    let cfg = StepConfig { max_step: 0.1, ..StepConfig::default() };
    let opts = TraceOptions { direction: -1.0, regular_only: true, ..TraceOptions::default() };
    let r = trace(&map, &unit_path(), &State::from_element(1, 1.0), 1.0, &cfg, opts).unwrap();
    assert!(matches!(r.terminal, Terminal::Stalled(_) | Terminal::StepUnderflow));
    assert!(r.points.iter().all(|p| p.u[0] > 0.0));
    assert!(r.folds.is_empty());
}

#[test]
fn linear_map_has_no_folds() {
    let a = DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 3.0]);
    let map = MapHandle::new(LinearMap { a: a.clone() });
    let path = CodomainPath::segment(State::from_vec(vec![1.0, 1.0]), State::from_vec(vec![0.5, -0.25]), (-2.0, 2.0));
    let u0 = a.clone().lu().solve(&State::from_vec(vec![1.0, 1.0])).unwrap();
    let r = trace(&map, &path, &u0, 0.0, &StepConfig::default(), TraceOptions::default()).unwrap();
    assert!(r.folds.is_empty());
    assert_eq!(r.terminal, Terminal::RangeExhausted);
}

#[test]
fn piecewise_trace_turns_at_det_sign_change() {
    // n = 2 with l_- = -1 < lambda_1 < lambda_2 < l_+ = 3: the vertical line
    // through a negative solution folds twice before reaching the positive
    // solution on the other side.
    let t = TridiagonalOperator::with_nodes(2).unwrap();
    let map = MapHandle::new(SemilinearMap::new(
        LinearPart::Tridiagonal(t),
        Nonlinearity::PiecewiseLinear(PLNonlinearity::new(-1.0, 3.0).unwrap()),
    ));
    let phi = t.mode(1);
    let path = CodomainPath::segment(State::zeros(2), -&phi, (-10.0, 10.0));
    let u0 = State::zeros(2);
    let r = trace(&map, &path, &u0, 0.0, &StepConfig::default(), TraceOptions { direction: 1.0, ..Default::default() }).unwrap();
    assert_eq!(r.terminal, Terminal::RangeExhausted);
    for p in &r.points {
        let res = (map.eval(&p.u).unwrap() - path.gamma(p.t)).norm();
        assert!(res < 1e-10, "residual {res}");
    }
    assert!(r.folds.iter().all(|f| f.kind == FoldKind::Turning));
}
