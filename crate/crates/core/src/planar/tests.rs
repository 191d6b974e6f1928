use super::*;
use crate::error::Error;
use crate::problem::State;

const CUBIC_ZEROS: [Pt; 8] = [
    [0.2141, 0.3313],
    [-0.5367, 0.0],
    [-0.7893, 2.5802],
    [1.7752, 1.3903],
    [0.2141, -0.3313],
    [-0.7893, -2.5802],
    [1.7752, -1.3903],
    [-1.8633, 0.0],
];

fn all_maps() -> Vec<PlanarMap> {
    vec![
        PlanarMap::fold_circle(),
        PlanarMap::pleat(),
        PlanarMap::cubic(),
        PlanarMap::square(),
        PlanarMap::new(PlanarKind::Linear { a: [[2.0, 1.0], [-1.0, 3.0]] }),
    ]
}

#[test]
fn closed_form_det_matches_jacobian() {
    for m in all_maps() {
        for p in [[0.3, -0.7], [1.9, 2.2], [-3.1, 0.4]] {
            let j = m.jac2(p);
            let d = j[0][0] * j[1][1] - j[0][1] * j[1][0];
            assert!((d - m.det(p)).abs() <= 1e-10 * (1.0 + d.abs()), "{:?} at {p:?}", m.kind);
            let h = 1e-6;
            let g = m.det_grad(p);
            let gx = (m.det([p[0] + h, p[1]]) - m.det([p[0] - h, p[1]])) / (2.0 * h);
            let gy = (m.det([p[0], p[1] + h]) - m.det([p[0], p[1] - h])) / (2.0 * h);
            assert!((g[0] - gx).abs() + (g[1] - gy).abs() <= 1e-5 * (1.0 + gx.abs() + gy.abs()), "{:?}", m.kind);
        }
    }
}

#[test]
fn fold_circle_critical_set_is_the_half_circle_with_three_cusps() {
    let m = PlanarMap::fold_circle();
    let curves = find_critical_curves(&m, &PlaneBox::square(2.0), &CurveConfig::default());
    assert_eq!(curves.len(), 1);
    let c = &curves[0];
    assert!(c.closed);
    let worst = c.vertices.iter().map(|v| (v.x.hypot(v.y) - 0.5).abs()).fold(0.0, f64::max);
    assert!(worst <= 1e-6, "radius error {worst}");
    assert!(c.vertices.iter().all(|v| v.det.abs() <= 1e-8));
    assert_eq!(c.cusps.len(), 3, "cusps {:?}", c.cusps);
}

#[test]
fn pleat_critical_set_is_vertical_lines() {
    let m = PlanarMap::pleat();
    let curves = find_critical_curves(&m, &PlaneBox::square(4.0), &CurveConfig::default());
    assert_eq!(curves.len(), 3);
    for c in &curves {
        assert!(!c.closed);
        let x = c.vertices[0].x;
        let k = (x / std::f64::consts::PI).round();
        assert!(c.vertices.iter().all(|v| (v.x - k * std::f64::consts::PI).abs() < 1e-9));
        assert!(c.ends.iter().all(|e| *e == CurveEnd::LeftBox));
    }
}

#[test]
fn cubic_critical_set_is_two_closed_curves() {
    let m = PlanarMap::cubic();
    let curves = find_critical_curves(&m, &PlaneBox::square(4.0), &CurveConfig::default());
    assert_eq!(curves.len(), 2);
    assert!(curves.iter().all(|c| c.closed && c.vertices.iter().all(|v| v.det.abs() <= 1e-8)));
}

#[test]
fn seed_far_from_critical_set_is_rejected() {
    let m = PlanarMap::fold_circle();
    let e = trace_critical_curve(&m, [1.5, 0.0], &PlaneBox::square(2.0), &CurveConfig::default()).unwrap_err();
    assert!(matches!(e, Error::SeedNotNearCritical(_)));
}

#[test]
fn fold_circle_counts_four_and_two() {
    let m = PlanarMap::fold_circle();
    let bx = PlaneBox::square(3.0);
    let c = count_preimages(&m, [0.0, 0.0], &bx, 64, Exec::Sequential);
    assert_eq!(c.count(), 4);
    assert!(!c.suspect_undercount);
    let s3 = 3f64.sqrt() / 2.0;
    for z in [[0.0, 0.0], [-1.0, 0.0], [0.5, s3], [0.5, -s3]] {
        assert!(c.roots.iter().any(|r| norm(sub(*r, z)) < 1e-10), "missing {z:?}");
    }
    assert_eq!(count_preimages(&m, [2.0, 0.0], &bx, 64, Exec::Parallel).count(), 2);
}

#[test]
fn cubic_has_nine_zeros_at_the_listed_points() {
    let m = PlanarMap::cubic();
    let c = count_preimages(&m, [0.0, 0.0], &PlaneBox::square(4.0), 64, Exec::Parallel);
    assert_eq!(c.count(), 9);
    for z in CUBIC_ZEROS {
        assert!(c.roots.iter().any(|r| (r[0] - z[0]).abs() <= 1e-3 && (r[1] - z[1]).abs() <= 1e-3), "missing {z:?}");
    }
}

#[test]
fn fold_circle_flower_has_five_tiles() {
    let m = PlanarMap::fold_circle();
    let bx = PlaneBox::square(2.0);
    let cfg = CurveConfig::default();
    let curves = find_critical_curves(&m, &bx, &cfg);
    let flower = compute_flower(&m, &curves, &bx, &FlowerConfig::default(), cfg.step, Exec::Parallel);
    assert!(!flower.budget_exceeded);
    assert!(!flower.components.is_empty());
    let image = image_curves(&m, &curves);
    // Every flower point maps onto F(C).
    let worst = flower
        .components
        .iter()
        .flatten()
        .map(|p| {
            let y = m.f(*p);
            image[0].iter().map(|q| norm(sub(*q, y))).fold(f64::INFINITY, f64::min)
        })
        .fold(0.0, f64::max);
    assert!(worst <= 1e-6 + 0.5 * cfg.step * 3.0, "flower point off F(C) by {worst}");
    let mut lines: Vec<Vec<Pt>> = curves.iter().map(|c| c.points()).collect();
    lines.extend(flower.components.iter().cloned());
    assert_eq!(count_domain_tiles(&lines, &bx, 600, 30), 5);
}

#[test]
fn linear_map_has_empty_flower() {
    let m = PlanarMap::new(PlanarKind::Linear { a: [[2.0, 1.0], [-1.0, 3.0]] });
    let bx = PlaneBox::square(2.0);
    let curves = find_critical_curves(&m, &bx, &CurveConfig::default());
    assert!(curves.is_empty());
    assert!(compute_flower(&m, &curves, &bx, &FlowerConfig::default(), 0.01, Exec::Sequential).components.is_empty());
}

#[test]
fn fold_circle_tiles_pass_parity() {
    let m = PlanarMap::fold_circle();
    let bx = PlaneBox::square(3.0);
    let curves = find_critical_curves(&m, &bx, &CurveConfig::default());
    let image = image_curves(&m, &curves);
    let cfg = ProbeConfig { radius: 2.0, samples_per_ray: 30, ..ProbeConfig::default() };
    let r = ray_probes(&m, &image, [0.0, 0.0], &bx, &cfg, Exec::Parallel);
    assert_eq!(r.counts(), vec![2, 4]);
    let v = verify_tile_parity(&r);
    assert!(v.passed, "{:?}", v.notes);
    assert!(v.fold_crossings >= 8);
}

#[test]
fn cubic_tiles_count_nine_seven_five_three() {
    let m = PlanarMap::cubic();
    let bx = PlaneBox::square(4.0);
    let curves = find_critical_curves(&m, &bx, &CurveConfig::default());
    let image = image_curves(&m, &curves);
    let cfg = ProbeConfig { radius: 12.0, rays: 10, samples_per_ray: 80, ..ProbeConfig::default() };
    let r = ray_probes(&m, &image, [0.0, 0.0], &bx, &cfg, Exec::Parallel);
    assert_eq!(r.counts(), vec![3, 5, 7, 9]);
    let v = verify_tile_parity(&r);
    assert!(v.passed, "{:?}", v.notes);
}

#[test]
fn square_map_boundary_jump_is_not_a_fold() {
    let m = PlanarMap::square();
    let image = vec![vec![[0.0, 0.0], [10.0, 0.0]], vec![[0.0, 0.0], [0.0, 10.0]]];
    let r = probe_pairs(&m, &image, &[([1.0, 0.05], [1.0, -0.05])], &PlaneBox::square(4.0), 32, Exec::Sequential);
    assert_eq!(r.adjacency_checks[0].difference, -4);
    let v = verify_tile_parity(&r);
    assert!(!v.passed);
    assert!(v.notes.iter().any(|n| n.contains("NonFoldBoundary")));
}

fn has(set: &crate::solutions::SolutionSet, z: Pt) -> bool {
    set.items.iter().any(|s| (s.u[0] - z[0]).abs() <= 1e-3 && (s.u[1] - z[1]).abs() <= 1e-3)
}

#[test]
fn cubic_vertical_axis_diagram_misses_only_the_left_zero() {
    use crate::bifurcation::{build_diagram, DiagramConfig};
    use crate::continuation::LineSpec;
    let map = PlanarMap::cubic().handle();
    let line = LineSpec::new(State::from_vec(vec![0.0, 0.0]), State::from_vec(vec![0.0, 1.0]), (-4.0, 4.0)).unwrap();
    let g = State::zeros(2);
    let d = build_diagram(&map, &line, &g, &DiagramConfig::default(), 4).unwrap();
    assert_eq!(d.branch_points.len(), 4, "the axis meets C at four folds");
    assert_eq!(d.solutions.len(), 8, "{:?}", d.solutions.items.iter().map(|s| (s.u[0], s.u[1])).collect::<Vec<_>>());
    assert!(has(&d.solutions, [0.0, 0.0]));
    for z in &CUBIC_ZEROS[..7] {
        assert!(has(&d.solutions, *z), "missing {z:?}");
    }
    assert!(!has(&d.solutions, CUBIC_ZEROS[7]));
}

#[test]
fn half_line_from_the_left_zero_completes_the_cubic_zeros() {
    use crate::bifurcation::{multi_line_campaign, DiagramConfig};
    use crate::continuation::LineSpec;
    let map = PlanarMap::cubic().handle();
    let axis = LineSpec::new(State::from_vec(vec![0.0, 0.0]), State::from_vec(vec![0.0, 1.0]), (-4.0, 4.0)).unwrap();
    let p2 = count_preimages(&PlanarMap::cubic(), [0.0, 0.0], &PlaneBox::square(4.0), 64, Exec::Sequential)
        .roots
        .into_iter()
        .find(|r| (r[0] + 0.5367).abs() < 1e-3 && r[1].abs() < 1e-3)
        .unwrap();
    let half = LineSpec::new(State::from_vec(p2.to_vec()), State::from_vec(vec![-1.0, 0.2]), (0.0, 4.0)).unwrap();
    let c = multi_line_campaign(&map, &[axis, half], &[], &State::zeros(2), &DiagramConfig::default()).unwrap();
    assert_eq!(c.solutions.len(), 9);
    assert!(has(&c.solutions, CUBIC_ZEROS[7]));
    assert_eq!(c.rows[1].new, 1);
}
