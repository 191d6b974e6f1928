//! Flowers, domain tiles and probe-based image tile counts.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use super::curves::project;
use super::{count_preimages, norm, sub, CriticalCurve, PlanarMap, PlaneBox, Pt};
use crate::exec::Exec;

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FlowerConfig {
    /// Image samples per critical curve.
    pub samples_per_curve: usize,
    /// Full multistart inversion every this many samples.
    pub reseed_every: usize,
    pub grid: usize,
    pub max_components: usize,
}

impl Default for FlowerConfig {
    fn default() -> Self {
        Self { samples_per_curve: 1200, reseed_every: 20, grid: 40, max_components: 400 }
    }
}

/// Preimages of the images of the critical curves, excluding the curves.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct Flower {
    pub components: Vec<Vec<Pt>>,
    /// Set when `max_components` was reached; the flower is partial.
    pub budget_exceeded: bool,
}

/// Distance from p to the critical set, to first order.
fn critical_distance(map: &PlanarMap, p: Pt) -> f64 {
    let g = norm(map.det_grad(p));
    if g == 0.0 {
        return if map.det(p) == 0.0 { 0.0 } else { f64::INFINITY };
    }
    map.det(p).abs() / g
}

fn subsample(pts: &[Pt], m: usize) -> Vec<Pt> {
    if pts.len() <= m || m < 2 {
        return pts.to_vec();
    }
    (0..m).map(|k| pts[k * (pts.len() - 1) / (m - 1)]).collect()
}

/// Moves a preimage of `ya` to one of `yb` by Newton, splitting the image
/// segment when the step jumps away from the linear prediction.
fn lift_step(map: &PlanarMap, p: Pt, ya: Pt, yb: Pt, depth: usize) -> Option<Pt> {
    let tol = 1e-12 * (1.0 + norm(yb));
    let j = map.jac2(p);
    let d = j[0][0] * j[1][1] - j[0][1] * j[1][0];
    if d == 0.0 {
        return None;
    }
    let dy = sub(yb, ya);
    let dp = [(j[1][1] * dy[0] - j[0][1] * dy[1]) / d, (j[0][0] * dy[1] - j[1][0] * dy[0]) / d];
    let guess = [p[0] + dp[0], p[1] + dp[1]];
    if let Some(q) = map.newton(guess, yb, tol, 30) {
        if norm(sub(q, guess)) <= 0.25 * norm(dp) + 1e-9 {
            return Some(q);
        }
    }
    if depth == 0 {
        return None;
    }
    let ym = [0.5 * (ya[0] + yb[0]), 0.5 * (ya[1] + yb[1])];
    let m = lift_step(map, p, ya, ym, depth - 1)?;
    lift_step(map, m, ym, yb, depth - 1)
}

fn flower_of_curve(map: &PlanarMap, curve: &CriticalCurve, bx: &PlaneBox, cfg: &FlowerConfig, step: f64) -> (Vec<Vec<Pt>>, bool) {
    let mut samples = subsample(&curve.points(), cfg.samples_per_curve);
    if curve.closed {
        // One extra lap segment so lifts close up.
        if let Some(&s1) = samples.get(1) {
            samples.push(s1);
        }
    }
    let ys: Vec<Pt> = samples.iter().map(|p| map.f(*p)).collect();
    let near_c = |p: Pt| critical_distance(map, p) <= 2.0 * step;
    let mut active: Vec<Vec<Pt>> = Vec::new();
    let mut done: Vec<Vec<Pt>> = Vec::new();
    let mut exceeded = false;
    for k in 0..ys.len() {
        if k % cfg.reseed_every.max(1) == 0 && k + 1 < ys.len() {
            let roots = count_preimages(map, ys[k], bx, cfg.grid, Exec::Sequential).roots;
            for r in roots {
                if near_c(r) {
                    continue;
                }
                let tracked = active.iter().any(|l| l.last().is_some_and(|q| norm(sub(*q, r)) <= 1e-6 * (1.0 + norm(r))));
                if !tracked {
                    if active.len() + done.len() >= cfg.max_components {
                        exceeded = true;
                        continue;
                    }
                    // Walk back to where this preimage branch appeared.
                    let mut back = vec![r];
                    for j in (1..=k).rev() {
                        let p = *back.last().expect("non-empty");
                        match lift_step(map, p, ys[j], ys[j - 1], 6) {
                            Some(q) if bx.contains(q, 0.0) && !near_c(q) => back.push(q),
                            _ => break,
                        }
                    }
                    back.reverse();
                    active.push(back);
                }
            }
        }
        if k + 1 == ys.len() {
            break;
        }
        let mut still = Vec::with_capacity(active.len());
        for mut l in active.drain(..) {
            let p = *l.last().expect("lifts are non-empty");
            match lift_step(map, p, ys[k], ys[k + 1], 6) {
                Some(q) if bx.contains(q, 0.0) && !near_c(q) => {
                    l.push(q);
                    still.push(l);
                }
                _ => done.push(l),
            }
        }
        active = still;
    }
    done.extend(active);
    // Lifts that stopped at the critical set are joined to it.
    let snap = |p: Pt| (critical_distance(map, p) <= 5.0 * step).then(|| project(map, p, 1e-10)).flatten();
    for l in &mut done {
        if let Some(q) = snap(l[l.len() - 1]) {
            l.push(q);
        }
        if let Some(q) = snap(l[0]) {
            l.insert(0, q);
        }
    }
    (done.into_iter().filter(|l| l.len() >= 2).collect(), exceeded)
}

/// Lifts of each sampled image curve F(C_i), restarted from a multistart
/// inversion every `reseed_every` samples. Curves are processed in
/// parallel.
pub fn compute_flower(map: &PlanarMap, curves: &[CriticalCurve], bx: &PlaneBox, cfg: &FlowerConfig, step: f64, exec: Exec) -> Flower {
    let parts = exec.map(curves, |c| flower_of_curve(map, c, bx, cfg, step));
    let mut flower = Flower::default();
    for (comps, ex) in parts {
        flower.budget_exceeded |= ex;
        flower.components.extend(comps);
    }
    if flower.components.len() > cfg.max_components {
        flower.components.truncate(cfg.max_components);
        flower.budget_exceeded = true;
    }
    flower
}

/// Connected components of the box minus the given polylines, on a
/// `res` x `res` raster. Components smaller than `min_cells` are ignored.
pub fn count_domain_tiles(polylines: &[Vec<Pt>], bx: &PlaneBox, res: usize, min_cells: usize) -> usize {
    let res = res.max(4);
    let mut wall = vec![false; res * res];
    let cx = (bx.x1 - bx.x0) / res as f64;
    let cy = (bx.y1 - bx.y0) / res as f64;
    let cell = |p: Pt| -> Option<(usize, usize)> {
        let i = ((p[0] - bx.x0) / cx).floor();
        let j = ((p[1] - bx.y0) / cy).floor();
        (i >= 0.0 && j >= 0.0 && (i as usize) < res && (j as usize) < res).then(|| (i as usize, j as usize))
    };
    for line in polylines {
        for w in line.windows(2) {
            let len = (norm(sub(w[1], w[0])) / (0.25 * cx.min(cy))).ceil().max(1.0) as usize;
            for s in 0..=len {
                let t = s as f64 / len as f64;
                let p = [w[0][0] + t * (w[1][0] - w[0][0]), w[0][1] + t * (w[1][1] - w[0][1])];
                if let Some((i, j)) = cell(p) {
                    wall[j * res + i] = true;
                }
            }
        }
    }
    let mut seen = wall.clone();
    let mut tiles = 0;
    for start in 0..res * res {
        if seen[start] {
            continue;
        }
        seen[start] = true;
        let mut size = 0;
        let mut queue = VecDeque::from([start]);
        while let Some(c) = queue.pop_front() {
            size += 1;
            let (i, j) = (c % res, c / res);
            let mut push = |n: usize| {
                if !seen[n] {
                    seen[n] = true;
                    queue.push_back(n);
                }
            };
            if i > 0 {
                push(c - 1);
            }
            if i + 1 < res {
                push(c + 1);
            }
            if j > 0 {
                push(c - res);
            }
            if j + 1 < res {
                push(c + res);
            }
        }
        if size >= min_cells {
            tiles += 1;
        }
    }
    tiles
}

/// F(C_i) as codomain polylines.
pub fn image_curves(map: &PlanarMap, curves: &[CriticalCurve]) -> Vec<Vec<Pt>> {
    curves.iter().map(|c| c.vertices.iter().map(|v| map.f(v.pt())).collect()).collect()
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ProbeCount {
    pub y: Pt,
    pub count: usize,
    pub suspect: bool,
}

/// Two probes separated by exactly `crossings` arcs of F(C).
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Adjacency {
    pub a: usize,
    pub b: usize,
    pub crossings: usize,
    /// count(b) - count(a).
    pub difference: i64,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct TileReport {
    pub probe_points: Vec<ProbeCount>,
    pub adjacency_checks: Vec<Adjacency>,
}

impl TileReport {
    /// Distinct counts seen, ascending.
    pub fn counts(&self) -> Vec<usize> {
        let mut c: Vec<usize> = self.probe_points.iter().map(|p| p.count).collect();
        c.sort_unstable();
        c.dedup();
        c
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProbeConfig {
    pub rays: usize,
    pub samples_per_ray: usize,
    /// Ray length; rays start at the centre.
    pub radius: f64,
    /// Probes closer than this to F(C) are discarded.
    pub margin: f64,
    pub grid: usize,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        Self { rays: 8, samples_per_ray: 60, radius: 10.0, margin: 1e-3, grid: 64 }
    }
}

fn seg_dist(p: Pt, a: Pt, b: Pt) -> f64 {
    let ab = sub(b, a);
    let l2 = ab[0] * ab[0] + ab[1] * ab[1];
    let t = if l2 == 0.0 { 0.0 } else { (((p[0] - a[0]) * ab[0] + (p[1] - a[1]) * ab[1]) / l2).clamp(0.0, 1.0) };
    norm(sub(p, [a[0] + t * ab[0], a[1] + t * ab[1]]))
}

fn cross(a: Pt, b: Pt) -> f64 {
    a[0] * b[1] - a[1] * b[0]
}

fn segments_cross(p: Pt, q: Pt, a: Pt, b: Pt) -> bool {
    let d1 = cross(sub(q, p), sub(a, p));
    let d2 = cross(sub(q, p), sub(b, p));
    let d3 = cross(sub(b, a), sub(p, a));
    let d4 = cross(sub(b, a), sub(q, a));
    // Half-open in the arc parameter so shared vertices count once.
    ((d1 > 0.0) != (d2 > 0.0)) && ((d3 > 0.0) != (d4 > 0.0))
}

fn crossings(p: Pt, q: Pt, image: &[Vec<Pt>]) -> usize {
    image.iter().flat_map(|l| l.windows(2)).filter(|w| segments_cross(p, q, w[0], w[1])).count()
}

fn near_image(p: Pt, image: &[Vec<Pt>], margin: f64) -> bool {
    image.iter().flat_map(|l| l.windows(2)).any(|w| seg_dist(p, w[0], w[1]) < margin)
}

fn probe(map: &PlanarMap, y: Pt, bx: &PlaneBox, grid: usize, exec: Exec) -> ProbeCount {
    let c = count_preimages(map, y, bx, grid, exec);
    ProbeCount { y, count: c.count(), suspect: c.suspect_undercount }
}

/// Counts preimages along rays from `center` and records, for consecutive
/// valid probes, how many image arcs lie between them.
pub fn ray_probes(map: &PlanarMap, image: &[Vec<Pt>], center: Pt, bx: &PlaneBox, cfg: &ProbeConfig, exec: Exec) -> TileReport {
    let mut report = TileReport::default();
    for r in 0..cfg.rays.max(1) {
        // Offset the angle so rays avoid symmetry axes of the built-in maps.
        let th = std::f64::consts::TAU * (r as f64 + 0.37) / cfg.rays.max(1) as f64;
        let dir = [th.cos(), th.sin()];
        let ys: Vec<Pt> = (0..cfg.samples_per_ray)
            .map(|k| {
                let s = cfg.radius * k as f64 / (cfg.samples_per_ray.max(2) - 1) as f64;
                [center[0] + s * dir[0], center[1] + s * dir[1]]
            })
            .filter(|y| !near_image(*y, image, cfg.margin))
            .collect();
        let counts = exec.map(&ys, |y| probe(map, *y, bx, cfg.grid, Exec::Sequential));
        let base = report.probe_points.len();
        for k in 1..counts.len() {
            report.adjacency_checks.push(Adjacency {
                a: base + k - 1,
                b: base + k,
                crossings: crossings(ys[k - 1], ys[k], image),
                difference: counts[k].count as i64 - counts[k - 1].count as i64,
            });
        }
        report.probe_points.extend(counts);
    }
    report
}

/// Probes explicit pairs of codomain points.
pub fn probe_pairs(map: &PlanarMap, image: &[Vec<Pt>], pairs: &[(Pt, Pt)], bx: &PlaneBox, grid: usize, exec: Exec) -> TileReport {
    let mut report = TileReport::default();
    for &(a, b) in pairs {
        let pa = probe(map, a, bx, grid, exec);
        let pb = probe(map, b, bx, grid, exec);
        let k = report.probe_points.len();
        report.adjacency_checks.push(Adjacency { a: k, b: k + 1, crossings: crossings(a, b, image), difference: pb.count as i64 - pa.count as i64 });
        report.probe_points.push(pa);
        report.probe_points.push(pb);
    }
    report
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ParityVerdict {
    pub passed: bool,
    /// Pairs separated by exactly one image arc.
    pub fold_crossings: usize,
    pub notes: Vec<String>,
}

/// True iff counts differ by exactly 2 across every single image arc and
/// stay equal where no arc separates two probes.
pub fn verify_tile_parity(report: &TileReport) -> ParityVerdict {
    let mut notes = Vec::new();
    let mut folds = 0;
    for a in &report.adjacency_checks {
        let (pa, pb) = (&report.probe_points[a.a], &report.probe_points[a.b]);
        match (a.crossings, a.difference.abs()) {
            (0, 0) => {}
            (0, _) => notes.push(format!("count changes {} -> {} between {:?} and {:?} without crossing F(C)", pa.count, pb.count, pa.y, pb.y)),
            (1, 2) => folds += 1,
            (1, 4) => {
                folds += 1;
                notes.push(format!("NonFoldBoundary: count changes by 4 between {:?} and {:?}", pa.y, pb.y));
            }
            (1, d) => {
                folds += 1;
                notes.push(format!("count changes by {d} across one arc between {:?} and {:?}", pa.y, pb.y));
            }
            _ => {}
        }
    }
    if folds == 0 {
        notes.push("no probe pair straddles a single image arc".into());
    }
    ParityVerdict { passed: notes.is_empty(), fold_crossings: folds, notes }
}
