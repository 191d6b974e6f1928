//! Predictor-corrector tracing of the zero set of det DF.

use serde::{Deserialize, Serialize};

use super::{norm, sub, PlanarMap, PlaneBox, Pt};
use crate::error::{Error, Result};

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CurveConfig {
    /// Arc length between vertices.
    pub step: f64,
    /// Corrector target for |det DF|.
    pub det_tol: f64,
    pub max_vertices: usize,
    /// Sign-change scan resolution for [`find_critical_curves`].
    pub scan_grid: usize,
}

impl Default for CurveConfig {
    fn default() -> Self {
        Self { step: 0.01, det_tol: 1e-10, max_vertices: 50_000, scan_grid: 64 }
    }
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct CurveVertex {
    pub x: f64,
    pub y: f64,
    pub det: f64,
    /// grad(det) . k with k spanning ker DF, oriented continuously along
    /// the curve. Folds have it nonzero; it changes sign at cusps.
    pub transversality: f64,
}

impl CurveVertex {
    pub fn pt(&self) -> Pt {
        [self.x, self.y]
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum CurveEnd {
    Closed,
    LeftBox,
    /// grad det vanished or the corrector failed.
    Degenerate(String),
    Budget,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CriticalCurve {
    pub vertices: Vec<CurveVertex>,
    pub closed: bool,
    /// How each end of an open curve stopped (one entry for closed curves).
    pub ends: Vec<CurveEnd>,
    /// Vertices where the kernel becomes tangent to the curve (not folds).
    pub cusps: Vec<usize>,
}

impl CriticalCurve {
    pub fn points(&self) -> Vec<Pt> {
        self.vertices.iter().map(CurveVertex::pt).collect()
    }
}

fn kernel(map: &PlanarMap, p: Pt) -> Pt {
    let j = map.jac2(p);
    let r0 = [-j[0][1], j[0][0]];
    let r1 = [-j[1][1], j[1][0]];
    if norm(r0) >= norm(r1) {
        r0
    } else {
        r1
    }
}

/// Newton on det along its gradient.
pub(super) fn project(map: &PlanarMap, mut p: Pt, tol: f64) -> Option<Pt> {
    for _ in 0..30 {
        let d = map.det(p);
        if d.abs() <= tol {
            return Some(p);
        }
        let g = map.det_grad(p);
        let gg = g[0] * g[0] + g[1] * g[1];
        if gg <= 1e-24 {
            return None;
        }
        p = [p[0] - d * g[0] / gg, p[1] - d * g[1] / gg];
    }
    (map.det(p).abs() <= tol).then_some(p)
}

fn tangent(map: &PlanarMap, p: Pt) -> Option<Pt> {
    let g = map.det_grad(p);
    let n = norm(g);
    (n > 1e-12).then(|| [-g[1] / n, g[0] / n])
}

/// Walks from `start` in direction `dir` until closure, box exit or
/// breakdown. Returns the vertices after `start` and the stop reason.
fn walk(map: &PlanarMap, start: Pt, dir: Pt, bx: &PlaneBox, cfg: &CurveConfig) -> (Vec<Pt>, CurveEnd) {
    let mut out = Vec::new();
    let mut p = start;
    let mut t = dir;
    let mut travelled = 0.0;
    loop {
        if out.len() >= cfg.max_vertices {
            return (out, CurveEnd::Budget);
        }
        let mut h = cfg.step;
        let next = loop {
            let guess = [p[0] + h * t[0], p[1] + h * t[1]];
            if let Some(q) = project(map, guess, cfg.det_tol) {
                let d = norm(sub(q, p));
                if d <= 1.5 * h && d >= 0.5 * h {
                    break Some(q);
                }
            }
            h *= 0.5;
            if h < cfg.step / 256.0 {
                break None;
            }
        };
        let Some(q) = next else {
            return (out, CurveEnd::Degenerate("corrector failed".into()));
        };
        let Some(mut tq) = tangent(map, q) else {
            out.push(q);
            return (out, CurveEnd::Degenerate("grad det vanishes".into()));
        };
        if tq[0] * t[0] + tq[1] * t[1] < 0.0 {
            tq = [-tq[0], -tq[1]];
        }
        travelled += norm(sub(q, p));
        if travelled > 3.0 * cfg.step && norm(sub(q, start)) <= cfg.step {
            return (out, CurveEnd::Closed);
        }
        if !bx.contains(q, 0.0) {
            out.push(q);
            return (out, CurveEnd::LeftBox);
        }
        out.push(q);
        p = q;
        t = tq;
    }
}

fn vertices(map: &PlanarMap, pts: Vec<Pt>) -> (Vec<CurveVertex>, Vec<usize>) {
    let mut verts = Vec::with_capacity(pts.len());
    let mut prev_k: Option<Pt> = None;
    for p in pts {
        let mut k = kernel(map, p);
        if let Some(pk) = prev_k {
            if k[0] * pk[0] + k[1] * pk[1] < 0.0 {
                k = [-k[0], -k[1]];
            }
        }
        prev_k = Some(k);
        let g = map.det_grad(p);
        let nk = norm(k).max(f64::MIN_POSITIVE);
        let ng = norm(g).max(f64::MIN_POSITIVE);
        verts.push(CurveVertex { x: p[0], y: p[1], det: map.det(p), transversality: (g[0] * k[0] + g[1] * k[1]) / (nk * ng) });
    }
    let mut cusps = Vec::new();
    for i in 1..verts.len() {
        let (a, b) = (verts[i - 1].transversality, verts[i].transversality);
        if a.signum() != b.signum() {
            cusps.push(if a.abs() <= b.abs() { i - 1 } else { i });
        }
    }
    (verts, cusps)
}

/// Traces the component of {det DF = 0} through (a point near) `seed`.
pub fn trace_critical_curve(map: &PlanarMap, seed: Pt, bx: &PlaneBox, cfg: &CurveConfig) -> Result<CriticalCurve> {
    let d0 = map.det(seed);
    let Some(start) = project(map, seed, cfg.det_tol).filter(|q| norm(sub(*q, seed)) <= cfg.step) else {
        return Err(Error::SeedNotNearCritical(d0));
    };
    let Some(t0) = tangent(map, start) else {
        return Err(Error::SeedNotNearCritical(d0));
    };
    let (fwd, end_f) = walk(map, start, t0, bx, cfg);
    if end_f == CurveEnd::Closed {
        let mut pts = vec![start];
        pts.extend(fwd);
        let first = pts[0];
        pts.push(first);
        let (verts, cusps) = vertices(map, pts);
        return Ok(CriticalCurve { vertices: verts, closed: true, ends: vec![CurveEnd::Closed], cusps });
    }
    let (bwd, end_b) = walk(map, start, [-t0[0], -t0[1]], bx, cfg);
    let mut pts: Vec<Pt> = bwd.into_iter().rev().collect();
    pts.push(start);
    pts.extend(fwd);
    let (verts, cusps) = vertices(map, pts);
    Ok(CriticalCurve { vertices: verts, closed: false, ends: vec![end_b, end_f], cusps })
}

/// Finds seeds by sign changes of det on a grid over `bx` and traces one
/// curve per component.
pub fn find_critical_curves(map: &PlanarMap, bx: &PlaneBox, cfg: &CurveConfig) -> Vec<CriticalCurve> {
    let n = cfg.scan_grid.max(2);
    let node = |i: usize, j: usize| -> Pt {
        [bx.x0 + (bx.x1 - bx.x0) * i as f64 / n as f64, bx.y0 + (bx.y1 - bx.y0) * j as f64 / n as f64]
    };
    let mut seeds: Vec<Pt> = Vec::new();
    for j in 0..=n {
        for i in 0..=n {
            let a = node(i, j);
            let da = map.det(a);
            for b in [(i + 1 <= n).then(|| node(i + 1, j)), (j + 1 <= n).then(|| node(i, j + 1))].into_iter().flatten() {
                let db = map.det(b);
                if (da >= 0.0) == (db >= 0.0) {
                    continue;
                }
                let (mut lo, mut hi) = (a, b);
                for _ in 0..60 {
                    let mid = [0.5 * (lo[0] + hi[0]), 0.5 * (lo[1] + hi[1])];
                    if (map.det(mid) >= 0.0) == (da >= 0.0) {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                }
                seeds.push(lo);
            }
        }
    }
    let mut curves: Vec<CriticalCurve> = Vec::new();
    for s in seeds {
        let near = curves.iter().any(|c| c.vertices.iter().any(|v| norm(sub(v.pt(), s)) <= 2.0 * cfg.step));
        if near {
            continue;
        }
        if let Ok(c) = trace_critical_curve(map, s, bx, cfg) {
            if c.vertices.len() >= 2 {
                curves.push(c);
            }
        }
    }
    curves
}
