//! Built-in plane maps, their critical curves, flowers and preimage counts.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::exec::Exec;
use crate::problem::{MapHandle, NonlinearMap, State};

mod curves;
mod export;
mod tiles;

pub use curves::{find_critical_curves, trace_critical_curve, CriticalCurve, CurveConfig, CurveEnd, CurveVertex};
pub use export::{domain_svg, image_svg, write_zeros_csv};
pub use tiles::{
    count_domain_tiles, compute_flower, image_curves, probe_pairs, ray_probes, verify_tile_parity, Adjacency, Flower, FlowerConfig,
    ParityVerdict, ProbeConfig, ProbeCount, TileReport,
};

pub type Pt = [f64; 2];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PlanarKind {
    /// z^2 + conj(z); critical set is the circle of radius 1/2.
    FoldCircle,
    /// (cos x - x^2 cos x + 2x sin x, y); critical set x = k pi.
    Pleat,
    /// z^3 + c conj(z)^2 + z.
    Cubic { c: f64 },
    /// (x^2, y^2); folds along the axes meet at a non-generic point.
    Square,
    Linear { a: [[f64; 2]; 2] },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlanarMap {
    pub kind: PlanarKind,
}

/// Closed rectangle [x0, x1] x [y0, y1].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlaneBox {
    pub x0: f64,
    pub x1: f64,
    pub y0: f64,
    pub y1: f64,
}

impl PlaneBox {
    pub fn square(r: f64) -> Self {
        Self { x0: -r, x1: r, y0: -r, y1: r }
    }

    pub fn contains(&self, p: Pt, margin: f64) -> bool {
        p[0] >= self.x0 - margin && p[0] <= self.x1 + margin && p[1] >= self.y0 - margin && p[1] <= self.y1 + margin
    }

    pub fn diag(&self) -> f64 {
        (self.x1 - self.x0).hypot(self.y1 - self.y0)
    }

    pub fn is_valid(&self) -> bool {
        [self.x0, self.x1, self.y0, self.y1].iter().all(|v| v.is_finite()) && self.x1 > self.x0 && self.y1 > self.y0
    }
}

pub(crate) fn norm(p: Pt) -> f64 {
    p[0].hypot(p[1])
}

pub(crate) fn sub(a: Pt, b: Pt) -> Pt {
    [a[0] - b[0], a[1] - b[1]]
}

impl PlanarMap {
    pub fn new(kind: PlanarKind) -> Self {
        Self { kind }
    }

    pub fn fold_circle() -> Self {
        Self::new(PlanarKind::FoldCircle)
    }

    pub fn pleat() -> Self {
        Self::new(PlanarKind::Pleat)
    }

    /// The nine-zero cubic, c = 2.4.
    pub fn cubic() -> Self {
        Self::new(PlanarKind::Cubic { c: 2.4 })
    }

    pub fn square() -> Self {
        Self::new(PlanarKind::Square)
    }

    pub fn f(&self, p: Pt) -> Pt {
        let [x, y] = p;
        match &self.kind {
            PlanarKind::FoldCircle => [x * x - y * y + x, 2.0 * x * y - y],
            PlanarKind::Pleat => [x.cos() - x * x * x.cos() + 2.0 * x * x.sin(), y],
            PlanarKind::Cubic { c } => [
                x * x * x - 3.0 * x * y * y + c * (x * x - y * y) + x,
                3.0 * x * x * y - y * y * y - 2.0 * c * x * y + y,
            ],
            PlanarKind::Square => [x * x, y * y],
            PlanarKind::Linear { a } => [a[0][0] * x + a[0][1] * y, a[1][0] * x + a[1][1] * y],
        }
    }

    pub fn jac2(&self, p: Pt) -> [[f64; 2]; 2] {
        let [x, y] = p;
        match &self.kind {
            PlanarKind::FoldCircle => [[2.0 * x + 1.0, -2.0 * y], [2.0 * y, 2.0 * x - 1.0]],
            PlanarKind::Pleat => [[(1.0 + x * x) * x.sin(), 0.0], [0.0, 1.0]],
            PlanarKind::Cubic { c } => {
                let a = 3.0 * (x * x - y * y) + 1.0;
                let b = 6.0 * x * y;
                [[a + 2.0 * c * x, -b - 2.0 * c * y], [b - 2.0 * c * y, a - 2.0 * c * x]]
            }
            PlanarKind::Square => [[2.0 * x, 0.0], [0.0, 2.0 * y]],
            PlanarKind::Linear { a } => *a,
        }
    }

    /// det DF in closed form.
    pub fn det(&self, p: Pt) -> f64 {
        let [x, y] = p;
        match &self.kind {
            PlanarKind::FoldCircle => 4.0 * (x * x + y * y) - 1.0,
            PlanarKind::Pleat => (1.0 + x * x) * x.sin(),
            PlanarKind::Cubic { c } => {
                let a = 3.0 * (x * x - y * y) + 1.0;
                let b = 6.0 * x * y;
                a * a + b * b - 4.0 * c * c * (x * x + y * y)
            }
            PlanarKind::Square => 4.0 * x * y,
            PlanarKind::Linear { a } => a[0][0] * a[1][1] - a[0][1] * a[1][0],
        }
    }

    pub fn det_grad(&self, p: Pt) -> Pt {
        let [x, y] = p;
        match &self.kind {
            PlanarKind::FoldCircle => [8.0 * x, 8.0 * y],
            PlanarKind::Pleat => [2.0 * x * x.sin() + (1.0 + x * x) * x.cos(), 0.0],
            PlanarKind::Cubic { c } => {
                let a = 3.0 * (x * x - y * y) + 1.0;
                let b = 6.0 * x * y;
                let c2 = 8.0 * c * c;
                [12.0 * (a * x + b * y) - c2 * x, 12.0 * (b * x - a * y) - c2 * y]
            }
            PlanarKind::Square => [4.0 * y, 4.0 * x],
            PlanarKind::Linear { .. } => [0.0, 0.0],
        }
    }

    pub fn handle(&self) -> MapHandle {
        MapHandle::new(self.clone())
    }

    /// Damped Newton on F(p) = y; `None` unless ||F(p) - y|| <= tol.
    pub fn newton(&self, p0: Pt, y: Pt, tol: f64, max_iter: usize) -> Option<Pt> {
        let mut p = p0;
        let mut r = sub(self.f(p), y);
        let mut res = norm(r);
        for _ in 0..max_iter {
            if res <= tol {
                return Some(p);
            }
            let j = self.jac2(p);
            let d = j[0][0] * j[1][1] - j[0][1] * j[1][0];
            if d == 0.0 || !d.is_finite() {
                return None;
            }
            let dx = [(j[1][1] * r[0] - j[0][1] * r[1]) / d, (j[0][0] * r[1] - j[1][0] * r[0]) / d];
            let mut lambda = 1.0;
            loop {
                let trial = [p[0] - lambda * dx[0], p[1] - lambda * dx[1]];
                let rt = sub(self.f(trial), y);
                let nt = norm(rt);
                if nt < res {
                    p = trial;
                    r = rt;
                    res = nt;
                    break;
                }
                lambda *= 0.5;
                if lambda < 1.0 / 64.0 {
                    return None;
                }
            }
            if norm(p) > 1e8 {
                return None;
            }
        }
        (res <= tol).then_some(p)
    }
}

impl NonlinearMap for PlanarMap {
    fn dim(&self) -> usize {
        2
    }

    fn eval(&self, u: &State) -> State {
        let v = self.f([u[0], u[1]]);
        State::from_vec(v.to_vec())
    }

    fn jacobian(&self, u: &State) -> Option<DMatrix<f64>> {
        let j = self.jac2([u[0], u[1]]);
        Some(DMatrix::from_row_slice(2, 2, &[j[0][0], j[0][1], j[1][0], j[1][1]]))
    }

    fn name(&self) -> String {
        match &self.kind {
            PlanarKind::FoldCircle => "fold-circle".into(),
            PlanarKind::Pleat => "pleat".into(),
            PlanarKind::Cubic { c } => format!("cubic(c={c})"),
            PlanarKind::Square => "square".into(),
            PlanarKind::Linear { .. } => "linear-planar".into(),
        }
    }
}

/// Roots of F(p) = y found by [`count_preimages`].
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PreimageCount {
    pub roots: Vec<Pt>,
    /// Two roots closer than ten dedupe radii, or a root on the critical set.
    pub suspect_undercount: bool,
}

impl PreimageCount {
    pub fn count(&self) -> usize {
        self.roots.len()
    }
}

fn dedupe_tol(p: Pt) -> f64 {
    1e-6 * (1.0 + norm(p))
}

/// Multistart Newton from the centres of a grid x grid partition of `bx`.
/// Roots outside the box are dropped.
pub fn count_preimages(map: &PlanarMap, y: Pt, bx: &PlaneBox, grid: usize, exec: Exec) -> PreimageCount {
    let grid = grid.max(1);
    let tol = 1e-12 * (1.0 + norm(y));
    let hx = (bx.x1 - bx.x0) / grid as f64;
    let hy = (bx.y1 - bx.y0) / grid as f64;
    let found = exec.map_chunked(grid * grid, 64, |k| {
        let start = [bx.x0 + hx * ((k % grid) as f64 + 0.5), bx.y0 + hy * ((k / grid) as f64 + 0.5)];
        map.newton(start, y, tol, 80)
    });
    let mut cands: Vec<Pt> = found.into_iter().flatten().filter(|p| bx.contains(*p, 1e-9)).collect();
    cands.sort_by(|a, b| a[0].total_cmp(&b[0]).then(a[1].total_cmp(&b[1])));
    let mut roots: Vec<Pt> = Vec::new();
    for p in cands {
        if !roots.iter().any(|r| norm(sub(*r, p)) <= dedupe_tol(p)) {
            roots.push(p);
        }
    }
    let mut suspect = false;
    for (i, a) in roots.iter().enumerate() {
        for b in &roots[i + 1..] {
            if norm(sub(*a, *b)) < 10.0 * dedupe_tol(*a) {
                suspect = true;
            }
        }
        let j = map.jac2(*a);
        let scale = j.iter().flatten().map(|v| v * v).sum::<f64>();
        if map.det(*a).abs() <= 1e-8 * scale.max(1.0) {
            suspect = true;
        }
    }
    PreimageCount { roots, suspect_undercount: suspect }
}

#[cfg(test)]
mod tests;
