//! Pseudo-arclength continuation of F(u) = gamma(t) through folds.
//!
//! Near a fold the regular tangent (DF^{-1} gamma', 1) blows up; the
//! spectral tangent solves with the rank-one shifted operator instead and
//! stays bounded. Planar maps use the adjugate form (adj(DF) gamma', det DF).

pub mod path;
pub mod piecewise;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::problem::{MapHandle, State};
use crate::spectral::banded::Factored;
use crate::spectral::{shifted_solve, stabilize_sign, SymOperator, SPARSE_DENSE_CUTOFF};
pub use path::{CodomainPath, LineSpec, PathKind};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StepConfig {
    pub initial_step: f64,
    pub min_step: f64,
    pub max_step: f64,
    /// Bound on ||F(u) - gamma(t)|| / (1 + ||gamma(t)||) at accepted points.
    pub newton_tol: f64,
    pub newton_max_iter: usize,
    /// |lambda_s| below which the spectral tangent replaces the regular one.
    pub fold_band: f64,
    /// |lambda_s| at which fold bisection stops.
    pub fold_tol: f64,
    pub max_points: usize,
    /// Weight of the rank-one shift.
    pub alpha: f64,
}

impl Default for StepConfig {
    fn default() -> Self {
        Self {
            initial_step: 1e-2,
            min_step: 1e-9,
            max_step: 0.5,
            newton_tol: 1e-10,
            newton_max_iter: 12,
            fold_band: 0.5,
            fold_tol: 1e-6,
            max_points: 20_000,
            alpha: 1.0,
        }
    }
}

impl StepConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.min_step > 0.0
            && self.min_step <= self.initial_step
            && self.initial_step <= self.max_step
            && self.newton_tol > 0.0
            && self.newton_max_iter > 0
            && self.fold_tol > 0.0
            && self.fold_tol < self.fold_band
            && self.alpha >= 1.0
            && self.fold_band < self.alpha;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidInput(format!("inconsistent step configuration {self:?}")))
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Classification {
    Regular,
    NearFold,
    FoldNode,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum TangentMode {
    Regular,
    Spectral,
    Adjugate,
    Kernel,
    Piecewise,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Tangent {
    pub u_dot: State,
    pub t_dot: f64,
    pub mode: TangentMode,
}

impl Tangent {
    pub fn norm(&self) -> f64 {
        (self.u_dot.norm_squared() + self.t_dot * self.t_dot).sqrt()
    }

    pub fn normalized(&self) -> Tangent {
        let n = self.norm();
        Tangent { u_dot: &self.u_dot / n, t_dot: self.t_dot / n, mode: self.mode }
    }

    pub fn dot(&self, other: &Tangent) -> f64 {
        self.u_dot.dot(&other.u_dot) + self.t_dot * other.t_dot
    }

    pub fn flipped(&self) -> Tangent {
        Tangent { u_dot: -&self.u_dot, t_dot: -self.t_dot, mode: self.mode }
    }

    pub fn as_vector(&self) -> DVector<f64> {
        let n = self.u_dot.len();
        let mut v = DVector::zeros(n + 1);
        v.rows_mut(0, n).copy_from(&self.u_dot);
        v[n] = self.t_dot;
        v
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TracePoint {
    pub u: State,
    pub t: f64,
    /// Smallest-modulus eigenvalue, or sign(det) sigma_min for
    /// non-symmetric maps.
    pub lambda_s: f64,
    pub gap: f64,
    /// Morse index, or det-sign parity for non-symmetric maps.
    pub index: usize,
    pub classification: Classification,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum FoldKind {
    /// gamma' is transversal to the range: the path turns back in t.
    Turning,
    /// gamma' lies in the range of DF: two branches cross here.
    Branching,
    Degenerate,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FoldEvent {
    pub u: State,
    pub t: f64,
    pub lambda_s: f64,
    /// Right kernel vector.
    pub phi: State,
    /// Left kernel vector (equal to phi for symmetric maps).
    pub psi: State,
    pub index_before: usize,
    pub index_after: usize,
    pub kind: FoldKind,
    /// |<psi, gamma'>| / ||gamma'||.
    pub transversality: f64,
    /// Derivative of lambda_s along phi; zero means the fold test fails.
    pub fold_test: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum Terminal {
    RangeExhausted,
    StepUnderflow,
    Stalled(String),
    Budget,
    Stopped,
    Degenerate(String),
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TraceResult {
    pub points: Vec<TracePoint>,
    pub folds: Vec<FoldEvent>,
    pub terminal: Terminal,
    pub newton_iterations: usize,
}

/// Linearization data at one point.
#[derive(Clone, Debug)]
pub(crate) struct Probe {
    pub lambda: f64,
    pub gap: f64,
    pub index: usize,
    pub phi: State,
    pub psi: State,
    pub jac: SymOperator,
}

pub(crate) fn probe_at(map: &MapHandle, u: &State, hint: usize) -> Result<Probe> {
    if map.is_symmetric() {
        let jac = map.jac_operator(u)?;
        let p = jac.probe(hint)?;
        let phi = p.probe.phi_s;
        return Ok(Probe { lambda: p.probe.lambda_s, gap: p.probe.gap, index: p.morse_index, psi: phi.clone(), phi, jac });
    }
    let j = map.jac(u)?;
    let n = j.nrows();
    let det = j.determinant();
    let svd = j.clone().svd(true, true);
    let (mut imin, mut inext) = (0, usize::MAX);
    for i in 1..n {
        if svd.singular_values[i] < svd.singular_values[imin] {
            imin = i;
        }
    }
    for i in 0..n {
        if i != imin && (inext == usize::MAX || svd.singular_values[i] < svd.singular_values[inext]) {
            inext = i;
        }
    }
    let smin = svd.singular_values[imin];
    let gap = if inext == usize::MAX { f64::INFINITY } else { svd.singular_values[inext] - smin };
    let v_t = svd.v_t.as_ref().expect("requested V");
    let uu = svd.u.as_ref().expect("requested U");
    let mut phi: State = v_t.row(imin).transpose();
    let mut psi: State = uu.column(imin).into_owned();
    stabilize_sign(&mut phi);
    stabilize_sign(&mut psi);
    let lambda = if det < 0.0 { -smin } else { smin };
    Ok(Probe { lambda, gap, index: usize::from(det < 0.0), phi, psi, jac: SymOperator::Dense(j) })
}

fn classify(lambda: f64, cfg: &StepConfig) -> Classification {
    if lambda.abs() <= cfg.fold_tol {
        Classification::FoldNode
    } else if lambda.abs() < cfg.fold_band {
        Classification::NearFold
    } else {
        Classification::Regular
    }
}

fn solve_jac(op: &SymOperator, rhs: &State) -> Result<State> {
    let f = match op {
        SymOperator::Dense(m) => Factored::dense(m.clone()),
        SymOperator::Sparse(m) => Factored::sparse(m, 0.0),
    };
    let x = f.map_err(|_| Error::NearSingularJacobian { lambda: 0.0 })?.solve(rhs);
    if !x.iter().all(|v| v.is_finite()) {
        return Err(Error::NonFinite("linear solve"));
    }
    Ok(x)
}

/// u_dot = DF^{-1} gamma', t_dot = 1. Fails inside the fold band.
pub fn regular_tangent(map: &MapHandle, path: &CodomainPath, u: &State, t: f64, fold_band: f64) -> Result<Tangent> {
    let p = probe_at(map, u, 0)?;
    if p.lambda.abs() <= fold_band {
        return Err(Error::NearSingularJacobian { lambda: p.lambda });
    }
    let x = solve_jac(&p.jac, &path.gamma_prime(t))?;
    Ok(Tangent { u_dot: x, t_dot: 1.0, mode: TangentMode::Regular })
}

fn spectral_from_probe(p: &Probe, gp: &State, alpha: f64) -> Result<Tangent> {
    let c = p.phi.dot(gp);
    if c.abs() <= 1e-10 * gp.norm().max(f64::MIN_POSITIVE) {
        return Err(Error::TransversalityFailure(c));
    }
    let rhs = -gp * p.lambda - &p.phi * (alpha * c);
    let x = shifted_solve(&p.jac, &p.phi, alpha, &rhs)?;
    Ok(Tangent { u_dot: x, t_dot: -p.lambda, mode: TangentMode::Spectral })
}

/// Tangent that stays bounded through a fold: (S^{-1}(-lambda gamma' -
/// alpha <phi, gamma'> phi), -lambda) with S = DF + alpha phi phi^T.
/// It is -lambda times the regular tangent.
pub fn spectral_tangent(map: &MapHandle, path: &CodomainPath, u: &State, t: f64, alpha: f64) -> Result<Tangent> {
    if !map.is_symmetric() {
        return Err(Error::InvalidInput("spectral tangent needs a symmetric Jacobian".into()));
    }
    let p = probe_at(map, u, 0)?;
    spectral_from_probe(&p, &path.gamma_prime(t), alpha)
}

/// (adj(DF) gamma', det DF) for planar maps.
pub fn adjugate_tangent(map: &MapHandle, path: &CodomainPath, u: &State, t: f64) -> Result<Tangent> {
    if map.dim() != 2 {
        return Err(Error::InvalidInput("adjugate tangent is for planar maps".into()));
    }
    let j = map.jac(u)?;
    let gp = path.gamma_prime(t);
    Ok(adjugate_from(&j, &gp))
}

fn adjugate_from(j: &DMatrix<f64>, gp: &State) -> Tangent {
    let adj = DMatrix::from_row_slice(2, 2, &[j[(1, 1)], -j[(0, 1)], -j[(1, 0)], j[(0, 0)]]);
    Tangent { u_dot: adj * gp, t_dot: j.determinant(), mode: TangentMode::Adjugate }
}

/// Null vector of [DF | -gamma'] from a square SVD.
fn kernel_tangent(j: &DMatrix<f64>, gp: &State) -> Tangent {
    let n = j.nrows();
    let mut m = DMatrix::zeros(n + 1, n + 1);
    m.view_mut((0, 0), (n, n)).copy_from(j);
    m.view_mut((0, n), (n, 1)).copy_from(&(-gp));
    let svd = m.svd(false, true);
    let imin = (0..=n).min_by(|&a, &b| svd.singular_values[a].total_cmp(&svd.singular_values[b])).unwrap_or(0);
    let v: DVector<f64> = svd.v_t.expect("requested V").row(imin).transpose();
    Tangent { u_dot: v.rows(0, n).into_owned(), t_dot: v[n], mode: TangentMode::Kernel }
}

fn tangent_from_probe(map: &MapHandle, p: &Probe, gp: &State, cfg: &StepConfig, regular_only: bool) -> Result<Tangent> {
    if regular_only || p.lambda.abs() >= cfg.fold_band {
        if p.lambda.abs() <= cfg.fold_band {
            return Err(Error::NearSingularJacobian { lambda: p.lambda });
        }
        let x = solve_jac(&p.jac, gp)?;
        return Ok(Tangent { u_dot: x, t_dot: 1.0, mode: TangentMode::Regular });
    }
    if map.is_symmetric() {
        match spectral_from_probe(p, gp, cfg.alpha) {
            Ok(t) => Ok(t),
            Err(Error::TransversalityFailure(_)) | Err(Error::SingularShiftedOperator) if p.jac.dim() <= 2 * SPARSE_DENSE_CUTOFF => {
                Ok(kernel_tangent(&p.jac.to_dense(), gp))
            }
            Err(e) => Err(e),
        }
    } else if map.dim() == 2 {
        Ok(adjugate_from(&p.jac.to_dense(), gp))
    } else {
        Ok(kernel_tangent(&p.jac.to_dense(), gp))
    }
}

/// Result of one corrector solve.
#[derive(Clone, Debug)]
pub struct Corrected {
    pub u: State,
    pub t: f64,
    pub iterations: usize,
    pub residual: f64,
}

/// Solves [[J, b], [c^T, d]] [x; y] = [r1; r2].
fn bordered_solve(op: &SymOperator, b: &State, c: &State, d: f64, r1: &State, r2: f64) -> Result<(State, f64)> {
    let n = op.dim();
    let sparse_large = matches!(op, SymOperator::Sparse(_)) && n > SPARSE_DENSE_CUTOFF;
    if !sparse_large {
        let mut m = DMatrix::zeros(n + 1, n + 1);
        m.view_mut((0, 0), (n, n)).copy_from(&op.to_dense());
        m.view_mut((0, n), (n, 1)).copy_from(b);
        m.view_mut((n, 0), (1, n)).copy_from(&c.transpose());
        m[(n, n)] = d;
        let mut rhs = DVector::zeros(n + 1);
        rhs.rows_mut(0, n).copy_from(r1);
        rhs[n] = r2;
        let x = Factored::dense(m).map_err(|e| Error::Singular(format!("bordered system: {e}")))?.solve(&rhs);
        return Ok((x.rows(0, n).into_owned(), x[n]));
    }
    let SymOperator::Sparse(a) = op else { unreachable!() };
    let f = Factored::sparse(a, 0.0).or_else(|_| Factored::sparse(a, 1e-12 * a.norm_inf()))?;
    let x2 = f.solve(b);
    let elim = |r1: &State, r2: f64| -> (State, f64) {
        let x1 = f.solve(r1);
        let y = (r2 - c.dot(&x1)) / (d - c.dot(&x2));
        (x1 - &x2 * y, y)
    };
    let (mut x, mut y) = elim(r1, r2);
    // One step of iterative refinement.
    let res1 = r1 - a.mul_vec(&x) - b * y;
    let res2 = r2 - c.dot(&x) - d * y;
    let (dx, dy) = elim(&res1, res2);
    x += dx;
    y += dy;
    if !x.iter().all(|v| v.is_finite()) || !y.is_finite() {
        return Err(Error::Singular("bordered elimination".into()));
    }
    Ok((x, y))
}

fn correct_hyperplane(
    map: &MapHandle,
    path: &CodomainPath,
    u_pred: &State,
    t_pred: f64,
    normal: &Tangent,
    cfg: &StepConfig,
) -> Result<Corrected> {
    let mut u = u_pred.clone();
    let mut t = t_pred;
    let mut prev = f64::INFINITY;
    for it in 0..=cfg.newton_max_iter {
        let target = path.gamma(t);
        let scale = 1.0 + target.norm();
        let h = map.eval(&u)? - target;
        let res = h.norm();
        if !res.is_finite() {
            return Err(Error::NonFinite("corrector residual"));
        }
        let hyper = normal.u_dot.dot(&(&u - u_pred)) + normal.t_dot * (t - t_pred);
        if res <= cfg.newton_tol * scale && hyper.abs() <= 1e-10 * (1.0 + u.norm() + t.abs()) {
            return Ok(Corrected { u, t, iterations: it, residual: res });
        }
        if it == cfg.newton_max_iter || (it >= 2 && res > 2.0 * prev) {
            return Err(Error::NewtonDivergence { iterations: it, residual: res });
        }
        prev = res;
        let jac = map.jac_operator(&u)?;
        let gp = path.gamma_prime(t);
        let (du, dt) = bordered_solve(&jac, &(-gp), &normal.u_dot, normal.t_dot, &(-h), -hyper)?;
        u += du;
        t += dt;
    }
    unreachable!("loop returns")
}

/// Pseudo-arclength corrector: Newton on F(u) - gamma(t) = 0 restricted to
/// the hyperplane through the predictor orthogonal to `tangent`.
pub fn correct(
    map: &MapHandle,
    path: &CodomainPath,
    u_pred: &State,
    t_pred: f64,
    tangent: &Tangent,
    cfg: &StepConfig,
) -> Result<Corrected> {
    correct_hyperplane(map, path, u_pred, t_pred, &tangent.normalized(), cfg)
}

/// A point with its linearization.
#[derive(Clone, Debug)]
pub(crate) struct Node {
    pub u: State,
    pub t: f64,
    pub probe: Probe,
}

impl Node {
    pub fn point(&self, cfg: &StepConfig) -> TracePoint {
        TracePoint {
            u: self.u.clone(),
            t: self.t,
            lambda_s: self.probe.lambda,
            gap: self.probe.gap,
            index: self.probe.index,
            classification: classify(self.probe.lambda, cfg),
        }
    }
}

/// Finds every index change between `lo` and `hi` by bisection along the
/// chord, correcting each midpoint back onto the path.
pub(crate) fn localize(map: &MapHandle, path: &CodomainPath, lo: &Node, hi: &Node, cfg: &StepConfig, depth: usize) -> Vec<(Node, usize, usize)> {
    if lo.probe.index == hi.probe.index {
        return Vec::new();
    }
    let single = lo.probe.index.abs_diff(hi.probe.index) == 1;
    let chord_u = &hi.u - &lo.u;
    let chord_t = hi.t - lo.t;
    let len = (chord_u.norm_squared() + chord_t * chord_t).sqrt();
    let best = || {
        let n = if lo.probe.lambda.abs() <= hi.probe.lambda.abs() { lo } else { hi };
        vec![(n.clone(), lo.probe.index, hi.probe.index)]
    };
    if depth > 80 || len <= 1e-14 * (1.0 + lo.u.norm() + lo.t.abs()) {
        return best();
    }
    let normal = Tangent { u_dot: &chord_u / len, t_dot: chord_t / len, mode: TangentMode::Kernel };
    let mid_u = (&lo.u + &hi.u) * 0.5;
    let mid_t = 0.5 * (lo.t + hi.t);
    // Fold nodes are polished past newton_tol so t_c is accurate to fold_tol^2.
    let tight = StepConfig { newton_tol: (1e-2 * cfg.fold_tol * cfg.fold_tol).max(1e-6 * cfg.newton_tol), ..cfg.clone() };
    let Ok(c) = correct_hyperplane(map, path, &mid_u, mid_t, &normal, &tight)
        .or_else(|_| correct_hyperplane(map, path, &mid_u, mid_t, &normal, cfg))
    else {
        return best();
    };
    let Ok(probe) = probe_at(map, &c.u, lo.probe.index.max(hi.probe.index)) else { return best() };
    let mid = Node { u: c.u, t: c.t, probe };
    if single && mid.probe.lambda.abs() <= cfg.fold_tol {
        return vec![(mid, lo.probe.index, hi.probe.index)];
    }
    let mut out = localize(map, path, lo, &mid, cfg, depth + 1);
    out.extend(localize(map, path, &mid, hi, cfg, depth + 1));
    out
}

/// Builds the fold event for a localized node.
pub(crate) fn fold_event(map: &MapHandle, path: &CodomainPath, node: &Node, before: usize, after: usize, cfg: &StepConfig) -> FoldEvent {
    let gp = path.gamma_prime(node.t);
    let transversality = node.probe.psi.dot(&gp).abs() / gp.norm().max(f64::MIN_POSITIVE);
    let eps = 1e-5 * (1.0 + node.u.norm());
    let side = |s: f64| probe_at(map, &(&node.u + &node.probe.phi * s), node.probe.index).map(|p| p.lambda);
    let fold_test = match (side(eps), side(-eps)) {
        (Ok(a), Ok(b)) => (a - b) / (2.0 * eps),
        _ => 0.0,
    };
    let kind = if before.abs_diff(after) != 1 || node.probe.lambda.abs() > 10.0 * cfg.fold_tol || fold_test.abs() <= 1e-6 {
        FoldKind::Degenerate
    } else if transversality <= (100.0 * cfg.fold_tol).max(1e-5) {
        FoldKind::Branching
    } else {
        FoldKind::Turning
    };
    FoldEvent {
        u: node.u.clone(),
        t: node.t,
        lambda_s: node.probe.lambda,
        phi: node.probe.phi.clone(),
        psi: node.probe.psi.clone(),
        index_before: before,
        index_after: after,
        kind,
        transversality,
        fold_test,
    }
}

/// What a trace monitor sees.
pub enum TraceEvent<'a> {
    Point(&'a TracePoint),
    /// A localized fold and the unit tangent the trace arrived with.
    Fold(&'a FoldEvent, &'a Tangent),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Control {
    Continue,
    Stop,
}

pub type Monitor<'a> = &'a (dyn Fn(&TraceEvent<'_>) -> Control + Sync);

#[derive(Clone, Copy, Default)]
pub struct TraceOptions<'a> {
    /// Use only the regular tangent with fixed t orientation; stalls at folds.
    pub regular_only: bool,
    /// Orientation hint for the first tangent, as (u_dot, t_dot).
    pub initial_tangent: Option<&'a Tangent>,
    /// Sign of t_dot at the start when no hint is given.
    pub direction: f64,
    pub monitor: Option<Monitor<'a>>,
    /// Orthant to start in, for piecewise-linear maps started on a slab.
    pub start_orthant: Option<&'a [bool]>,
}

/// Traces the solution curve of F(u) = gamma(t) from (u0, t0) with adaptive
/// pseudo-arclength steps. Folds are detected from index changes between
/// accepted points and bisected down to |lambda_s| <= fold_tol.
pub fn trace(map: &MapHandle, path: &CodomainPath, u0: &State, t0: f64, cfg: &StepConfig, opts: TraceOptions<'_>) -> Result<TraceResult> {
    cfg.validate()?;
    if map.piecewise_linear().is_some() && !opts.regular_only {
        if let PathKind::LineImage(_) | PathKind::Segment { .. } = path.kind {
            return piecewise::trace_piecewise(map, path, u0, t0, opts, cfg);
        }
    }
    let direction = if opts.direction < 0.0 { -1.0 } else { 1.0 };
    let start = Node { u: u0.clone(), t: t0, probe: probe_at(map, u0, 0)? };
    let g0 = path.gamma(t0);
    let r0 = (map.eval(u0)? - &g0).norm();
    if r0 > 1e3 * cfg.newton_tol.max(1e-12) * (1.0 + g0.norm()) {
        return Err(Error::InvalidInput(format!("start point is off the path (residual {r0:.3e})")));
    }
    let mut tangent = tangent_from_probe(map, &start.probe, &path.gamma_prime(t0), cfg, opts.regular_only)?.normalized();
    match opts.initial_tangent {
        Some(h) => {
            if tangent.dot(h) < 0.0 {
                tangent = tangent.flipped();
            }
        }
        None => {
            if tangent.t_dot.abs() <= 1e-12 {
                return Err(Error::InvalidInput("start is at a fold; give an initial tangent".into()));
            }
            if tangent.t_dot * direction < 0.0 {
                tangent = tangent.flipped();
            }
        }
    }
    let mut points = vec![start.point(cfg)];
    let mut folds = Vec::new();
    let mut cur = start;
    let mut h = cfg.initial_step;
    let mut iterations = 0;
    let emit = |ev: TraceEvent<'_>| opts.monitor.map_or(Control::Continue, |m| m(&ev));
    if emit(TraceEvent::Point(&points[0])) == Control::Stop {
        return Ok(TraceResult { points, folds, terminal: Terminal::Stopped, newton_iterations: 0 });
    }
    let terminal = loop {
        if points.len() >= cfg.max_points {
            break Terminal::Budget;
        }
        if h < cfg.min_step {
            break Terminal::StepUnderflow;
        }
        let u_pred = &cur.u + &tangent.u_dot * h;
        let t_pred = cur.t + tangent.t_dot * h;
        let attempt = correct_hyperplane(map, path, &u_pred, t_pred, &tangent, cfg).and_then(|c| {
            let dist = ((&c.u - &u_pred).norm_squared() + (c.t - t_pred).powi(2)).sqrt();
            if dist > 0.6 * h {
                return Err(Error::NewtonDivergence { iterations: c.iterations, residual: dist });
            }
            let probe = probe_at(map, &c.u, cur.probe.index)?;
            Ok((c, probe))
        });
        let (c, probe) = match attempt {
            Ok(x) => x,
            Err(_) => {
                h *= 0.5;
                continue;
            }
        };
        let next = Node { u: c.u.clone(), t: c.t, probe };
        let next_tangent = match tangent_from_probe(map, &next.probe, &path.gamma_prime(c.t), cfg, opts.regular_only) {
            Ok(t) => {
                let mut t = t.normalized();
                if opts.regular_only {
                    if t.t_dot * direction < 0.0 {
                        t = t.flipped();
                    }
                } else if t.dot(&tangent) < 0.0 {
                    t = t.flipped();
                }
                t
            }
            Err(Error::NearSingularJacobian { lambda }) if opts.regular_only => {
                break Terminal::Stalled(format!("regular tangent undefined at lambda_s = {lambda:.3e}"));
            }
            Err(_) => {
                h *= 0.5;
                continue;
            }
        };
        if next_tangent.dot(&tangent) < 0.7 && h > 4.0 * cfg.min_step {
            h *= 0.5;
            continue;
        }
        iterations += c.iterations;
        let mut stop = false;
        if next.probe.index != cur.probe.index {
            for (node, before, after) in localize(map, path, &cur, &next, cfg, 0) {
                let ev = fold_event(map, path, &node, before, after, cfg);
                let mut pt = node.point(cfg);
                pt.classification = Classification::FoldNode;
                points.push(pt);
                let arriving = tangent.clone();
                if emit(TraceEvent::Fold(&ev, &arriving)) == Control::Stop {
                    stop = true;
                }
                folds.push(ev);
                if stop {
                    break;
                }
            }
        }
        if stop {
            break Terminal::Stopped;
        }
        let pt = next.point(cfg);
        let outside = !path.contains(pt.t);
        points.push(pt);
        if emit(TraceEvent::Point(points.last().expect("just pushed"))) == Control::Stop {
            break Terminal::Stopped;
        }
        if outside {
            break Terminal::RangeExhausted;
        }
        cur = next;
        tangent = next_tangent;
        if c.iterations <= 3 {
            h = (2.0 * h).min(cfg.max_step);
        }
    };
    Ok(TraceResult { points, folds, terminal, newton_iterations: iterations })
}

/// Writes trace points as CSV: t, u1..un, lambda_s, classification.
pub fn write_trace_csv(points: &[TracePoint], path: &std::path::Path) -> Result<()> {
    use std::io::Write;
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    let n = points.first().map_or(0, |p| p.u.len());
    let cols: Vec<String> = (1..=n).map(|i| format!("u{i}")).collect();
    writeln!(f, "t,{},lambda_s,classification", cols.join(","))?;
    for p in points {
        let vals: Vec<String> = p.u.iter().map(|v| format!("{v:.15e}")).collect();
        writeln!(f, "{:.15e},{},{:.15e},{:?}", p.t, vals.join(","), p.lambda_s, p.classification)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests;
