//! Bifurcation diagrams: the component of F^{-1}(F(c)) through u0 for a line
//! c(s) = u0 + s d. The line itself is the root branch. At each critical
//! point of the line a mirror branch crosses it; both halves of every mirror
//! are traced until they leave the range or reach another known crossing.
//! Preimages of g = F(u0) are the diagram points with s = 0.

pub mod export;

use std::collections::HashSet;
use std::sync::Mutex;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::continuation::{
    correct, fold_event, probe_at, trace, Classification, CodomainPath, Control, FoldEvent, FoldKind, LineSpec, Node, Probe, StepConfig,
    Tangent, TangentMode, Terminal, TraceEvent, TraceOptions, TracePoint,
};
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::problem::{newton_solve, orthant_of, residue, MapHandle, PiecewiseLinear, State};
use crate::semilinear::{LinearPart, PLNonlinearity};
use crate::solutions::{Solution, SolutionSet};
use crate::spectral::full_spectrum;
use crate::sturm::{solve_orthant, Outcome};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DiagramConfig {
    pub step: StepConfig,
    pub depth_limit: usize,
    /// Relative residue a harvested solution must reach.
    pub residue_threshold: f64,
    /// Harvested solutions closer than dedupe_rel (1 + ||u||) are merged.
    pub dedupe_rel: f64,
    /// Samples of the line used to bracket its critical points.
    pub scan_samples: usize,
    pub max_traces: usize,
    /// A fold within merge_rel (1 + ||u||) of a known crossing is that crossing.
    pub merge_rel: f64,
    pub exec: Exec,
}

impl Default for DiagramConfig {
    fn default() -> Self {
        Self {
            step: StepConfig::default(),
            depth_limit: 4,
            residue_threshold: 1e-10,
            dedupe_rel: 1e-6,
            scan_samples: 2000,
            max_traces: 400,
            merge_rel: 1e-4,
            exec: Exec::Parallel,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum BranchEnd {
    /// The root line, which is known exactly.
    Line,
    RangeExhausted,
    StepUnderflow,
    /// Reached a known crossing and continues as that branch.
    MergedWithBranch(usize),
    Stalled(String),
    Budget,
    Degenerate(String),
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Branch {
    pub id: usize,
    pub generation: usize,
    /// Index into `BifurcationDiagram::folds` of the crossing this branch
    /// was seeded from; `None` for the root.
    pub parent_fold: Option<usize>,
    /// +1 for the half leaving the crossing with increasing s, -1 otherwise.
    pub half: i8,
    pub points: Vec<TracePoint>,
    pub end: BranchEnd,
}

/// A point where a second curve of the diagram crosses a traced branch.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BranchPoint {
    pub fold: usize,
    pub on_branch: usize,
    pub u: State,
    pub s: f64,
    /// Velocity du/ds of the mirror curve (smooth maps).
    pub mirror: Option<State>,
    /// Orthants on either side of the slab (piecewise-linear maps).
    pub orthants: Option<(Vec<bool>, Vec<bool>)>,
    /// ||F(seed) - gamma(s_seed)|| of the uncorrected mirror seeds.
    pub seed_residual: f64,
    /// Branch ids of the (+, -) halves.
    pub halves: (usize, usize),
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct Budget {
    pub traces: usize,
    pub fold_events: usize,
    pub newton_iterations: usize,
    pub exhausted: bool,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BifurcationDiagram {
    pub line: LineSpec,
    pub g: State,
    pub branches: Vec<Branch>,
    pub folds: Vec<FoldEvent>,
    pub branch_points: Vec<BranchPoint>,
    pub solutions: SolutionSet,
    pub budget: Budget,
    /// Crossings off the root that could not be seeded.
    pub unresolved: usize,
    pub notes: Vec<String>,
}

/// d = sum c_i phi_i over the given modes.
pub fn mode_direction(modes: &[State], coeffs: &[f64]) -> Result<State> {
    if modes.is_empty() || modes.len() != coeffs.len() {
        return Err(Error::InvalidInput("one coefficient per mode".into()));
    }
    let mut d = State::zeros(modes[0].len());
    for (m, c) in modes.iter().zip(coeffs) {
        d.axpy(*c, m, 1.0);
    }
    Ok(d)
}

fn is_near(a: &State, b: &State, rel: f64) -> bool {
    (a - b).norm() <= rel * (1.0 + a.norm())
}

/// psi . D2F(u)[a, b] by central differences of the Jacobian.
fn second_derivative(map: &MapHandle, u: &State, psi: &State, a: &State, b: &State) -> Result<f64> {
    let e = 1e-4 * (1.0 + u.norm()) / a.norm().max(f64::MIN_POSITIVE);
    let jp = map.jac_vec(&(u + a * e), b)?;
    let jm = map.jac_vec(&(u - a * e), b)?;
    Ok(psi.dot(&(jp - jm)) / (2.0 * e))
}

/// Velocity of the second curve through a crossing where the known curve
/// moves with velocity v: w = v + kappa phi reflects the kernel component,
/// kappa = -2 psi.D2F[v, phi] / psi.D2F[phi, phi].
pub fn mirror_velocity(map: &MapHandle, u: &State, v: &State, phi: &State, psi: &State) -> Result<Option<State>> {
    let kk = second_derivative(map, u, psi, phi, phi)?;
    let vk = second_derivative(map, u, psi, v, phi)?;
    if kk.abs() <= 1e-8 * (1.0 + vk.abs()) {
        return Ok(None);
    }
    let kappa = -2.0 * vk / kk;
    if kappa.abs() * phi.norm() <= 1e-8 * v.norm() {
        return Ok(None);
    }
    Ok(Some(v + phi * kappa))
}

struct Root {
    points: Vec<TracePoint>,
    folds: Vec<FoldEvent>,
    /// Per fold: (mirror velocity or orthant pair, usable).
    seeds: Vec<RootSeed>,
}

enum RootSeed {
    Smooth(Option<State>),
    Piecewise(Vec<bool>, Vec<bool>),
    Skip,
}

fn piece_det(pl: &dyn PiecewiseLinear, orth: &[bool]) -> Option<(f64, usize)> {
    let m = pl.piece_matrix(orth);
    let scale = m.amax().max(f64::MIN_POSITIVE);
    let lu = m.clone().lu();
    let uu = lu.u();
    if (0..uu.nrows()).any(|i| uu[(i, i)].abs() <= 1e-13 * scale) {
        return None;
    }
    let index = full_spectrum(&m).map(|s| s.morse_index).unwrap_or(usize::from(lu.determinant() < 0.0));
    Some((lu.determinant(), index))
}

fn line_point(u: State, s: f64, index: usize, lambda: f64, class: Classification) -> TracePoint {
    TracePoint { u, t: s, lambda_s: lambda, gap: f64::NAN, index, classification: class }
}

/// Critical points of a piecewise-linear map on the line: kinks where the
/// orthant determinant changes sign.
fn piecewise_root(pl: &dyn PiecewiseLinear, line: &LineSpec) -> Root {
    let (s0, s1) = line.s_range;
    let mut kinks: Vec<(f64, usize)> = (0..line.dim())
        .filter(|&j| line.direction[j] != 0.0)
        .map(|j| (-line.base[j] / line.direction[j], j))
        .filter(|&(s, _)| s > s0 && s < s1)
        .collect();
    kinks.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut bounds = vec![s0];
    bounds.extend(kinks.iter().map(|k| k.0));
    bounds.push(s1);
    let pieces: Vec<Option<(Vec<bool>, f64, usize)>> = bounds
        .windows(2)
        .map(|w| {
            let q = orthant_of(&line.point(0.5 * (w[0] + w[1])));
            piece_det(pl, &q).map(|(d, i)| (q, d, i))
        })
        .collect();
    let mut points = Vec::new();
    let mut folds = Vec::new();
    let mut seeds = Vec::new();
    let idx = |k: usize| pieces[k].as_ref().map_or(0, |p| p.2);
    points.push(line_point(line.point(s0), s0, idx(0), f64::NAN, Classification::Regular));
    for (k, &(s, j)) in kinks.iter().enumerate() {
        let mut u = line.point(s);
        u[j] = 0.0;
        let corner = kinks.get(k + 1).is_some_and(|n| (n.0 - s).abs() <= 1e-12 * (1.0 + s.abs()))
            || (k > 0 && (kinks[k - 1].0 - s).abs() <= 1e-12 * (1.0 + s.abs()));
        let (Some(left), Some(right)) = (&pieces[k], &pieces[k + 1]) else {
            points.push(line_point(u, s, idx(k + 1), 0.0, Classification::Regular));
            continue;
        };
        let fold = (left.1 > 0.0) != (right.1 > 0.0);
        let class = if fold { Classification::FoldNode } else { Classification::Regular };
        points.push(line_point(u.clone(), s, right.2, if fold { 0.0 } else { f64::NAN }, class));
        if !fold {
            continue;
        }
        let mut phi = State::zeros(line.dim());
        phi[j] = 1.0;
        folds.push(FoldEvent {
            u,
            t: s,
            lambda_s: 0.0,
            psi: phi.clone(),
            phi,
            index_before: left.2,
            index_after: right.2,
            kind: if corner { FoldKind::Degenerate } else { FoldKind::Branching },
            transversality: 0.0,
            fold_test: 1.0,
        });
        seeds.push(if corner { RootSeed::Skip } else { RootSeed::Piecewise(left.0.clone(), right.0.clone()) });
    }
    points.push(line_point(line.point(s1), s1, idx(pieces.len() - 1), f64::NAN, Classification::Regular));
    Root { points, folds, seeds }
}

/// Brackets index changes along the line on a uniform grid and bisects
/// each to |lambda_s| <= fold_tol. The line solves its own path exactly, so
/// no correction is needed.
fn smooth_root(map: &MapHandle, line: &LineSpec, path: &CodomainPath, cfg: &DiagramConfig) -> Result<Root> {
    let (s0, s1) = line.s_range;
    let m = cfg.scan_samples.max(2);
    let ss: Vec<f64> = (0..=m).map(|j| s0 + (s1 - s0) * j as f64 / m as f64).collect();
    let probes: Vec<Result<Probe>> = cfg.exec.map(&ss, |&s| probe_at(map, &line.point(s), 0));
    let mut nodes = Vec::with_capacity(ss.len());
    for (s, p) in ss.iter().zip(probes) {
        nodes.push(Node { u: line.point(*s), t: *s, probe: p? });
    }
    let mut points: Vec<TracePoint> = nodes.iter().map(|n| n.point(&cfg.step)).collect();
    let mut found = Vec::new();
    for w in nodes.windows(2) {
        if w[0].probe.index != w[1].probe.index {
            bisect_line(map, line, &w[0], &w[1], cfg.step.fold_tol, 0, &mut found)?;
        }
    }
    let mut folds = Vec::new();
    let mut seeds = Vec::new();
    for (node, before, after) in found {
        let ev = fold_event(map, path, &node, before, after, &cfg.step);
        let mut pt = node.point(&cfg.step);
        pt.classification = Classification::FoldNode;
        points.push(pt);
        let seed = if ev.kind == FoldKind::Degenerate {
            RootSeed::Skip
        } else {
            RootSeed::Smooth(mirror_velocity(map, &ev.u, &line.direction, &ev.phi, &ev.psi)?)
        };
        folds.push(ev);
        seeds.push(seed);
    }
    points.sort_by(|a, b| a.t.total_cmp(&b.t));
    Ok(Root { points, folds, seeds })
}

fn bisect_line(map: &MapHandle, line: &LineSpec, lo: &Node, hi: &Node, fold_tol: f64, depth: usize, out: &mut Vec<(Node, usize, usize)>) -> Result<()> {
    if lo.probe.index == hi.probe.index {
        return Ok(());
    }
    let single = lo.probe.index.abs_diff(hi.probe.index) == 1;
    if depth > 90 || (hi.t - lo.t).abs() <= 1e-13 * (1.0 + lo.t.abs()) {
        let n = if lo.probe.lambda.abs() <= hi.probe.lambda.abs() { lo } else { hi };
        out.push((n.clone(), lo.probe.index, hi.probe.index));
        return Ok(());
    }
    let s = 0.5 * (lo.t + hi.t);
    let u = line.point(s);
    let probe = probe_at(map, &u, lo.probe.index.max(hi.probe.index))?;
    let mid = Node { u, t: s, probe };
    if single && mid.probe.lambda.abs() <= fold_tol {
        out.push((mid, lo.probe.index, hi.probe.index));
        return Ok(());
    }
    bisect_line(map, line, lo, &mid, fold_tol, depth + 1, out)?;
    bisect_line(map, line, &mid, hi, fold_tol, depth + 1, out)
}

/// Where and how one half of a mirror starts.
#[derive(Clone, Debug)]
enum Start {
    Smooth { u: State, s: f64, tangent: Tangent },
    Piecewise { u: State, s: f64, orthant: Vec<bool>, direction: f64 },
}

struct Task {
    id: usize,
    bp: usize,
    half: i8,
    start: Option<Start>,
}

struct HalfResult {
    points: Vec<TracePoint>,
    folds: Vec<FoldEvent>,
    /// (branch point index, arriving tangent).
    merged: Option<(usize, Tangent)>,
    terminal: Terminal,
    newton: usize,
    error: Option<String>,
}

/// Corrected seeds u_c +- delta w at s_c +- delta on the mirror curve.
/// delta grows if the corrector falls back onto the known curve.
fn smooth_seeds(
    map: &MapHandle,
    path: &CodomainPath,
    u_c: &State,
    s_c: f64,
    v: &State,
    w: &State,
    cfg: &DiagramConfig,
) -> ([Option<Start>; 2], f64) {
    let mut out = [None, None];
    let mut seed_res: f64 = 0.0;
    let sep = (w - v).norm();
    for (k, sign) in [1.0, -1.0].into_iter().enumerate() {
        let mut delta = 10.0 * cfg.step.fold_tol * (1.0 + u_c.norm());
        for _ in 0..4 {
            let s = s_c + sign * delta;
            if !path.contains(s) {
                break;
            }
            let seed = u_c + w * (sign * delta);
            if let Ok(f) = map.eval(&seed) {
                seed_res = seed_res.max((f - path.gamma(s)).norm());
            }
            let tangent = Tangent { u_dot: w * sign, t_dot: sign, mode: TangentMode::Kernel }.normalized();
            if let Ok(c) = correct(map, path, &seed, s, &tangent, &cfg.step) {
                let off_known = (&c.u - (u_c + v * (sign * delta))).norm();
                let off_seed = (&c.u - &seed).norm();
                if off_known > 0.25 * delta * sep && off_seed < 0.25 * delta * sep {
                    out[k] = Some(Start::Smooth { u: c.u, s: c.t, tangent });
                    break;
                }
            }
            delta *= 10.0;
        }
    }
    (out, seed_res)
}

fn run_half(map: &MapHandle, path: &CodomainPath, start: &Start, known: &[(State, usize)], cfg: &DiagramConfig) -> HalfResult {
    let merged: Mutex<Option<(usize, Tangent)>> = Mutex::new(None);
    let monitor = |ev: &TraceEvent<'_>| {
        if let TraceEvent::Fold(f, arriving) = ev {
            if let Some(&(_, k)) = known.iter().find(|(u, _)| is_near(u, &f.u, cfg.merge_rel)) {
                *merged.lock().expect("monitor lock") = Some((k, (*arriving).clone()));
                return Control::Stop;
            }
        }
        Control::Continue
    };
    let result = match start {
        Start::Smooth { u, s, tangent } => {
            let opts = TraceOptions { initial_tangent: Some(tangent), monitor: Some(&monitor), ..TraceOptions::default() };
            trace(map, path, u, *s, &cfg.step, opts)
        }
        Start::Piecewise { u, s, orthant, direction } => {
            let opts = TraceOptions { direction: *direction, start_orthant: Some(orthant), monitor: Some(&monitor), ..TraceOptions::default() };
            trace(map, path, u, *s, &cfg.step, opts)
        }
    };
    let merged = merged.into_inner().expect("monitor lock");
    match result {
        Ok(r) => HalfResult { points: r.points, folds: r.folds, merged, terminal: r.terminal, newton: r.newton_iterations, error: None },
        Err(e) => HalfResult {
            points: Vec::new(),
            folds: Vec::new(),
            merged: None,
            terminal: Terminal::Degenerate(e.to_string()),
            newton: 0,
            error: Some(e.to_string()),
        },
    }
}

/// Builds the diagram of F^{-1}(F(c)) through u0 = line.base and harvests
/// the preimages of g.
pub fn build_diagram(map: &MapHandle, line: &LineSpec, g: &State, cfg: &DiagramConfig, depth_limit: usize) -> Result<BifurcationDiagram> {
    cfg.step.validate()?;
    if line.dim() != map.dim() {
        return Err(Error::DimensionMismatch { expected: map.dim(), got: line.dim() });
    }
    let r0 = residue(map, &line.base, g)?;
    if r0 > cfg.residue_threshold {
        return Err(Error::SeedNotOnDiagram(r0));
    }
    let path = CodomainPath::line_image(map, line);
    let root = match map.piecewise_linear() {
        Some(pl) => piecewise_root(pl, line),
        None => smooth_root(map, line, &path, cfg)?,
    };
    let mut diagram = BifurcationDiagram {
        line: line.clone(),
        g: g.clone(),
        branches: vec![Branch { id: 0, generation: 0, parent_fold: None, half: 0, points: root.points, end: BranchEnd::Line }],
        folds: Vec::new(),
        branch_points: Vec::new(),
        solutions: SolutionSet::new(cfg.dedupe_rel),
        budget: Budget::default(),
        unresolved: 0,
        notes: Vec::new(),
    };
    diagram.budget.fold_events += root.folds.len();

    // Branch points of the current generation, with their seeds.
    let mut pending: Vec<(usize, [Option<Start>; 2])> = Vec::new();
    let mut next_id = 1;
    for (ev, seed) in root.folds.into_iter().zip(root.seeds) {
        let fold = diagram.folds.len();
        let (starts, mirror, orthants, seed_residual) = match seed {
            RootSeed::Smooth(Some(w)) => {
                let (st, r) = smooth_seeds(map, &path, &ev.u, ev.t, &line.direction, &w, cfg);
                (st, Some(w), None, r)
            }
            RootSeed::Piecewise(left, right) => {
                let st = [
                    Some(Start::Piecewise { u: ev.u.clone(), s: ev.t, orthant: left.clone(), direction: 1.0 }),
                    Some(Start::Piecewise { u: ev.u.clone(), s: ev.t, orthant: right.clone(), direction: -1.0 }),
                ];
                (st, None, Some((left, right)), 0.0)
            }
            RootSeed::Smooth(None) | RootSeed::Skip => {
                diagram.notes.push(format!("crossing at s = {:.6e} not seeded ({:?})", ev.t, ev.kind));
                diagram.folds.push(ev);
                continue;
            }
        };
        let halves = (next_id, next_id + 1);
        next_id += 2;
        diagram.branch_points.push(BranchPoint { fold, on_branch: 0, u: ev.u.clone(), s: ev.t, mirror, orthants, seed_residual, halves });
        diagram.folds.push(ev);
        pending.push((diagram.branch_points.len() - 1, starts));
    }

    let mut generation = 1;
    while !pending.is_empty() {
        if generation > depth_limit {
            diagram.notes.push(format!("depth limit {depth_limit} reached with {} crossings unexplored", pending.len()));
            diagram.unresolved += pending.len();
            break;
        }
        let mut tasks = Vec::new();
        for (bp, starts) in pending.drain(..) {
            let (hp, hm) = diagram.branch_points[bp].halves;
            let [a, b] = starts;
            tasks.push(Task { id: hp, bp, half: 1, start: a });
            tasks.push(Task { id: hm, bp, half: -1, start: b });
        }
        let room = cfg.max_traces.saturating_sub(diagram.budget.traces);
        if tasks.len() > room {
            tasks.truncate(room);
            diagram.budget.exhausted = true;
        }
        let known: Vec<(State, usize)> = diagram.branch_points.iter().enumerate().map(|(k, b)| (b.u.clone(), k)).collect();
        let results: Vec<Option<HalfResult>> =
            cfg.exec.map(&tasks, |task| task.start.as_ref().map(|st| run_half(map, &path, st, &known, cfg)));
        let mut fresh: Vec<(State, f64, State, usize, usize)> = Vec::new();
        for (task, res) in tasks.iter().zip(results) {
            let parent_fold = Some(diagram.branch_points[task.bp].fold);
            let Some(res) = res else {
                diagram.branches.push(Branch {
                    id: task.id,
                    generation,
                    parent_fold,
                    half: task.half,
                    points: Vec::new(),
                    end: BranchEnd::Degenerate("no mirror seed".into()),
                });
                continue;
            };
            diagram.budget.traces += 1;
            diagram.budget.newton_iterations += res.newton;
            diagram.budget.fold_events += res.folds.len();
            let end = if let Some((k, arriving)) = &res.merged {
                let bp = &diagram.branch_points[*k];
                // The half we arrived along lies in direction -arriving.
                let along = match &bp.mirror {
                    Some(w) => -(arriving.u_dot.dot(w) + arriving.t_dot),
                    None => -arriving.t_dot,
                };
                BranchEnd::MergedWithBranch(if along >= 0.0 { bp.halves.0 } else { bp.halves.1 })
            } else if let Some(e) = res.error {
                BranchEnd::Degenerate(e)
            } else {
                match res.terminal {
                    Terminal::RangeExhausted => BranchEnd::RangeExhausted,
                    Terminal::StepUnderflow => BranchEnd::StepUnderflow,
                    Terminal::Budget => BranchEnd::Budget,
                    Terminal::Stalled(m) => BranchEnd::Stalled(m),
                    Terminal::Degenerate(m) => BranchEnd::Degenerate(m),
                    Terminal::Stopped => BranchEnd::Stalled("stopped".into()),
                }
            };
            for f in res.folds {
                let near_known = known.iter().any(|(u, _)| is_near(u, &f.u, cfg.merge_rel));
                if f.kind == FoldKind::Branching && !near_known && !fresh.iter().any(|x| is_near(&x.0, &f.u, cfg.merge_rel)) {
                    // Arrival velocity of this branch at the crossing.
                    let prev = res.points.iter().rev().find(|p| p.classification != Classification::FoldNode && !is_near(&p.u, &f.u, 1e-12));
                    if let Some(p) = prev {
                        let ds = f.t - p.t;
                        if ds.abs() > 1e-12 {
                            let v = (&f.u - &p.u) / ds;
                            fresh.push((f.u.clone(), f.t, v, diagram.folds.len(), task.id));
                        }
                    }
                }
                diagram.folds.push(f);
            }
            diagram.branches.push(Branch { id: task.id, generation, parent_fold, half: task.half, points: res.points, end });
        }
        generation += 1;
        for (u, s, v, fold, on_branch) in fresh {
            let ev = &diagram.folds[fold];
            if map.piecewise_linear().is_some() {
                diagram.unresolved += 1;
                continue;
            }
            let Ok(Some(w)) = mirror_velocity(map, &u, &v, &ev.phi, &ev.psi) else {
                diagram.unresolved += 1;
                continue;
            };
            let (starts, seed_residual) = smooth_seeds(map, &path, &u, s, &v, &w, cfg);
            let halves = (next_id, next_id + 1);
            next_id += 2;
            diagram.branch_points.push(BranchPoint { fold, on_branch, u, s, mirror: Some(w), orthants: None, seed_residual, halves });
            pending.push((diagram.branch_points.len() - 1, starts));
        }
    }
    diagram.branches.sort_by_key(|b| b.id);
    diagram.solutions = harvest_solutions(map, &diagram, g, cfg)?;
    Ok(diagram)
}

/// Linear interpolation of every branch to s = 0, polished by Newton on
/// F(u) = g, filtered by relative residue and deduplicated.
pub fn harvest_solutions(map: &MapHandle, diagram: &BifurcationDiagram, g: &State, cfg: &DiagramConfig) -> Result<SolutionSet> {
    let s0 = 0.0;
    let mut raw: Vec<State> = Vec::new();
    for b in &diagram.branches {
        if b.end == BranchEnd::Line {
            raw.push(diagram.line.base.clone());
            continue;
        }
        for w in b.points.windows(2) {
            let (p, q) = (&w[0], &w[1]);
            if p.t == s0 {
                raw.push(p.u.clone());
            }
            if (p.t - s0) * (q.t - s0) < 0.0 {
                let th = (s0 - p.t) / (q.t - p.t);
                raw.push(&p.u + (&q.u - &p.u) * th);
            }
        }
        if let Some(last) = b.points.last() {
            if last.t == s0 && b.points.len() > 1 {
                raw.push(last.u.clone());
            }
        }
    }
    let gn = g.norm();
    let tol = 1e-15 * gn.max(1.0);
    let polished: Vec<Option<Solution>> = cfg.exec.map(&raw, |u| {
        let out = newton_solve(map, u, g, tol, 8).ok()?;
        let r = residue(map, &out.u, g).ok()?;
        if r > cfg.residue_threshold {
            return None;
        }
        let morse_index = map.morse_index(&out.u).ok().flatten();
        Some(Solution { u: out.u, morse_index, residue: r })
    });
    Ok(SolutionSet::from_candidates(polished.into_iter().flatten().collect(), cfg.dedupe_rel))
}

/// Result of random orthant sampling.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct OrthantSample {
    pub seeds: Vec<State>,
    pub draws: usize,
    pub singular: usize,
    /// Draw number (1-based) of the first sign-consistent orthant.
    pub first_hit: Option<usize>,
}

/// Draws orthant sign patterns uniformly without replacement, solves
/// (A - D^O) u = g and keeps sign-consistent solutions.
pub fn sample_orthant_seeds(
    op: &LinearPart,
    nl: &PLNonlinearity,
    g: &State,
    max_draws: usize,
    rng_seed: u64,
    stop_at_first: bool,
) -> Result<OrthantSample> {
    let n = op.dim();
    if n > 62 {
        return Err(Error::TooLarge(format!("orthant sampling needs n <= 62, got {n}")));
    }
    if g.len() != n {
        return Err(Error::DimensionMismatch { expected: n, got: g.len() });
    }
    let a = op.to_dense();
    let total = 1u64 << n;
    let draws = (max_draws as u64).min(total) as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let mut seen = HashSet::new();
    let mut out = OrthantSample { seeds: Vec::new(), draws: 0, singular: 0, first_hit: None };
    while out.draws < draws {
        let p: u64 = rng.random_range(0..total);
        if !seen.insert(p) {
            continue;
        }
        out.draws += 1;
        match solve_orthant(&a, nl, g, p) {
            Outcome::Consistent(x, _) => {
                out.first_hit.get_or_insert(out.draws);
                out.seeds.push(x);
                if stop_at_first {
                    break;
                }
            }
            Outcome::Singular => out.singular += 1,
            Outcome::Inconsistent => {}
        }
    }
    Ok(out)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CampaignRow {
    pub line: usize,
    pub description: String,
    pub harvested: usize,
    pub new: usize,
    pub branches: usize,
    pub folds: usize,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Campaign {
    pub solutions: SolutionSet,
    /// Index of the first line that found each solution (aligned with
    /// `solutions.items`; `None` for extra seeds).
    pub found_by: Vec<Option<usize>>,
    pub rows: Vec<CampaignRow>,
}

/// Union of the harvests of one diagram per line, plus any extra known
/// solutions, globally deduplicated.
pub fn multi_line_campaign(map: &MapHandle, lines: &[LineSpec], extra: &[State], g: &State, cfg: &DiagramConfig) -> Result<Campaign> {
    let mut set = SolutionSet::new(cfg.dedupe_rel);
    let mut origin: Vec<(State, Option<usize>)> = Vec::new();
    let mut rows = Vec::new();
    for (k, line) in lines.iter().enumerate() {
        let d = build_diagram(map, line, g, cfg, cfg.depth_limit)?;
        let before = set.len();
        set = set.merge(&d.solutions);
        for s in &d.solutions.items {
            if !origin.iter().any(|(u, _)| is_near(u, &s.u, cfg.dedupe_rel)) {
                origin.push((s.u.clone(), Some(k)));
            }
        }
        rows.push(CampaignRow {
            line: k,
            description: line.description.clone(),
            harvested: d.solutions.len(),
            new: set.len() - before,
            branches: d.branches.len(),
            folds: d.folds.len(),
        });
    }
    let mut extras = Vec::new();
    for u in extra {
        let r = residue(map, u, g)?;
        if r <= cfg.residue_threshold {
            extras.push(Solution { u: u.clone(), morse_index: map.morse_index(u)?, residue: r });
            if !origin.iter().any(|(v, _)| is_near(v, u, cfg.dedupe_rel)) {
                origin.push((u.clone(), None));
            }
        }
    }
    set = set.merge(&SolutionSet::from_candidates(extras, cfg.dedupe_rel));
    let found_by = set.items.iter().map(|s| origin.iter().find(|(u, _)| is_near(u, &s.u, cfg.dedupe_rel)).and_then(|o| o.1)).collect();
    Ok(Campaign { solutions: set, found_by, rows })
}

/// Lines base + s d for every (seed, direction) pair.
pub fn lines_from(seeds: &[State], directions: &[State], s_range: (f64, f64)) -> Result<Vec<LineSpec>> {
    let mut out = Vec::new();
    for (i, b) in seeds.iter().enumerate() {
        for (j, d) in directions.iter().enumerate() {
            out.push(LineSpec::new(b.clone(), d.clone(), s_range)?.with_description(format!("seed {i}, direction {j}")));
        }
    }
    Ok(out)
}
