//! Exact continuation for piecewise-linear maps.
//!
//! On each orthant O the map is affine with Jacobian M_O, so along a line
//! image or a straight codomain segment the solution curve is affine in t
//! between events: a coordinate of u reaching zero, a kink of gamma, or the
//! end of the range. Crossing a slab where det M changes sign reverses the
//! direction of t (a fold); when the kink of gamma coincides with the slab
//! crossing the curve passes straight through (a branch point on the line).

use nalgebra::{DMatrix, DVector};

use super::{Classification, CodomainPath, Control, FoldEvent, FoldKind, PathKind, StepConfig, Tangent, TangentMode, Terminal, TraceEvent, TraceOptions, TracePoint, TraceResult};
use crate::error::{Error, Result};
use crate::problem::{orthant_of, MapHandle, PiecewiseLinear, State};
use crate::spectral::full_spectrum;

/// Slope of gamma on the open piece beyond t in direction `sigma`, and the
/// next kink (t, coordinate) if any.
fn path_piece(pl: &dyn PiecewiseLinear, path: &CodomainPath, t: f64, sigma: f64, tol: f64) -> Result<(State, Option<(f64, usize)>)> {
    match &path.kind {
        PathKind::Segment { b, .. } => Ok((b.clone(), None)),
        PathKind::LineImage(line) => {
            let mut kink: Option<(f64, usize)> = None;
            for j in 0..line.dim() {
                let d = line.direction[j];
                if d == 0.0 {
                    continue;
                }
                let tj = -line.base[j] / d;
                let ahead = (tj - t) * sigma;
                if ahead > tol && kink.is_none_or(|(tk, _)| ahead < (tk - t) * sigma) {
                    kink = Some((tj, j));
                }
            }
            let reach = kink.map_or(1.0, |(tk, _)| 0.5 * (tk - t).abs());
            let q = orthant_of(&line.point(t + sigma * reach));
            Ok((pl.piece_matrix(&q) * &line.direction, kink))
        }
        PathKind::Custom => Err(Error::InvalidInput("piecewise tracer needs a segment or line image".into())),
    }
}

struct Piece {
    det: f64,
    lu: nalgebra::LU<f64, nalgebra::Dyn, nalgebra::Dyn>,
    matrix: DMatrix<f64>,
}

fn piece(pl: &dyn PiecewiseLinear, orth: &[bool]) -> Option<Piece> {
    let m = pl.piece_matrix(orth);
    let scale = m.amax().max(f64::MIN_POSITIVE);
    let lu = m.clone().lu();
    let u = lu.u();
    if (0..u.nrows()).any(|i| u[(i, i)].abs() <= 1e-13 * scale) {
        return None;
    }
    Some(Piece { det: lu.determinant(), lu, matrix: m })
}

fn index_of(map: &MapHandle, p: &Piece) -> (usize, f64) {
    if map.is_symmetric() {
        if let Ok(s) = full_spectrum(&p.matrix) {
            let lam = s.eigenvalues.iter().copied().min_by(|a, b| a.abs().total_cmp(&b.abs())).unwrap_or(0.0);
            return (s.morse_index, lam);
        }
    }
    (usize::from(p.det < 0.0), p.det)
}

fn point(u: &State, t: f64, index: usize, lambda: f64, class: Classification) -> TracePoint {
    TracePoint { u: u.clone(), t, lambda_s: lambda, gap: f64::NAN, index, classification: class }
}

pub(crate) fn trace_piecewise(
    map: &MapHandle,
    path: &CodomainPath,
    u0: &State,
    t0: f64,
    opts: TraceOptions<'_>,
    cfg: &StepConfig,
) -> Result<TraceResult> {
    let pl = map.piecewise_linear().ok_or_else(|| Error::InvalidInput("map is not piecewise linear".into()))?;
    let n = map.dim();
    let mut sigma = if opts.direction < 0.0 { -1.0 } else { 1.0 };
    let mut orth: Vec<bool> = opts.start_orthant.map_or_else(|| orthant_of(u0), |o| o.to_vec());
    if orth.len() != n {
        return Err(Error::DimensionMismatch { expected: n, got: orth.len() });
    }
    let r0 = (map.eval(u0)? - path.gamma(t0)).norm();
    if r0 > 1e-8 * (1.0 + path.gamma(t0).norm()) {
        return Err(Error::InvalidInput(format!("start point is off the path (residual {r0:.3e})")));
    }
    let mut u = u0.clone();
    let mut t = t0;
    let emit = |ev: TraceEvent<'_>| opts.monitor.map_or(Control::Continue, |m| m(&ev));
    let Some(mut cur) = piece(pl, &orth) else {
        return Ok(TraceResult { points: vec![], folds: vec![], terminal: Terminal::Degenerate("singular start orthant".into()), newton_iterations: 0 });
    };
    let (idx0, lam0) = index_of(map, &cur);
    let mut points = vec![point(&u, t, idx0, lam0, Classification::Regular)];
    let mut folds = Vec::new();
    if emit(TraceEvent::Point(&points[0])) == Control::Stop {
        return Ok(TraceResult { points, folds, terminal: Terminal::Stopped, newton_iterations: 0 });
    }
    let mut last_event: Option<usize> = None;
    let mut stuck = 0;
    let terminal = loop {
        if points.len() >= cfg.max_points {
            break Terminal::Budget;
        }
        let tol_t = 1e-12 * (1.0 + t.abs());
        let (slope, kink) = path_piece(pl, path, t, sigma, tol_t)?;
        let v = cur.lu.solve(&slope).ok_or_else(|| Error::Singular("orthant matrix".into()))?;
        let d_range = if sigma > 0.0 { path.t_range.1 - t } else { t - path.t_range.0 }.max(0.0);
        let d_kink = kink.map_or(f64::INFINITY, |(tk, _)| (tk - t).abs());
        let mut events: Vec<(f64, usize)> = (0..n)
            .filter_map(|i| {
                let rate = sigma * v[i];
                if orth[i] && rate < 0.0 {
                    Some((u[i].max(0.0) / -rate, i))
                } else if !orth[i] && rate > 0.0 {
                    Some(((-u[i]).max(0.0) / rate, i))
                } else {
                    None
                }
            })
            .collect();
        events.sort_by(|a, b| a.0.total_cmp(&b.0));
        let d_u = events.first().map_or(f64::INFINITY, |e| e.0);
        let step = d_range.min(d_kink).min(d_u);
        if step <= tol_t {
            stuck += 1;
            if stuck > 2 * n + 2 {
                break Terminal::Degenerate("no progress between events".into());
            }
        } else {
            stuck = 0;
        }
        u.axpy(sigma * step, &v, 1.0);
        t += sigma * step;
        if step == d_range && d_range <= d_u.min(d_kink) {
            let (idx, lam) = index_of(map, &cur);
            points.push(point(&u, t, idx, lam, Classification::Regular));
            emit(TraceEvent::Point(points.last().expect("pushed")));
            break Terminal::RangeExhausted;
        }
        let mut class = Classification::Regular;
        if d_u <= d_kink + tol_t {
            let i = events[0].1;
            if events.len() > 1 && events[1].0 - events[0].0 <= tol_t {
                break Terminal::Degenerate(format!("corner: coordinates {} and {} vanish together", i, events[1].1));
            }
            if step <= tol_t && last_event == Some(i) {
                break Terminal::Degenerate(format!("inconsistent transition across u_{i} = 0"));
            }
            last_event = Some(i);
            u[i] = 0.0;
            let on_line_kink = kink.is_some_and(|(_, j)| j == i) && (d_kink - d_u).abs() <= tol_t;
            let mut next_orth = orth.clone();
            next_orth[i] = !orth[i];
            let Some(next) = piece(pl, &next_orth) else {
                break Terminal::Degenerate(format!("singular orthant across u_{i} = 0"));
            };
            if (next.det > 0.0) != (cur.det > 0.0) {
                class = Classification::FoldNode;
                let (before, _) = index_of(map, &cur);
                let (after, _) = index_of(map, &next);
                let mut phi = DVector::zeros(n);
                phi[i] = 1.0;
                let ev = FoldEvent {
                    u: u.clone(),
                    t,
                    lambda_s: 0.0,
                    psi: phi.clone(),
                    phi,
                    index_before: before,
                    index_after: after,
                    kind: if on_line_kink { FoldKind::Branching } else { FoldKind::Turning },
                    transversality: if on_line_kink { 0.0 } else { 1.0 },
                    fold_test: 1.0,
                };
                let arriving = Tangent { u_dot: &v * sigma, t_dot: sigma, mode: TangentMode::Piecewise }.normalized();
                let ctl = emit(TraceEvent::Fold(&ev, &arriving));
                folds.push(ev);
                if ctl == Control::Stop {
                    let (idx, _) = index_of(map, &next);
                    points.push(point(&u, t, idx, 0.0, class));
                    break Terminal::Stopped;
                }
                if !on_line_kink {
                    sigma = -sigma;
                }
            }
            orth = next_orth;
            cur = next;
        } else {
            last_event = None;
        }
        let (idx, lam) = index_of(map, &cur);
        points.push(point(&u, t, idx, if class == Classification::FoldNode { 0.0 } else { lam }, class));
        if emit(TraceEvent::Point(points.last().expect("pushed"))) == Control::Stop {
            break Terminal::Stopped;
        }
    };
    Ok(TraceResult { points, folds, terminal, newton_iterations: 0 })
}
