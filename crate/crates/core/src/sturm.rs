//! Discretized Sturm-Liouville problems with piecewise-linear or arctan
//! nonlinearities: orthant census, Lazer-McKenna seeds and slab tests.

use std::fmt::Write as _;
use std::io::Write as _;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::problem::{orthant_of, State};
use crate::semilinear::{LinearPart, PLNonlinearity, TridiagonalOperator};
use crate::solutions::{Solution, SolutionSet};
use crate::spectral::full_spectrum;

pub const MAX_CENSUS_DIM: usize = 24;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CensusEntry {
    pub orthant: String,
    pub solution: Solution,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct OrthantCensus {
    pub solutions: SolutionSet,
    pub entries: Vec<CensusEntry>,
    pub consistent: usize,
    pub inconsistent: usize,
    pub singular: usize,
    /// Consistent solutions with an exactly zero coordinate.
    pub nongeneric_hits: usize,
}

pub fn orthant_label(positive: &[bool]) -> String {
    positive.iter().map(|&p| if p { '+' } else { '-' }).collect()
}

pub(crate) enum Outcome {
    Consistent(State, bool),
    Inconsistent,
    Singular,
}

pub(crate) fn solve_orthant(a: &DMatrix<f64>, nl: &PLNonlinearity, g: &State, pattern: u64) -> Outcome {
    let n = g.len();
    let mut m = a.clone();
    for i in 0..n {
        m[(i, i)] -= nl.slope(pattern >> i & 1 == 1);
    }
    let scale = m.amax();
    let lu = m.lu();
    let u = lu.u();
    if (0..n).any(|i| u[(i, i)].abs() <= 1e-13 * scale) {
        return Outcome::Singular;
    }
    let Some(x) = lu.solve(g) else { return Outcome::Singular };
    let mut zero = false;
    for i in 0..n {
        let positive = pattern >> i & 1 == 1;
        if x[i] == 0.0 {
            zero = true;
        } else if (x[i] > 0.0) != positive {
            return Outcome::Inconsistent;
        }
    }
    Outcome::Consistent(x, zero)
}

/// Solves the linear system of every orthant and keeps the sign-consistent
/// solutions. Exhaustive in 2^n, so n is capped at [`MAX_CENSUS_DIM`].
pub fn enumerate_pl_solutions(op: &LinearPart, nl: &PLNonlinearity, g: &State, exec: Exec) -> Result<OrthantCensus> {
    let n = op.dim();
    if n > MAX_CENSUS_DIM {
        return Err(Error::TooLarge(format!("orthant census needs n <= {MAX_CENSUS_DIM}, got {n}")));
    }
    if g.len() != n {
        return Err(Error::DimensionMismatch { expected: n, got: g.len() });
    }
    let a = op.to_dense();
    let total = 1usize << n;
    let outcomes = exec.map_chunked(total, 256, |p| match solve_orthant(&a, nl, g, p as u64) {
        Outcome::Consistent(x, z) => (1u8, Some((p, x, z))),
        Outcome::Inconsistent => (0, None),
        Outcome::Singular => (2, None),
    });
    let mut consistent = 0;
    let mut inconsistent = 0;
    let mut singular = 0;
    let mut found = Vec::new();
    for (tag, hit) in outcomes {
        match tag {
            0 => inconsistent += 1,
            2 => singular += 1,
            _ => {
                consistent += 1;
                found.push(hit.expect("consistent outcome carries a solution"));
            }
        }
    }
    let nongeneric_hits = found.iter().filter(|f| f.2).count();
    let gn = g.norm();
    let entries: Vec<CensusEntry> = exec.map(&found, |(_, x, _)| {
        let orth = orthant_of(x);
        let mut m = a.clone();
        for i in 0..n {
            m[(i, i)] -= nl.slope(orth[i]);
        }
        let morse = full_spectrum(&m).map(|s| s.morse_index).ok();
        let r = &m * x - g;
        let residue = if gn > 0.0 { r.norm() / gn } else { r.norm() };
        CensusEntry { orthant: orthant_label(&orth), solution: Solution { u: x.clone(), morse_index: morse, residue } }
    });
    let solutions = SolutionSet::from_candidates(entries.iter().map(|e| e.solution.clone()).collect(), 1e-9);
    Ok(OrthantCensus { solutions, entries, consistent, inconsistent, singular, nongeneric_hits })
}

/// Ground state of L: (lambda_1, phi_1) with phi_1 positive. For the
/// tridiagonal operator phi_1 is the unnormalized sin(I_h).
fn ground_state(op: &LinearPart) -> Result<(f64, DVector<f64>)> {
    if let LinearPart::Tridiagonal(t) = op {
        return Ok((t.eigenvalue(1), t.mode(1)));
    }
    let (vals, vecs) = op.lowest_modes(1)?;
    let phi = &vecs[0] / vecs[0].amax();
    Ok((vals[0], phi))
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LazerMcKenna {
    pub g: State,
    pub positive: State,
    pub negative: State,
}

/// The two explicit solutions of F(u) = -t phi_1 when l_- < lambda_1 < l_+:
/// u = t phi_1 / (l_+ - lambda_1) and u = t phi_1 / (l_- - lambda_1).
pub fn lazer_mckenna_seeds(op: &LinearPart, nl: &PLNonlinearity, t: f64) -> Result<LazerMcKenna> {
    if !(t > 0.0) {
        return Err(Error::InvalidInput("load t must be positive".into()));
    }
    let (lambda1, phi) = ground_state(op)?;
    if !(nl.ell_minus < lambda1 && lambda1 < nl.ell_plus) {
        return Err(Error::EigenvalueStraddle { ell_minus: nl.ell_minus, ell_plus: nl.ell_plus, lambda1 });
    }
    let g = -&phi * t;
    let positive = &phi * (t / (nl.ell_plus - lambda1));
    let negative = &phi * (t / (nl.ell_minus - lambda1));
    let a = op.to_dense();
    for u in [&positive, &negative] {
        let o = orthant_of(u);
        let f = &a * u - DVector::from_fn(u.len(), |i, _| nl.slope(o[i]) * u[i]);
        let eps = (f - &g).norm() / g.norm();
        if eps > 1e-12 {
            return Err(Error::InvalidInput(format!("seed residue {eps:.3e} exceeds 1e-12")));
        }
    }
    Ok(LazerMcKenna { g, positive, negative })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum SlabClass {
    Fold,
    NotCritical,
    Degenerate,
}

/// Classifies a point on a slab {u_i = 0}: a fold when det changes sign
/// between the two adjacent orthant matrices. Points on several slabs at
/// once are degenerate; points on no slab are not critical.
pub fn slab_fold_test(op: &LinearPart, nl: &PLNonlinearity, u: &State) -> Result<SlabClass> {
    let n = op.dim();
    if u.len() != n {
        return Err(Error::DimensionMismatch { expected: n, got: u.len() });
    }
    let tol = 1e-12 * (1.0 + u.amax());
    let on: Vec<usize> = (0..n).filter(|&i| u[i].abs() <= tol).collect();
    match on.len() {
        0 => return Ok(SlabClass::NotCritical),
        1 => {}
        _ => return Ok(SlabClass::Degenerate),
    }
    let i = on[0];
    let a = op.to_dense();
    let mut signs = orthant_of(u);
    let det_of = |signs: &[bool]| {
        let mut m = a.clone();
        for k in 0..n {
            m[(k, k)] -= nl.slope(signs[k]);
        }
        let scale = m.amax().powi(n as i32);
        let d = m.determinant();
        (d, d.abs() <= 1e-13 * scale)
    };
    signs[i] = true;
    let (dp, sp) = det_of(&signs);
    signs[i] = false;
    let (dm, sm) = det_of(&signs);
    if sp || sm {
        return Err(Error::SingularAdjacent);
    }
    Ok(if (dp > 0.0) != (dm > 0.0) { SlabClass::Fold } else { SlabClass::NotCritical })
}

/// Slope ladder with l_- = lambda_1/2, l_+^k = (lambda_k + lambda_{k+1})/2
/// for k < n and l_+^n = lambda_n + lambda_1/2.
pub fn slope_ladder(op: &TridiagonalOperator) -> Vec<(usize, f64, f64)> {
    let lam = op.eigenvalues();
    let n = op.n;
    let ell_minus = lam[0] / 2.0;
    (1..=n)
        .map(|k| {
            let ell_plus = if k < n { 0.5 * (lam[k - 1] + lam[k]) } else { lam[n - 1] + lam[0] / 2.0 };
            (k, ell_minus, ell_plus)
        })
        .collect()
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CensusRow {
    pub label: String,
    pub ell_minus: f64,
    pub ell_plus: f64,
    pub count: usize,
    pub singular: usize,
    pub nongeneric: usize,
}

pub fn census_markdown(rows: &[CensusRow]) -> String {
    let mut s = String::from("| k | l_- | l_+ | solutions |\n|---|---|---|---|\n");
    for r in rows {
        let _ = writeln!(s, "| {} | {:.4} | {:.4} | {} |", r.label, r.ell_minus, r.ell_plus, r.count);
    }
    s
}

pub fn write_census_csv(census: &OrthantCensus, path: &Path) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    let n = census.entries.first().map_or(0, |e| e.solution.u.len());
    let cols: Vec<String> = (1..=n).map(|i| format!("u{i}")).collect();
    writeln!(f, "orthant,morse_index,residue,{}", cols.join(","))?;
    let mut entries: Vec<&CensusEntry> = census.entries.iter().collect();
    entries.sort_by(|a, b| a.orthant.cmp(&b.orthant));
    for e in entries {
        let vals: Vec<String> = e.solution.u.iter().map(|v| format!("{v:.17e}")).collect();
        let m = e.solution.morse_index.map_or(String::new(), |m| m.to_string());
        writeln!(f, "{},{},{:.3e},{}", e.orthant, m, e.solution.residue, vals.join(","))?;
    }
    Ok(())
}
