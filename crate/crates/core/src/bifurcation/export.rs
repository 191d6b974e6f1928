//! Diagram export: JSON, solution and campaign CSV, SVG projections.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{BifurcationDiagram, BranchEnd, Campaign};
use crate::error::Result;
use crate::problem::State;
use crate::solutions::SolutionSet;
use crate::svg::SvgPlot;

pub fn write_diagram_json(d: &BifurcationDiagram, path: &Path) -> Result<()> {
    let f = std::io::BufWriter::new(std::fs::File::create(path)?);
    serde_json::to_writer_pretty(f, d).map_err(|e| crate::Error::BadFormat(e.to_string()))
}

/// Columns: index, morse_index, residue, u1..un.
pub fn write_solutions_csv(set: &SolutionSet, path: &Path) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    let n = set.items.first().map_or(0, |s| s.u.len());
    let cols: Vec<String> = (1..=n).map(|i| format!("u{i}")).collect();
    writeln!(f, "index,morse_index,residue,{}", cols.join(","))?;
    for (k, s) in set.items.iter().enumerate() {
        let m = s.morse_index.map_or(String::new(), |m| m.to_string());
        let u: Vec<String> = s.u.iter().map(|v| format!("{v:.16e}")).collect();
        writeln!(f, "{k},{m},{:.3e},{}", s.residue, u.join(","))?;
    }
    Ok(())
}

pub fn write_campaign_csv(c: &Campaign, path: &Path) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(f, "line,description,harvested,new,branches,folds")?;
    for r in &c.rows {
        writeln!(f, "{},\"{}\",{},{},{},{}", r.line, r.description.replace('"', "'"), r.harvested, r.new, r.branches, r.folds)?;
    }
    Ok(())
}

/// Plane onto which a diagram is drawn.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Projection {
    /// (u_i, u_j), zero-based.
    Coordinates { i: usize, j: usize },
    /// (s, <v, u>).
    ModeVsParameter { mode: State },
}

impl Projection {
    fn apply(&self, u: &State, s: f64) -> (f64, f64) {
        match self {
            Projection::Coordinates { i, j } => (u[*i], u[*j]),
            Projection::ModeVsParameter { mode } => (s, mode.dot(u)),
        }
    }

    fn axes(&self) -> (String, String) {
        match self {
            Projection::Coordinates { i, j } => (format!("u{}", i + 1), format!("u{}", j + 1)),
            Projection::ModeVsParameter { .. } => ("s".into(), "<phi, u>".into()),
        }
    }
}

/// Root line solid black, mirrors solid blue for s >= 0 and dashed for
/// s < 0, crossings red, harvested solutions green.
pub fn diagram_svg(d: &BifurcationDiagram, proj: &Projection, title: &str) -> String {
    let (xl, yl) = proj.axes();
    let mut plot = SvgPlot::new(title).labels(xl, yl);
    for b in &d.branches {
        if b.end == BranchEnd::Line {
            let pts = b.points.iter().map(|p| proj.apply(&p.u, p.t)).collect();
            plot.polyline(pts, "black", false);
            continue;
        }
        // Split into runs of constant sign of s.
        let mut run: Vec<(f64, f64)> = Vec::new();
        let mut sign = None;
        for p in &b.points {
            let sg = p.t >= 0.0;
            if sign.is_some_and(|s| s != sg) {
                let last = *run.last().expect("run is non-empty");
                plot.polyline(std::mem::take(&mut run), "#1f5fbf", sign == Some(false));
                run.push(last);
            }
            sign = Some(sg);
            run.push(proj.apply(&p.u, p.t));
        }
        plot.polyline(run, "#1f5fbf", sign == Some(false));
    }
    for bp in &d.branch_points {
        let (x, y) = proj.apply(&bp.u, bp.s);
        plot.marker(x, y, "#c0392b", None);
    }
    for (k, s) in d.solutions.items.iter().enumerate() {
        let (x, y) = proj.apply(&s.u, 0.0);
        plot.marker(x, y, "#27ae60", Some(format!("P{k}")));
    }
    plot.render()
}
