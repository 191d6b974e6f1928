//! Scan tables, nodal field dumps and heatmaps.

use std::fmt::Write as _;
use std::io::Write;
use std::path::Path;

use super::{GridDomain, VerticalScan};
use crate::error::Result;
use crate::problem::State;
use crate::solutions::SolutionSet;

/// Columns: t, lambda1..lambdam.
pub fn write_scan_csv(scan: &VerticalScan, path: &Path) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    let m = scan.samples.first().map_or(0, |s| s.eigenvalues.len());
    let cols: Vec<String> = (1..=m).map(|i| format!("lambda{i}")).collect();
    writeln!(f, "t,{}", cols.join(","))?;
    for s in &scan.samples {
        let v: Vec<String> = s.eigenvalues.iter().map(|x| format!("{x:.12e}")).collect();
        writeln!(f, "{:.12e},{}", s.t, v.join(","))?;
    }
    Ok(())
}

/// One row per unknown: node, x, y, then one column per solution. Without
/// a grid the coordinates are left empty.
pub fn write_fields_csv(grid: Option<&GridDomain>, set: &SolutionSet, path: &Path) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    let cols: Vec<String> = (0..set.items.len()).map(|k| format!("u{k}")).collect();
    writeln!(f, "node,x,y,{}", cols.join(","))?;
    let n = set.items.first().map_or(0, |s| s.u.len());
    let xy: Vec<Option<[f64; 2]>> = match grid {
        Some(g) => g.dofs().into_iter().map(|(i, j)| Some(g.node_xy(i, j))).collect(),
        None => vec![None; n],
    };
    for k in 0..n {
        let (x, y) = xy.get(k).copied().flatten().map_or((String::new(), String::new()), |p| (format!("{:.6}", p[0]), format!("{:.6}", p[1])));
        let v: Vec<String> = set.items.iter().map(|s| format!("{:.10e}", s.u[k])).collect();
        writeln!(f, "{k},{x},{y},{}", v.join(","))?;
    }
    Ok(())
}

/// Nodal values as coloured cells, blue negative, red positive.
pub fn heatmap_svg(grid: &GridDomain, u: &State, title: &str) -> String {
    let cell = (480.0 / grid.nx.max(grid.ny) as f64).max(1.0);
    let (w, h) = (cell * grid.nx as f64, cell * grid.ny as f64);
    let scale = u.amax().max(f64::MIN_POSITIVE);
    let mut s = String::new();
    let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{}" height="{}">"#, w + 20.0, h + 40.0);
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="10" y="18" font-size="13">{}</text>"#, title.replace('&', "&amp;").replace('<', "&lt;"));
    for (k, (i, j)) in grid.dofs().into_iter().enumerate() {
        let v = (u[k] / scale).clamp(-1.0, 1.0);
        let (r, g, b) = if v >= 0.0 {
            (255.0, 255.0 * (1.0 - v), 255.0 * (1.0 - v))
        } else {
            (255.0 * (1.0 + v), 255.0 * (1.0 + v), 255.0)
        };
        let x = 10.0 + i as f64 * cell;
        let y = 30.0 + (grid.ny - 1 - j) as f64 * cell;
        let _ = writeln!(s, r#"<rect x="{x:.2}" y="{y:.2}" width="{cell:.2}" height="{cell:.2}" fill="rgb({r:.0},{g:.0},{b:.0})"/>"#);
    }
    s.push_str("</svg>\n");
    s
}
