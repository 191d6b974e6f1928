//! SVG figures and zero tables for plane maps.

use std::io::Write;
use std::path::Path;

use super::{CriticalCurve, Flower, PlanarMap, PlaneBox, Pt, TileReport};
use crate::error::Result;
use crate::svg::SvgPlot;

/// Domain picture: critical curves solid, flower dashed, zeros labelled.
pub fn domain_svg(title: &str, curves: &[CriticalCurve], flower: &Flower, zeros: &[Pt], bx: &PlaneBox) -> String {
    let mut plot = SvgPlot::new(title).labels("x", "y").with_bounds(bx.x0, bx.x1, bx.y0, bx.y1);
    for c in &flower.components {
        plot.polyline(c.iter().map(|p| (p[0], p[1])).collect(), "#1f5fbf", true);
    }
    for c in curves {
        plot.polyline(c.vertices.iter().map(|v| (v.x, v.y)).collect(), "black", false);
        for &k in &c.cusps {
            plot.marker(c.vertices[k].x, c.vertices[k].y, "#c0392b", None);
        }
    }
    for (k, z) in zeros.iter().enumerate() {
        plot.marker(z[0], z[1], "#27ae60", Some(format!("P{k}")));
    }
    plot.render()
}

/// Codomain picture: F(C) solid, probes labelled with their counts.
pub fn image_svg(title: &str, image: &[Vec<Pt>], report: &TileReport) -> String {
    let mut plot = SvgPlot::new(title).labels("F1", "F2");
    for l in image {
        plot.polyline(l.iter().map(|p| (p[0], p[1])).collect(), "black", false);
    }
    let mut last: Option<usize> = None;
    for p in &report.probe_points {
        // Label only where the count changes to keep the picture readable.
        if last != Some(p.count) {
            plot.marker(p.y[0], p.y[1], "#27ae60", Some(p.count.to_string()));
        }
        last = Some(p.count);
    }
    plot.render()
}

/// Columns: index, x, y, det.
pub fn write_zeros_csv(map: &PlanarMap, zeros: &[Pt], path: &Path) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(f, "index,x,y,det")?;
    for (k, z) in zeros.iter().enumerate() {
        writeln!(f, "{k},{:.12},{:.12},{:.6e}", z[0], z[1], map.det(*z))?;
    }
    Ok(())
}
