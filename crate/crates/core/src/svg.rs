//! Minimal SVG emitter for line plots in a fitted data box.

use std::fmt::Write as _;

#[derive(Clone, Debug)]
enum Item {
    Polyline { pts: Vec<(f64, f64)>, stroke: String, dashed: bool, width: f64 },
    Marker { x: f64, y: f64, fill: String, label: Option<String> },
    Label { x: f64, y: f64, text: String },
}

#[derive(Clone, Debug)]
pub struct SvgPlot {
    pub width: f64,
    pub height: f64,
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    items: Vec<Item>,
    bounds: Option<(f64, f64, f64, f64)>,
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

impl SvgPlot {
    pub fn new(title: impl Into<String>) -> Self {
        Self {
            width: 640.0,
            height: 640.0,
            title: title.into(),
            x_label: String::new(),
            y_label: String::new(),
            items: Vec::new(),
            bounds: None,
        }
    }

    pub fn labels(mut self, x: impl Into<String>, y: impl Into<String>) -> Self {
        self.x_label = x.into();
        self.y_label = y.into();
        self
    }

    /// Fixes the data box instead of fitting it to the items.
    pub fn with_bounds(mut self, x0: f64, x1: f64, y0: f64, y1: f64) -> Self {
        self.bounds = Some((x0, x1, y0, y1));
        self
    }

    pub fn polyline(&mut self, pts: Vec<(f64, f64)>, stroke: &str, dashed: bool) {
        if pts.len() >= 2 {
            self.items.push(Item::Polyline { pts, stroke: stroke.into(), dashed, width: 1.2 });
        }
    }

    pub fn marker(&mut self, x: f64, y: f64, fill: &str, label: Option<String>) {
        self.items.push(Item::Marker { x, y, fill: fill.into(), label });
    }

    pub fn label(&mut self, x: f64, y: f64, text: impl Into<String>) {
        self.items.push(Item::Label { x, y, text: text.into() });
    }

    fn fitted(&self) -> (f64, f64, f64, f64) {
        if let Some(b) = self.bounds {
            return b;
        }
        let mut b = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
        let mut take = |x: f64, y: f64| {
            if x.is_finite() && y.is_finite() {
                b.0 = b.0.min(x);
                b.1 = b.1.max(x);
                b.2 = b.2.min(y);
                b.3 = b.3.max(y);
            }
        };
        for it in &self.items {
            match it {
                Item::Polyline { pts, .. } => pts.iter().for_each(|&(x, y)| take(x, y)),
                Item::Marker { x, y, .. } | Item::Label { x, y, .. } => take(*x, *y),
            }
        }
        if !b.0.is_finite() {
            return (-1.0, 1.0, -1.0, 1.0);
        }
        let pad_x = 0.05 * (b.1 - b.0).max(1e-9);
        let pad_y = 0.05 * (b.3 - b.2).max(1e-9);
        (b.0 - pad_x, b.1 + pad_x, b.2 - pad_y, b.3 + pad_y)
    }

    pub fn render(&self) -> String {
        let (x0, x1, y0, y1) = self.fitted();
        let m = 48.0;
        let (w, h) = (self.width - 2.0 * m, self.height - 2.0 * m);
        let px = |x: f64| m + (x - x0) / (x1 - x0) * w;
        let py = |y: f64| m + (y1 - y) / (y1 - y0) * h;
        let mut s = String::new();
        let _ = writeln!(
            s,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{}" height="{}" viewBox="0 0 {} {}">"#,
            self.width, self.height, self.width, self.height
        );
        let _ = writeln!(s, r#"<rect x="0" y="0" width="{}" height="{}" fill="white"/>"#, self.width, self.height);
        let _ = writeln!(s, r##"<rect x="{m}" y="{m}" width="{w}" height="{h}" fill="none" stroke="#999"/>"##);
        let _ = writeln!(s, r#"<text x="{}" y="{}" font-size="14" text-anchor="middle">{}</text>"#, self.width / 2.0, m / 2.0, escape(&self.title));
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" font-size="12" text-anchor="middle">{}</text>"#,
            self.width / 2.0,
            self.height - 12.0,
            escape(&self.x_label)
        );
        let _ = writeln!(
            s,
            r#"<text x="14" y="{}" font-size="12" text-anchor="middle" transform="rotate(-90 14 {})">{}</text>"#,
            self.height / 2.0,
            self.height / 2.0,
            escape(&self.y_label)
        );
        let _ = writeln!(s, r#"<text x="{m}" y="{}" font-size="10">{x0:.3}</text>"#, self.height - m + 14.0);
        let _ = writeln!(s, r#"<text x="{}" y="{}" font-size="10" text-anchor="end">{x1:.3}</text>"#, self.width - m, self.height - m + 14.0);
        let _ = writeln!(s, r#"<text x="{}" y="{}" font-size="10" text-anchor="end">{y0:.3}</text>"#, m - 4.0, self.height - m);
        let _ = writeln!(s, r#"<text x="{}" y="{}" font-size="10" text-anchor="end">{y1:.3}</text>"#, m - 4.0, m + 10.0);
        for it in &self.items {
            match it {
                Item::Polyline { pts, stroke, dashed, width } => {
                    let d: Vec<String> = pts
                        .iter()
                        .filter(|(x, y)| x.is_finite() && y.is_finite())
                        .map(|&(x, y)| format!("{:.2},{:.2}", px(x), py(y)))
                        .collect();
                    let dash = if *dashed { r#" stroke-dasharray="4 3""# } else { "" };
                    let _ = writeln!(s, r#"<polyline fill="none" stroke="{stroke}" stroke-width="{width}"{dash} points="{}"/>"#, d.join(" "));
                }
                Item::Marker { x, y, fill, label } => {
                    let _ = writeln!(s, r#"<circle cx="{:.2}" cy="{:.2}" r="3.5" fill="{fill}"/>"#, px(*x), py(*y));
                    if let Some(l) = label {
                        let _ = writeln!(s, r#"<text x="{:.2}" y="{:.2}" font-size="10">{}</text>"#, px(*x) + 5.0, py(*y) - 5.0, escape(l));
                    }
                }
                Item::Label { x, y, text } => {
                    let _ = writeln!(s, r#"<text x="{:.2}" y="{:.2}" font-size="12" text-anchor="middle">{}</text>"#, px(*x), py(*y), escape(text));
                }
            }
        }
        s.push_str("</svg>\n");
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn renders_items_inside_the_frame() {
        let mut p = SvgPlot::new("a < b").labels("s", "u");
        p.polyline(vec![(0.0, 0.0), (1.0, 1.0)], "black", false);
        p.marker(0.5, 0.5, "red", Some("P".into()));
        let s = p.render();
        assert!(s.starts_with("<svg") && s.trim_end().ends_with("</svg>"));
        assert!(s.contains("a &lt; b"));
        assert!(s.contains("<polyline") && s.contains("<circle"));
    }
}
