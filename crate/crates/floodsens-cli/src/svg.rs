//! Minimal SVG line plots for convergence traces.

use std::fmt::Write;

/// Render one series as an SVG polyline with axes and a title.
pub fn line_plot(title: &str, xlabel: &str, ylabel: &str, points: &[(f64, f64)]) -> String {
    let (w, h) = (640.0, 320.0);
    let (ml, mr, mt, mb) = (60.0, 15.0, 30.0, 40.0);
    let (pw, ph) = (w - ml - mr, h - mt - mb);
    let mut svg = String::new();
    let _ = write!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#
    );
    let _ = write!(
        svg,
        r#"<rect width="{w}" height="{h}" fill="white"/><text x="{}" y="20" text-anchor="middle" font-family="sans-serif" font-size="14">{title}</text>"#,
        w / 2.0
    );
    if points.len() >= 2 {
        let x0 = points.iter().map(|p| p.0).fold(f64::INFINITY, f64::min);
        let x1 = points.iter().map(|p| p.0).fold(f64::NEG_INFINITY, f64::max);
        let y0 = points.iter().map(|p| p.1).fold(f64::INFINITY, f64::min);
        let y1 = points.iter().map(|p| p.1).fold(f64::NEG_INFINITY, f64::max);
        let xs = if x1 > x0 { pw / (x1 - x0) } else { 1.0 };
        let ys = if y1 > y0 { ph / (y1 - y0) } else { 1.0 };
        let px = |x: f64| ml + (x - x0) * xs;
        let py = |y: f64| mt + ph - (y - y0) * ys;
        let mut path = String::new();
        for (i, (x, y)) in points.iter().enumerate() {
            let _ = write!(path, "{}{:.2},{:.2}", if i == 0 { "M" } else { "L" }, px(*x), py(*y));
        }
        let _ = write!(
            svg,
            r##"<path d="{path}" fill="none" stroke="#1f77b4" stroke-width="1.5"/>"##
        );
        // Axes with end labels.
        let _ = write!(
            svg,
            r#"<line x1="{ml}" y1="{b}" x2="{r}" y2="{b}" stroke="black"/><line x1="{ml}" y1="{mt}" x2="{ml}" y2="{b}" stroke="black"/>"#,
            b = mt + ph,
            r = ml + pw
        );
        for (x, anchor, v) in [(ml, "start", x0), (ml + pw, "end", x1)] {
            let _ = write!(
                svg,
                r#"<text x="{x}" y="{}" text-anchor="{anchor}" font-family="sans-serif" font-size="11">{v:.0}</text>"#,
                mt + ph + 16.0
            );
        }
        for (y, v) in [(mt + ph, y0), (mt, y1)] {
            let _ = write!(
                svg,
                r#"<text x="{}" y="{}" text-anchor="end" font-family="sans-serif" font-size="11">{v:.4}</text>"#,
                ml - 6.0,
                y + 4.0
            );
        }
        let _ = write!(
            svg,
            r#"<text x="{}" y="{}" text-anchor="middle" font-family="sans-serif" font-size="12">{xlabel}</text>"#,
            ml + pw / 2.0,
            h - 8.0
        );
        let _ = write!(
            svg,
            r#"<text x="14" y="{}" text-anchor="middle" font-family="sans-serif" font-size="12" transform="rotate(-90 14 {y})">{ylabel}</text>"#,
            mt + ph / 2.0,
            y = mt + ph / 2.0
        );
    }
    svg.push_str("</svg>\n");
    svg
}
