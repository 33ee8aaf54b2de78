//! Minimal SVG line plots.

use e2i2::correlation::CorrelationCurve;
use std::fmt::Write as _;

const W: f64 = 640.0;
const H: f64 = 400.0;
const MARGIN: f64 = 50.0;

pub fn curve_svg(curve: &CorrelationCurve, title: &str) -> String {
    let pts = curve.points();
    let (x0, x1) = bounds(pts.iter().map(|p| p.separation));
    let (y0, y1) = bounds(pts.iter().map(|p| p.value).chain([curve.normalization.plateau]));
    let sx = |x: f64| MARGIN + (x - x0) / (x1 - x0) * (W - 2.0 * MARGIN);
    let sy = |y: f64| H - MARGIN - (y - y0) / (y1 - y0) * (H - 2.0 * MARGIN);

    let mut s = String::new();
    let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}">"#);
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<rect x="{MARGIN}" y="{MARGIN}" width="{}" height="{}" fill="none" stroke="black"/>"#,
        W - 2.0 * MARGIN,
        H - 2.0 * MARGIN
    );
    let _ = writeln!(s, r#"<text x="{}" y="30" text-anchor="middle" font-size="14">{}</text>"#, W / 2.0, escape(title));
    let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle" font-size="12">baseline (m)</text>"#, W / 2.0, H - 12.0);
    for (v, anchor, x, y) in [
        (x0, "start", sx(x0), H - MARGIN + 16.0),
        (x1, "end", sx(x1), H - MARGIN + 16.0),
        (y0, "end", MARGIN - 4.0, sy(y0)),
        (y1, "end", MARGIN - 4.0, sy(y1) + 10.0),
    ] {
        let _ = writeln!(s, r#"<text x="{x:.1}" y="{y:.1}" text-anchor="{anchor}" font-size="10">{v:.3}</text>"#);
    }
    let plateau = sy(curve.normalization.plateau);
    let _ = writeln!(
        s,
        r#"<line x1="{MARGIN}" y1="{plateau:.2}" x2="{}" y2="{plateau:.2}" stroke="gray" stroke-dasharray="4 4"/>"#,
        W - MARGIN
    );
    let path: Vec<String> = pts.iter().map(|p| format!("{:.2},{:.2}", sx(p.separation), sy(p.value))).collect();
    let _ = writeln!(s, r#"<polyline fill="none" stroke="steelblue" stroke-width="1.5" points="{}"/>"#, path.join(" "));
    s.push_str("</svg>\n");
    s
}

fn bounds(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    if hi > lo {
        (lo, hi)
    } else {
        (lo - 0.5, lo + 0.5)
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}
