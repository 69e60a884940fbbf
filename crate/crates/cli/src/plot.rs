//! Static SVG of one or more radial star sets.

use std::fmt::Write as _;

use anyhow::{bail, Result};
use eigenset::StarSet2;

const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf"];
const SIZE: f64 = 600.0;
/// Boundary points turning by more than this get a marker.
const CORNER_TURN: f64 = 0.35;

#[derive(Debug, Clone, Default)]
pub struct PlotOptions {
    pub axes: bool,
    pub unit_circle: bool,
}

fn corners(raw: &[[f64; 2]]) -> Vec<[f64; 2]> {
    let mut pts: Vec<[f64; 2]> = Vec::with_capacity(raw.len());
    for p in raw {
        if pts.last().map_or(true, |q| (q[0] - p[0]).hypot(q[1] - p[1]) > 1e-12) {
            pts.push(*p);
        }
    }
    while pts.len() > 1 && (pts[0][0] - pts[pts.len() - 1][0]).hypot(pts[0][1] - pts[pts.len() - 1][1]) <= 1e-12 {
        pts.pop();
    }
    let n = pts.len();
    let mut out: Vec<[f64; 2]> = Vec::new();
    for k in 0..n {
        let (p, q, r) = (pts[(k + n - 1) % n], pts[k], pts[(k + 1) % n]);
        let a = [q[0] - p[0], q[1] - p[1]];
        let b = [r[0] - q[0], r[1] - q[1]];
        let (na, nb) = (a[0].hypot(a[1]), b[0].hypot(b[1]));
        if na < 1e-12 || nb < 1e-12 {
            continue;
        }
        let turn = (a[0] * b[1] - a[1] * b[0]).atan2(a[0] * b[0] + a[1] * b[1]).abs();
        let dup = out.iter().any(|c| (c[0] - q[0]).hypot(c[1] - q[1]) < 1e-9);
        if turn > CORNER_TURN && !dup {
            out.push(q);
        }
    }
    out
}

pub fn render_svg(sets: &[(String, StarSet2)], opts: &PlotOptions) -> Result<String> {
    if sets.is_empty() {
        bail!("nothing to plot");
    }
    let polys: Vec<Vec<[f64; 2]>> = sets.iter().map(|(_, s)| s.boundary()).collect();
    let (mut lo_x, mut hi_x, mut lo_y, mut hi_y) = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
    for p in polys.iter().flatten() {
        lo_x = lo_x.min(p[0]);
        hi_x = hi_x.max(p[0]);
        lo_y = lo_y.min(p[1]);
        hi_y = hi_y.max(p[1]);
    }
    if opts.unit_circle {
        lo_x = lo_x.min(-1.0);
        lo_y = lo_y.min(-1.0);
        hi_x = hi_x.max(1.0);
        hi_y = hi_y.max(1.0);
    }
    let span = (hi_x - lo_x).max(hi_y - lo_y).max(1e-9);
    let margin = 0.05 * span;
    let (x0, y0, w) = (lo_x - margin, lo_y - margin, span + 2.0 * margin);
    let px = |p: [f64; 2]| ((p[0] - x0) / w * SIZE, (y0 + w - p[1]) / w * SIZE);

    let mut svg = String::new();
    writeln!(svg, r#"<svg xmlns="http://www.w3.org/2000/svg" viewBox="0 0 {SIZE} {SIZE}" width="{SIZE}" height="{SIZE}">"#)?;
    writeln!(svg, r#"<rect width="100%" height="100%" fill="white"/>"#)?;
    if opts.axes {
        let (ax, ay) = px([0.0, 0.0]);
        writeln!(svg, r##"<line x1="0" y1="{ay:.2}" x2="{SIZE}" y2="{ay:.2}" stroke="#888" stroke-width="1"/>"##)?;
        writeln!(svg, r##"<line x1="{ax:.2}" y1="0" x2="{ax:.2}" y2="{SIZE}" stroke="#888" stroke-width="1"/>"##)?;
    }
    if opts.unit_circle {
        let (cx, cy) = px([0.0, 0.0]);
        let r = SIZE / w;
        writeln!(svg, r##"<circle cx="{cx:.2}" cy="{cy:.2}" r="{r:.2}" fill="none" stroke="#aaa" stroke-dasharray="4 3"/>"##)?;
    }
    for (i, ((label, _), poly)) in sets.iter().zip(&polys).enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let points: Vec<String> = poly
            .iter()
            .map(|p| {
                let (a, b) = px(*p);
                format!("{a:.2},{b:.2}")
            })
            .collect();
        writeln!(
            svg,
            r#"<polygon points="{}" fill="{color}" fill-opacity="0.3" stroke="{color}" stroke-width="1.5"><title>{}</title></polygon>"#,
            points.join(" "),
            escape(label)
        )?;
        for c in corners(poly) {
            let (a, b) = px(c);
            writeln!(svg, r#"<circle cx="{a:.2}" cy="{b:.2}" r="3" fill="{color}"/>"#)?;
        }
    }
    if sets.len() > 1 {
        for (i, (label, _)) in sets.iter().enumerate() {
            let color = PALETTE[i % PALETTE.len()];
            let y = 20.0 + 18.0 * i as f64;
            writeln!(svg, r#"<rect x="12" y="{:.1}" width="12" height="12" fill="{color}"/>"#, y - 10.0)?;
            writeln!(svg, r#"<text x="30" y="{y:.1}" font-family="sans-serif" font-size="13">{}</text>"#, escape(label))?;
        }
    }
    svg.push_str("</svg>\n");
    Ok(svg)
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn triangle() -> StarSet2 {
        StarSet2::from_polygon(&[[0.0, 0.0], [0.0, 1.0], [1.0, 1.0]], 256).unwrap()
    }

    #[test]
    fn triangle_has_three_markers() {
        let svg = render_svg(&[("D".into(), triangle())], &PlotOptions::default()).unwrap();
        assert_eq!(svg.matches("<polygon").count(), 1);
        assert_eq!(svg.matches(r#"r="3""#).count(), 3);
        assert!(!svg.contains("<text"));
    }

    #[test]
    fn overlay_gets_legend() {
        let d2 = StarSet2::from_polygon(&[[0.0, 0.0], [0.0, 1.0], [0.5, 0.5]], 256).unwrap();
        let svg = render_svg(&[("D".into(), triangle()), ("D<2>".into(), d2)], &PlotOptions { axes: true, unit_circle: true })
            .unwrap();
        assert_eq!(svg.matches("<polygon").count(), 2);
        assert!(svg.contains("D&lt;2&gt;"));
        assert!(svg.contains("stroke-dasharray"));
    }

    #[test]
    fn empty_input_is_rejected() {
        assert!(render_svg(&[], &PlotOptions::default()).is_err());
    }
}
