//! Dependency-free line plots with byte-stable output.

use std::fmt::Write;

use crate::error::{Error, Result};

pub const WIDTH: f64 = 960.0;
pub const HEIGHT: f64 = 540.0;
const MARGIN_LEFT: f64 = 80.0;
const MARGIN_RIGHT: f64 = 200.0;
const MARGIN_TOP: f64 = 40.0;
const MARGIN_BOTTOM: f64 = 60.0;

pub const PALETTE: [&str; 8] = [
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f",
];

#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub label: String,
    pub xs: Vec<f64>,
    pub ys: Vec<f64>,
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

fn extent(values: impl Iterator<Item = f64>) -> Option<(f64, f64)> {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for v in values {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    if lo > hi {
        return None;
    }
    if lo == hi {
        let pad = if lo == 0.0 { 1.0 } else { lo.abs() * 0.05 };
        return Some((lo - pad, hi + pad));
    }
    Some((lo, hi))
}

/// Renders `series` into a 960x540 SVG. With `log_y`, values are plotted as
/// `log10(y)` and non-positive samples are dropped.
pub fn render(series: &[Series], title: &str, y_label: &str, log_y: bool) -> Result<String> {
    if series.is_empty() {
        return Err(Error::validation("columns", "nothing to plot"));
    }
    let transform = |y: f64| if log_y { y.log10() } else { y };
    let points: Vec<Vec<(f64, f64)>> = series
        .iter()
        .map(|s| {
            s.xs.iter()
                .zip(&s.ys)
                .filter(|(x, y)| x.is_finite() && y.is_finite() && (!log_y || **y > 0.0))
                .map(|(&x, &y)| (x, transform(y)))
                .collect()
        })
        .collect();
    let (x0, x1) = extent(points.iter().flatten().map(|p| p.0)).unwrap_or((0.0, 1.0));
    let (y0, y1) = extent(points.iter().flatten().map(|p| p.1)).unwrap_or((0.0, 1.0));

    let plot_w = WIDTH - MARGIN_LEFT - MARGIN_RIGHT;
    let plot_h = HEIGHT - MARGIN_TOP - MARGIN_BOTTOM;
    let sx = |x: f64| MARGIN_LEFT + (x - x0) / (x1 - x0) * plot_w;
    let sy = |y: f64| MARGIN_TOP + (1.0 - (y - y0) / (y1 - y0)) * plot_h;

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" viewBox="0 0 {WIDTH} {HEIGHT}" width="{WIDTH}" height="{HEIGHT}">"#
    );
    let _ = writeln!(svg, r#"<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
    let _ = writeln!(
        svg,
        r#"<rect x="{MARGIN_LEFT}" y="{MARGIN_TOP}" width="{plot_w}" height="{plot_h}" fill="none" stroke="black"/>"#
    );
    let _ = writeln!(
        svg,
        r#"<text x="{:.2}" y="24" text-anchor="middle" font-family="sans-serif" font-size="16">{}</text>"#,
        MARGIN_LEFT + plot_w / 2.0,
        escape(title)
    );

    for k in 0..=4 {
        let f = k as f64 / 4.0;
        let xv = x0 + f * (x1 - x0);
        let yv = y0 + f * (y1 - y0);
        let ylab = if log_y { format!("1e{yv:.1}") } else { format!("{yv:.3e}") };
        let _ = writeln!(
            svg,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="middle" font-family="sans-serif" font-size="12">{:.3}</text>"#,
            sx(xv),
            HEIGHT - MARGIN_BOTTOM + 20.0,
            xv
        );
        let _ = writeln!(
            svg,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="end" font-family="sans-serif" font-size="12">{}</text>"#,
            MARGIN_LEFT - 6.0,
            sy(yv) + 4.0,
            ylab
        );
    }
    let _ = writeln!(
        svg,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle" font-family="sans-serif" font-size="14">t</text>"#,
        MARGIN_LEFT + plot_w / 2.0,
        HEIGHT - 15.0
    );
    let y_title = if log_y { format!("log10 {y_label}") } else { y_label.to_string() };
    let _ = writeln!(
        svg,
        r#"<text x="20" y="{:.2}" text-anchor="middle" font-family="sans-serif" font-size="14" transform="rotate(-90 20 {:.2})">{}</text>"#,
        MARGIN_TOP + plot_h / 2.0,
        MARGIN_TOP + plot_h / 2.0,
        escape(&y_title)
    );

    for (i, (s, pts)) in series.iter().zip(&points).enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        if pts.len() == 1 {
            let _ = writeln!(
                svg,
                r#"<circle cx="{:.2}" cy="{:.2}" r="4" fill="{color}"/>"#,
                sx(pts[0].0),
                sy(pts[0].1)
            );
        } else if !pts.is_empty() {
            let coords: Vec<String> = pts.iter().map(|&(x, y)| format!("{:.2},{:.2}", sx(x), sy(y))).collect();
            let _ = writeln!(
                svg,
                r#"<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"#,
                coords.join(" ")
            );
        }
        let ly = MARGIN_TOP + 20.0 + 20.0 * i as f64;
        let lx = WIDTH - MARGIN_RIGHT + 15.0;
        let _ = writeln!(
            svg,
            r#"<line x1="{lx}" y1="{ly}" x2="{}" y2="{ly}" stroke="{color}" stroke-width="3"/>"#,
            lx + 20.0
        );
        let _ = writeln!(
            svg,
            r#"<text x="{}" y="{}" font-family="sans-serif" font-size="12">{}</text>"#,
            lx + 26.0,
            ly + 4.0,
            escape(&s.label)
        );
    }
    svg.push_str("</svg>\n");
    Ok(svg)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line(label: &str, n: usize) -> Series {
        Series {
            label: label.into(),
            xs: (0..n).map(|k| k as f64).collect(),
            ys: (0..n).map(|k| (-(k as f64)).exp()).collect(),
        }
    }

    #[test]
    fn deterministic_and_sized() {
        let a = render(&[line("r=1", 50), line("r=8", 50)], "V", "V", true).unwrap();
        let b = render(&[line("r=1", 50), line("r=8", 50)], "V", "V", true).unwrap();
        assert_eq!(a, b);
        assert!(a.contains(r#"viewBox="0 0 960 540""#));
        assert_eq!(a.matches("<polyline").count(), 2);
        assert!(a.contains(">r=8<"));
    }

    #[test]
    fn single_point_is_a_marker() {
        let s = render(&[line("one", 1)], "t", "V", false).unwrap();
        assert_eq!(s.matches("<circle").count(), 1);
        assert_eq!(s.matches("<polyline").count(), 0);
    }

    #[test]
    fn empty_selection_is_an_error() {
        assert!(render(&[], "t", "V", false).is_err());
    }

    #[test]
    fn log_drops_non_positive() {
        let s = Series {
            label: "z".into(),
            xs: vec![0.0, 1.0, 2.0],
            ys: vec![1.0, 0.0, 0.1],
        };
        let out = render(&[s], "t", "V", true).unwrap();
        assert_eq!(out.matches("<polyline").count(), 1);
        assert!(!out.contains("NaN") && !out.contains("inf"));
    }
}
