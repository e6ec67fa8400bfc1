//! Deterministic SVG line and bar charts.
//!
//! Coordinates are printed with two decimals so identical input always
//! yields identical bytes.

use std::fmt::Write as _;
use std::path::Path;

use anyhow::{bail, Result};

const WIDTH: f64 = 900.0;
const HEIGHT: f64 = 420.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 190.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 50.0;
const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f",
];

#[derive(Debug, Clone, PartialEq)]
pub struct Line {
    pub label: String,
    /// `(x, y)` pairs; x is usually a day offset.
    pub points: Vec<(f64, f64)>,
}

fn escape(text: &str) -> String {
    text.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

fn padded(lo: f64, hi: f64) -> (f64, f64) {
    if hi > lo {
        let pad = (hi - lo) * 0.05;
        (lo - pad, hi + pad)
    } else {
        (lo - 1.0, hi + 1.0)
    }
}

fn header(out: &mut String, title: &str) {
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(out, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
    let _ = writeln!(
        out,
        r#"<text x="{:.2}" y="22" text-anchor="middle" font-size="15">{}</text>"#,
        WIDTH / 2.0,
        escape(title)
    );
}

fn axes(out: &mut String, y_lo: f64, y_hi: f64, x_caption: &str) {
    let (x0, x1, y0, y1) = (LEFT, WIDTH - RIGHT, TOP, HEIGHT - BOTTOM);
    let _ = writeln!(
        out,
        r##"<path d="M{x0:.2},{y0:.2} L{x0:.2},{y1:.2} L{x1:.2},{y1:.2}" fill="none" stroke="#333"/>"##
    );
    for k in 0..=4 {
        let v = y_lo + (y_hi - y_lo) * k as f64 / 4.0;
        let y = y1 - (y1 - y0) * k as f64 / 4.0;
        let _ = writeln!(
            out,
            r##"<text x="{:.2}" y="{:.2}" text-anchor="end">{v:.2}</text><line x1="{x0:.2}" y1="{y:.2}" x2="{x1:.2}" y2="{y:.2}" stroke="#ddd"/>"##,
            x0 - 6.0,
            y + 4.0
        );
    }
    let _ = writeln!(
        out,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
        (x0 + x1) / 2.0,
        HEIGHT - 12.0,
        escape(x_caption)
    );
}

fn legend(out: &mut String, labels: &[&str]) {
    let x = WIDTH - RIGHT + 15.0;
    for (i, label) in labels.iter().enumerate() {
        let y = TOP + 10.0 + 20.0 * i as f64;
        let color = PALETTE[i % PALETTE.len()];
        let _ = writeln!(
            out,
            r#"<rect x="{x:.2}" y="{:.2}" width="14" height="4" fill="{color}"/><text x="{:.2}" y="{:.2}">{}</text>"#,
            y - 4.0,
            x + 20.0,
            y + 2.0,
            escape(label)
        );
    }
}

/// Overlaid line chart with a legend.
pub fn line_chart(title: &str, x_caption: &str, lines: &[Line]) -> Result<String> {
    if lines.is_empty() {
        bail!("line chart needs at least one series");
    }
    if let Some(l) = lines.iter().find(|l| l.points.is_empty()) {
        bail!("series {:?} has no points", l.label);
    }
    if lines.iter().flat_map(|l| &l.points).any(|(x, y)| !x.is_finite() || !y.is_finite()) {
        bail!("line chart values must be finite");
    }
    let all = || lines.iter().flat_map(|l| l.points.iter());
    let (x_lo, x_hi) = all().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), p| (a.min(p.0), b.max(p.0)));
    let (y_lo, y_hi) = all().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), p| (a.min(p.1), b.max(p.1)));
    let (y_lo, y_hi) = padded(y_lo, y_hi);
    let x_span = if x_hi > x_lo { x_hi - x_lo } else { 1.0 };
    let sx = |x: f64| LEFT + (x - x_lo) / x_span * (WIDTH - LEFT - RIGHT);
    let sy = |y: f64| HEIGHT - BOTTOM - (y - y_lo) / (y_hi - y_lo) * (HEIGHT - TOP - BOTTOM);

    let mut out = String::new();
    header(&mut out, title);
    axes(&mut out, y_lo, y_hi, x_caption);
    for (i, line) in lines.iter().enumerate() {
        let mut d = String::new();
        for (k, (x, y)) in line.points.iter().enumerate() {
            let _ = write!(d, "{}{:.2},{:.2}", if k == 0 { "M" } else { " L" }, sx(*x), sy(*y));
        }
        if line.points.len() == 1 {
            let (x, y) = line.points[0];
            let _ = write!(d, " L{:.2},{:.2}", sx(x) + 1.0, sy(y));
        }
        let _ = writeln!(
            out,
            r#"<path d="{d}" fill="none" stroke="{}" stroke-width="1.5"/>"#,
            PALETTE[i % PALETTE.len()]
        );
    }
    let labels: Vec<&str> = lines.iter().map(|l| l.label.as_str()).collect();
    legend(&mut out, &labels);
    out.push_str("</svg>\n");
    Ok(out)
}

/// Vertical bar chart; negative values hang below the zero line.
pub fn bar_chart(title: &str, bars: &[(String, f64)]) -> Result<String> {
    if bars.is_empty() {
        bail!("bar chart needs at least one bar");
    }
    if bars.iter().any(|(_, v)| !v.is_finite()) {
        bail!("bar values must be finite");
    }
    let lo = bars.iter().fold(0.0f64, |a, (_, v)| a.min(*v));
    let hi = bars.iter().fold(0.0f64, |a, (_, v)| a.max(*v));
    let (y_lo, y_hi) = padded(lo, hi);
    let sy = |y: f64| HEIGHT - BOTTOM - (y - y_lo) / (y_hi - y_lo) * (HEIGHT - TOP - BOTTOM);
    let slot = (WIDTH - LEFT - RIGHT) / bars.len() as f64;

    let mut out = String::new();
    header(&mut out, title);
    axes(&mut out, y_lo, y_hi, "");
    for (i, (_, v)) in bars.iter().enumerate() {
        let x = LEFT + slot * i as f64 + slot * 0.15;
        let (top, bottom) = (sy(v.max(0.0)), sy(v.min(0.0)));
        let _ = writeln!(
            out,
            r#"<rect x="{x:.2}" y="{top:.2}" width="{:.2}" height="{:.2}" fill="{}"/>"#,
            slot * 0.7,
            (bottom - top).max(0.5),
            PALETTE[i % PALETTE.len()]
        );
        let _ = writeln!(
            out,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{v:.2}</text>"#,
            x + slot * 0.35,
            top - 4.0
        );
    }
    let labels: Vec<&str> = bars.iter().map(|(l, _)| l.as_str()).collect();
    legend(&mut out, &labels);
    out.push_str("</svg>\n");
    Ok(out)
}

pub fn write(path: &Path, svg: &str) -> Result<()> {
    std::fs::write(path, svg)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line(label: &str, ys: &[f64]) -> Line {
        Line {
            label: label.into(),
            points: ys.iter().enumerate().map(|(i, y)| (i as f64, *y)).collect(),
        }
    }

    #[test]
    fn constant_series_is_horizontal() {
        let svg = line_chart("flat", "day", &[line("c", &[2.0, 2.0, 2.0])]).unwrap();
        let path = svg.lines().find(|l| l.starts_with("<path d=\"M") && l.contains("stroke-width")).unwrap();
        let ys: Vec<&str> = path
            .split(['M', 'L'])
            .skip(1)
            .map(|p| p.trim().split(',').nth(1).unwrap().split('"').next().unwrap())
            .collect();
        assert!(ys.windows(2).all(|w| w[0] == w[1]));
    }

    #[test]
    fn legend_lists_every_series() {
        let svg = line_chart("two", "day", &[line("energy", &[1.0, 2.0]), line("trade & tariffs", &[0.0, 3.0])]).unwrap();
        assert!(svg.contains(">energy</text>"));
        assert!(svg.contains(">trade &amp; tariffs</text>"));
    }

    #[test]
    fn output_is_deterministic() {
        let lines = [line("a", &[0.1, 0.7, 0.3]), line("b", &[1.0, -1.0, 0.5])];
        assert_eq!(line_chart("t", "x", &lines).unwrap(), line_chart("t", "x", &lines).unwrap());
        let bars = [("MSE".to_string(), 0.8), ("R2".to_string(), -0.22)];
        assert_eq!(bar_chart("m", &bars).unwrap(), bar_chart("m", &bars).unwrap());
    }

    #[test]
    fn empty_input_is_rejected() {
        assert!(line_chart("t", "x", &[]).is_err());
        assert!(line_chart("t", "x", &[line("a", &[])]).is_err());
        assert!(bar_chart("t", &[]).is_err());
    }
}
