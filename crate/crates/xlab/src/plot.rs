//! Dependency-free SVG line plots of experiment CSVs.
//!
//! The input rows are embedded verbatim in a comment block so a plot can be
//! turned back into its data.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Result, XlabError};
use crate::rows::{self, Row};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct PlotOptions {
    pub logx: bool,
    pub logy: bool,
}

const WIDTH: f64 = 800.0;
const HEIGHT: f64 = 500.0;
const MARGIN: f64 = 60.0;
const DATA_OPEN: &str = "<!-- cwlab-data";
const DATA_CLOSE: &str = "-->";
const PALETTE: [&str; 8] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf", "#8c564b", "#7f7f7f"];

fn group_label(row: &Row) -> String {
    match row.n {
        Some(n) => format!("{} n={n}", row.quantity),
        None => row.quantity.clone(),
    }
}

/// Abscissa: `t` when present, else `n`.
fn abscissa(row: &Row) -> Option<f64> {
    row.t.or(row.n.map(|n| n as f64))
}

pub fn render(data: &[Row], opts: PlotOptions) -> Result<String> {
    if data.is_empty() {
        return Err(XlabError::Plot("no data rows".into()));
    }
    let tx = |x: f64| if opts.logx { x.log10() } else { x };
    let ty = |y: f64| if opts.logy { y.log10() } else { y };
    let mut groups: BTreeMap<String, Vec<(f64, f64)>> = BTreeMap::new();
    for row in data {
        let Some(x) = abscissa(row) else { continue };
        if (opts.logx && x <= 0.0) || (opts.logy && row.value <= 0.0) || !row.value.is_finite() {
            continue;
        }
        groups.entry(group_label(row)).or_default().push((tx(x), ty(row.value)));
    }
    let pts: Vec<(f64, f64)> = groups.values().flatten().copied().collect();
    if pts.is_empty() {
        return Err(XlabError::Plot("no plottable points".into()));
    }
    let (mut x0, mut x1) = pts.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), p| (a.min(p.0), b.max(p.0)));
    let (mut y0, mut y1) = pts.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), p| (a.min(p.1), b.max(p.1)));
    if x1 == x0 {
        x0 -= 0.5;
        x1 += 0.5;
    }
    if y1 == y0 {
        y0 -= 0.5;
        y1 += 0.5;
    }
    let sx = |x: f64| MARGIN + (x - x0) / (x1 - x0) * (WIDTH - 2.0 * MARGIN);
    let sy = |y: f64| HEIGHT - MARGIN - (y - y0) / (y1 - y0) * (HEIGHT - 2.0 * MARGIN);

    let mut svg = String::new();
    let _ = writeln!(svg, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">"#);
    let _ = writeln!(svg, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let (left, right, top, bottom) = (MARGIN, WIDTH - MARGIN, MARGIN, HEIGHT - MARGIN);
    let _ = writeln!(svg, r#"<path d="M{left} {top} L{left} {bottom} L{right} {bottom}" stroke="black" fill="none"/>"#);
    let label = |v: f64, log: bool| if log { format!("1e{v:.2}") } else { format!("{v:.4}") };
    let _ = writeln!(svg, r#"<text x="{left}" y="{}" font-size="12">{}</text>"#, bottom + 18.0, label(x0, opts.logx));
    let _ = writeln!(svg, r#"<text x="{right}" y="{}" font-size="12" text-anchor="end">{}</text>"#, bottom + 18.0, label(x1, opts.logx));
    let _ = writeln!(svg, r#"<text x="{}" y="{bottom}" font-size="12" text-anchor="end">{}</text>"#, left - 4.0, label(y0, opts.logy));
    let _ = writeln!(svg, r#"<text x="{}" y="{}" font-size="12" text-anchor="end">{}</text>"#, left - 4.0, top + 4.0, label(y1, opts.logy));
    for (k, (name, points)) in groups.iter_mut().enumerate() {
        points.sort_by(|a, b| a.0.total_cmp(&b.0));
        let colour = PALETTE[k % PALETTE.len()];
        let path: Vec<String> = points.iter().map(|&(x, y)| format!("{:.2},{:.2}", sx(x), sy(y))).collect();
        let _ = writeln!(svg, r#"<polyline fill="none" stroke="{colour}" stroke-width="1.5" points="{}"/>"#, path.join(" "));
        let _ = writeln!(
            svg,
            r#"<text x="{}" y="{}" font-size="12" fill="{colour}">{}</text>"#,
            right - 150.0,
            top + 14.0 * (k as f64 + 1.0),
            escape(name)
        );
    }
    let _ = writeln!(svg, "{DATA_OPEN}");
    svg.push_str(&rows::to_string(data));
    let _ = writeln!(svg, "{DATA_CLOSE}");
    svg.push_str("</svg>\n");
    Ok(svg)
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Rows stored in the comment block of a plot produced by [`render`].
pub fn embedded_rows(svg: &str) -> Result<Vec<Row>> {
    let start = svg.find(DATA_OPEN).ok_or_else(|| XlabError::Plot("no embedded data block".into()))?;
    let body = &svg[start + DATA_OPEN.len()..];
    let end = body.find(DATA_CLOSE).ok_or_else(|| XlabError::Plot("unterminated data block".into()))?;
    rows::read_rows(body[..end].trim_start_matches('\n').as_bytes(), Path::new("<embedded>"))
}

/// Reads `csv_path` and writes its plot to `svg_path`.
pub fn emit_plot(csv_path: &Path, svg_path: &Path, opts: PlotOptions) -> Result<()> {
    let data = rows::read_file(csv_path)?;
    let svg = render(&data, opts)?;
    std::fs::write(svg_path, svg)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Vec<Row> {
        (1..=5)
            .flat_map(|k| {
                let t = k as f64;
                [
                    Row::new("tv-decay", "tv", (-t).exp()).model(100, 1.2, 0.100001).at(t),
                    Row::new("tv-decay", "tv", (-0.9 * t).exp()).model(200, 1.2, 0.100001).at(t),
                ]
            })
            .collect()
    }

    #[test]
    fn one_polyline_per_group_and_round_trip() {
        let data = sample();
        let svg = render(&data, PlotOptions { logy: true, logx: false }).unwrap();
        assert_eq!(svg.matches("<polyline").count(), 2);
        assert_eq!(embedded_rows(&svg).unwrap(), data);
        assert_eq!(render(&data, PlotOptions::default()).unwrap(), render(&data, PlotOptions::default()).unwrap());
    }

    #[test]
    fn empty_data_is_an_error() {
        assert!(render(&[], PlotOptions::default()).is_err());
        let no_x = vec![Row::new("x", "q", 1.0)];
        assert!(render(&no_x, PlotOptions::default()).is_err());
        assert!(embedded_rows("<svg></svg>").is_err());
    }
}
