//! Self-contained SVG regret curves: one mean line per algorithm with a
//! shaded +-1 standard deviation band, axes and a legend. No external
//! renderer involved; the output is plain well-formed XML.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::harness::trace::Aggregate;

const WIDTH: f64 = 960.0;
const HEIGHT: f64 = 560.0;
const MARGIN_LEFT: f64 = 80.0;
const MARGIN_RIGHT: f64 = 220.0;
const MARGIN_TOP: f64 = 30.0;
const MARGIN_BOTTOM: f64 = 65.0;
const PALETTE: [&str; 6] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b",
];
/// Cap on emitted points per series; longer series are strided.
const MAX_POINTS: usize = 1200;

fn esc(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn tick_label(v: f64) -> String {
    if v == 0.0 {
        "0".to_string()
    } else if v.abs() >= 1000.0 {
        format!("{v:.0}")
    } else if v.abs() >= 10.0 {
        format!("{v:.1}")
    } else {
        format!("{v:.2}")
    }
}

/// Renders aggregates into one SVG file.
pub fn render_regret_svg(aggregates: &[Aggregate], path: &Path) -> Result<()> {
    if aggregates.is_empty() {
        return Err(Error::Invalid("no aggregates to plot".into()));
    }
    let horizon = aggregates.iter().map(|a| a.mean_cum.len()).max().unwrap();
    if horizon == 0 {
        return Err(Error::Invalid("aggregates are empty".into()));
    }
    let mut y_max = 0.0_f64;
    for a in aggregates {
        for (m, s) in a.mean_cum.iter().zip(a.std_cum.iter()) {
            y_max = y_max.max(m + s);
        }
    }
    if y_max <= 0.0 {
        y_max = 1.0;
    }
    y_max *= 1.05;

    let plot_w = WIDTH - MARGIN_LEFT - MARGIN_RIGHT;
    let plot_h = HEIGHT - MARGIN_TOP - MARGIN_BOTTOM;
    let sx = |t: f64| MARGIN_LEFT + (t - 1.0) / ((horizon.max(2) - 1) as f64) * plot_w;
    let sy = |v: f64| MARGIN_TOP + (1.0 - v / y_max) * plot_h;

    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<?xml version="1.0" encoding="UTF-8"?>
<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">"#
    );
    let _ = writeln!(out, "<!-- config_hash={} -->", esc(&aggregates[0].config_hash));
    let _ = writeln!(
        out,
        r##"<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="#ffffff"/>"##
    );

    // bands first so the mean lines draw on top
    for (i, agg) in aggregates.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let n = agg.mean_cum.len();
        let stride = (n / MAX_POINTS).max(1);
        let idx: Vec<usize> = (0..n)
            .step_by(stride)
            .chain(std::iter::once(n - 1))
            .collect();
        let mut pts = String::new();
        for &j in &idx {
            let _ = write!(
                pts,
                "{:.2},{:.2} ",
                sx((j + 1) as f64),
                sy((agg.mean_cum[j] + agg.std_cum[j]).min(y_max))
            );
        }
        for &j in idx.iter().rev() {
            let _ = write!(
                pts,
                "{:.2},{:.2} ",
                sx((j + 1) as f64),
                sy((agg.mean_cum[j] - agg.std_cum[j]).max(0.0))
            );
        }
        let _ = writeln!(
            out,
            r#"<polygon points="{}" fill="{color}" fill-opacity="0.15" stroke="none"/>"#,
            pts.trim_end()
        );
    }
    for (i, agg) in aggregates.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let n = agg.mean_cum.len();
        let stride = (n / MAX_POINTS).max(1);
        let mut pts = String::new();
        for j in (0..n).step_by(stride).chain(std::iter::once(n - 1)) {
            let _ = write!(pts, "{:.2},{:.2} ", sx((j + 1) as f64), sy(agg.mean_cum[j]));
        }
        let _ = writeln!(
            out,
            r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="1.6"/>"#,
            pts.trim_end()
        );
    }

    // axes
    let x0 = MARGIN_LEFT;
    let y0 = MARGIN_TOP + plot_h;
    let _ = writeln!(
        out,
        r##"<line x1="{x0}" y1="{y0}" x2="{}" y2="{y0}" stroke="#000" stroke-width="1"/>"##,
        MARGIN_LEFT + plot_w
    );
    let _ = writeln!(
        out,
        r##"<line x1="{x0}" y1="{MARGIN_TOP}" x2="{x0}" y2="{y0}" stroke="#000" stroke-width="1"/>"##
    );
    for k in 0..=5 {
        let t = 1.0 + (horizon - 1) as f64 * k as f64 / 5.0;
        let x = sx(t);
        let _ = writeln!(
            out,
            r##"<line x1="{x:.2}" y1="{y0}" x2="{x:.2}" y2="{}" stroke="#000" stroke-width="1"/>"##,
            y0 + 5.0
        );
        let _ = writeln!(
            out,
            r#"<text x="{x:.2}" y="{}" font-size="12" text-anchor="middle" font-family="sans-serif">{}</text>"#,
            y0 + 20.0,
            tick_label(t.round())
        );
        let v = y_max * k as f64 / 5.0;
        let y = sy(v);
        let _ = writeln!(
            out,
            r##"<line x1="{}" y1="{y:.2}" x2="{x0}" y2="{y:.2}" stroke="#000" stroke-width="1"/>"##,
            x0 - 5.0
        );
        let _ = writeln!(
            out,
            r#"<text x="{}" y="{:.2}" font-size="12" text-anchor="end" font-family="sans-serif">{}</text>"#,
            x0 - 9.0,
            y + 4.0,
            tick_label(v)
        );
    }
    let _ = writeln!(
        out,
        r#"<text x="{:.2}" y="{:.2}" font-size="14" text-anchor="middle" font-family="sans-serif">round</text>"#,
        MARGIN_LEFT + plot_w / 2.0,
        HEIGHT - 18.0
    );
    let _ = writeln!(
        out,
        r#"<text x="20" y="{:.2}" font-size="14" text-anchor="middle" font-family="sans-serif" transform="rotate(-90 20 {:.2})">cumulative regret</text>"#,
        MARGIN_TOP + plot_h / 2.0,
        MARGIN_TOP + plot_h / 2.0
    );

    // legend
    let lx = MARGIN_LEFT + plot_w + 20.0;
    for (i, agg) in aggregates.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let ly = MARGIN_TOP + 16.0 + 22.0 * i as f64;
        let _ = writeln!(
            out,
            r#"<line x1="{lx}" y1="{ly:.2}" x2="{}" y2="{ly:.2}" stroke="{color}" stroke-width="2"/>"#,
            lx + 24.0
        );
        let _ = writeln!(
            out,
            r#"<text x="{}" y="{:.2}" font-size="13" font-family="sans-serif">{} (n={})</text>"#,
            lx + 30.0,
            ly + 4.0,
            esc(&agg.algorithm),
            agg.runs
        );
    }
    let _ = writeln!(out, "</svg>");
    std::fs::write(path, out).map_err(|e| Error::io(path.display().to_string(), e))
}
