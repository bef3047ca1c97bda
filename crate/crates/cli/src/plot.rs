//! Plot-data emission: a long-format CSV (x, series, value, ci_lo, ci_hi)
//! plus a static SVG line chart beside it. Output is deterministic: same
//! rows, same bytes.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use ptlsi_core::{CoreError, Result};

pub struct PlotRow {
    pub x: f64,
    pub series: String,
    pub value: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
}

const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"];

/// Write `<path>` as CSV and a chart at `<path with .svg>`.
pub fn emit(
    rows: &[PlotRow],
    path: &Path,
    title: &str,
    x_label: &str,
    y_label: &str,
) -> Result<()> {
    write_csv(rows, path)?;
    write_svg(rows, &path.with_extension("svg"), title, x_label, y_label)
}

fn write_csv(rows: &[PlotRow], path: &Path) -> Result<()> {
    let mut text = String::from("x,series,value,ci_lo,ci_hi\n");
    for r in rows {
        let _ = writeln!(text, "{},{},{},{},{}", r.x, r.series, r.value, r.ci_lo, r.ci_hi);
    }
    fs::write(path, text)?;
    Ok(())
}

fn coord(v: f64) -> String {
    format!("{v:.2}")
}

fn tick_label(v: f64) -> String {
    if (v - v.round()).abs() < 1e-9 {
        format!("{}", v.round() as i64)
    } else {
        format!("{v:.3}")
    }
}

fn write_svg(
    rows: &[PlotRow],
    path: &Path,
    title: &str,
    x_label: &str,
    y_label: &str,
) -> Result<()> {
    const W: f64 = 640.0;
    const H: f64 = 420.0;
    const L: f64 = 62.0;
    const R: f64 = 616.0;
    const T: f64 = 46.0;
    const B: f64 = 366.0;

    let mut xs: Vec<f64> = rows.iter().map(|r| r.x).collect();
    xs.sort_by(|a, b| a.partial_cmp(b).expect("finite x"));
    xs.dedup();
    let (x_min, x_max) = match (xs.first(), xs.last()) {
        (Some(&a), Some(&b)) if b > a => (a, b),
        (Some(&a), _) => (a - 0.5, a + 0.5),
        _ => (0.0, 1.0),
    };
    let y_max = rows
        .iter()
        .map(|r| r.ci_hi.max(r.value))
        .fold(0.0_f64, f64::max)
        .max(1e-9)
        * 1.08;
    let sx = |x: f64| L + (x - x_min) / (x_max - x_min) * (R - L);
    let sy = |y: f64| B - (y / y_max) * (B - T);

    let mut series: Vec<&str> = rows.iter().map(|r| r.series.as_str()).collect();
    series.sort_unstable();
    series.dedup();

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{W}\" height=\"{H}\" \
         viewBox=\"0 0 {W} {H}\" font-family=\"sans-serif\">"
    );
    let _ = writeln!(svg, "<rect width=\"{W}\" height=\"{H}\" fill=\"white\"/>");
    let _ = writeln!(
        svg,
        "<text x=\"{}\" y=\"22\" text-anchor=\"middle\" font-size=\"15\">{title}</text>",
        coord((L + R) / 2.0)
    );
    // axes
    let _ = writeln!(
        svg,
        "<line x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"black\"/>",
        coord(L),
        coord(B),
        coord(R),
        coord(B)
    );
    let _ = writeln!(
        svg,
        "<line x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"black\"/>",
        coord(L),
        coord(T),
        coord(L),
        coord(B)
    );
    // y ticks and grid
    for i in 0..=4 {
        let y = y_max * i as f64 / 4.0;
        let py = sy(y);
        let _ = writeln!(
            svg,
            "<line x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"#cccccc\" stroke-dasharray=\"3,3\"/>",
            coord(L),
            coord(py),
            coord(R),
            coord(py)
        );
        let _ = writeln!(
            svg,
            "<text x=\"{}\" y=\"{}\" text-anchor=\"end\" font-size=\"11\">{}</text>",
            coord(L - 6.0),
            coord(py + 4.0),
            tick_label(y)
        );
    }
    // x ticks: at most 8, evenly thinned
    let step = xs.len().div_ceil(8).max(1);
    for x in xs.iter().step_by(step) {
        let px = sx(*x);
        let _ = writeln!(
            svg,
            "<line x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"black\"/>",
            coord(px),
            coord(B),
            coord(px),
            coord(B + 5.0)
        );
        let _ = writeln!(
            svg,
            "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\" font-size=\"11\">{}</text>",
            coord(px),
            coord(B + 18.0),
            tick_label(*x)
        );
    }
    // axis labels
    let _ = writeln!(
        svg,
        "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\" font-size=\"13\">{x_label}</text>",
        coord((L + R) / 2.0),
        coord(H - 12.0)
    );
    let _ = writeln!(
        svg,
        "<text x=\"16\" y=\"{}\" text-anchor=\"middle\" font-size=\"13\" \
         transform=\"rotate(-90 16 {})\">{y_label}</text>",
        coord((T + B) / 2.0),
        coord((T + B) / 2.0)
    );
    // series
    for (i, name) in series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let mut pts: Vec<&PlotRow> = rows.iter().filter(|r| r.series == *name).collect();
        pts.sort_by(|a, b| a.x.partial_cmp(&b.x).expect("finite x"));
        // confidence whiskers
        for r in &pts {
            let _ = writeln!(
                svg,
                "<line x1=\"{0}\" y1=\"{1}\" x2=\"{0}\" y2=\"{2}\" stroke=\"{color}\" \
                 stroke-width=\"1\" opacity=\"0.55\"/>",
                coord(sx(r.x)),
                coord(sy(r.ci_lo.max(0.0))),
                coord(sy(r.ci_hi.min(y_max)))
            );
        }
        let path_pts: Vec<String> =
            pts.iter().map(|r| format!("{},{}", coord(sx(r.x)), coord(sy(r.value)))).collect();
        if !path_pts.is_empty() {
            let _ = writeln!(
                svg,
                "<polyline points=\"{}\" fill=\"none\" stroke=\"{color}\" stroke-width=\"2\"/>",
                path_pts.join(" ")
            );
        }
        for r in &pts {
            let _ = writeln!(
                svg,
                "<circle cx=\"{}\" cy=\"{}\" r=\"3\" fill=\"{color}\"/>",
                coord(sx(r.x)),
                coord(sy(r.value))
            );
        }
        // legend entry
        let lx = L + 8.0 + 110.0 * (i as f64 % 5.0);
        let ly = T - 14.0 + 0.0;
        let _ = writeln!(
            svg,
            "<rect x=\"{}\" y=\"{}\" width=\"10\" height=\"10\" fill=\"{color}\"/>",
            coord(lx),
            coord(ly - 9.0)
        );
        let _ = writeln!(
            svg,
            "<text x=\"{}\" y=\"{}\" font-size=\"11\">{name}</text>",
            coord(lx + 14.0),
            coord(ly)
        );
    }
    let _ = writeln!(svg, "</svg>");
    fs::write(path, svg).map_err(CoreError::from)?;
    Ok(())
}
