//! Byte-deterministic SVG output: field heatmaps with the stratification
//! overlaid, log-log error plots and table curves.

use std::fmt::Write as _;
use std::io::Write;

use super::ConvergenceReport;
use crate::cell::EffectiveTables;
use crate::error::Result;
use crate::scenario::CaseTag;
use crate::sl::{DomainKind, ValueField};

const MAX_CELLS: usize = 128;
const STOPS: [[f64; 3]; 5] = [
    [68.0, 1.0, 84.0],
    [59.0, 82.0, 139.0],
    [33.0, 145.0, 140.0],
    [94.0, 201.0, 98.0],
    [253.0, 231.0, 37.0],
];
const SERIES: [&str; 4] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd"];

fn color(t: f64) -> String {
    let t = t.clamp(0.0, 1.0) * (STOPS.len() - 1) as f64;
    let k = (t.floor() as usize).min(STOPS.len() - 2);
    let f = t - k as f64;
    let c: Vec<u8> = (0..3).map(|i| (STOPS[k][i] + f * (STOPS[k + 1][i] - STOPS[k][i])).round() as u8).collect();
    format!("#{:02x}{:02x}{:02x}", c[0], c[1], c[2])
}

/// Heatmap of a field, block-averaged to at most 128 cells per side.
pub fn render_field_svg<W: Write>(field: &ValueField, overlay: Option<CaseTag>, mut w: W) -> Result<()> {
    let g = &field.grid;
    let bx = g.nx.div_ceil(MAX_CELLS);
    let by = g.ny.div_ceil(MAX_CELLS);
    let (cx, cy) = (g.nx.div_ceil(bx), g.ny.div_ceil(by));
    let mut cells = vec![f64::NAN; cx * cy];
    for (b, cell) in cells.iter_mut().enumerate() {
        let (bi, bj) = (b % cx, b / cx);
        let (mut sum, mut cnt) = (0.0, 0usize);
        for j in bj * by..((bj + 1) * by).min(g.ny) {
            for i in bi * bx..((bi + 1) * bx).min(g.nx) {
                let n = g.index(i, j);
                if g.active(n) {
                    sum += field.values[n];
                    cnt += 1;
                }
            }
        }
        if cnt > 0 {
            *cell = sum / cnt as f64;
        }
    }
    let finite = cells.iter().filter(|v| v.is_finite());
    let lo = finite.clone().cloned().fold(f64::INFINITY, f64::min);
    let hi = finite.cloned().fold(f64::NEG_INFINITY, f64::max);
    let span = hi - lo;
    let size = 512.0;
    let px = size / cx.max(cy) as f64;
    let (width, height) = (cx as f64 * px, cy as f64 * px);
    let mut s = String::new();
    writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{:.0}" height="{:.0}" viewBox="0 0 {:.0} {:.0}">"#,
        width + 110.0,
        height + 20.0,
        width + 110.0,
        height + 20.0
    )?;
    writeln!(s, r#"<g transform="translate(10,10)" shape-rendering="crispEdges">"#)?;
    for (b, v) in cells.iter().enumerate() {
        if !v.is_finite() {
            continue;
        }
        let (bi, bj) = (b % cx, b / cx);
        let t = if span > 0.0 { (v - lo) / span } else { 0.5 };
        // Row 0 is the bottom of the domain.
        writeln!(
            s,
            r#"<rect x="{:.3}" y="{:.3}" width="{:.3}" height="{:.3}" fill="{}"/>"#,
            bi as f64 * px,
            (cy - 1 - bj) as f64 * px,
            px,
            px,
            color(t)
        )?;
    }
    writeln!(s, "</g>")?;
    if let (Some(case), DomainKind::Box { half }) = (overlay, g.kind) {
        let to_px = |x: [f64; 2]| (10.0 + (x[0] + half[0]) / (2.0 * half[0]) * width, 10.0 + (half[1] - x[1]) / (2.0 * half[1]) * height);
        let (x0, y0) = to_px([0.0, 0.0]);
        let (xl, _) = to_px([-half[0], 0.0]);
        let (xr, _) = to_px([half[0], 0.0]);
        let end = if case == CaseTag::Case3 { xr } else { x0 };
        writeln!(s, r#"<line x1="{xl:.3}" y1="{y0:.3}" x2="{end:.3}" y2="{y0:.3}" stroke="white" stroke-width="2"/>"#)?;
        writeln!(s, r#"<circle cx="{x0:.3}" cy="{y0:.3}" r="4" fill="white" stroke="black"/>"#)?;
    }
    // Legend.
    let lx = width + 30.0;
    writeln!(s, r#"<defs><linearGradient id="legend" x1="0" y1="1" x2="0" y2="0">"#)?;
    for k in 0..STOPS.len() {
        let t = k as f64 / (STOPS.len() - 1) as f64;
        writeln!(s, r#"<stop offset="{:.2}" stop-color="{}"/>"#, t, color(t))?;
    }
    writeln!(s, "</linearGradient></defs>")?;
    let fill = if span > 0.0 { "url(#legend)".to_string() } else { color(0.5) };
    writeln!(s, r#"<rect x="{lx:.1}" y="10" width="16" height="{height:.1}" fill="{fill}" stroke="black"/>"#)?;
    writeln!(s, r#"<text x="{:.1}" y="18" font-size="11" font-family="monospace">{}</text>"#, lx + 20.0, fmt_num(hi))?;
    writeln!(s, r#"<text x="{:.1}" y="{:.1}" font-size="11" font-family="monospace">{}</text>"#, lx + 20.0, height + 10.0, fmt_num(lo))?;
    writeln!(s, "</svg>")?;
    w.write_all(s.as_bytes())?;
    Ok(())
}

fn fmt_num(v: f64) -> String {
    if v == 0.0 || (1e-3..1e4).contains(&v.abs()) {
        format!("{v:.4}")
    } else {
        format!("{v:.3e}")
    }
}

struct Plot {
    s: String,
    x: (f64, f64),
    y: (f64, f64),
}

const PW: f64 = 480.0;
const PH: f64 = 320.0;
const PAD: f64 = 60.0;

impl Plot {
    fn new(x: (f64, f64), y: (f64, f64), xlabel: &str, ylabel: &str) -> Result<Plot> {
        let widen = |(a, b): (f64, f64)| if b - a > 1e-12 { (a, b) } else { (a - 0.5, b + 0.5) };
        let mut p = Plot { s: String::new(), x: widen(x), y: widen(y) };
        writeln!(
            p.s,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{:.0}" height="{:.0}" viewBox="0 0 {:.0} {:.0}">"#,
            PW + 2.0 * PAD,
            PH + 2.0 * PAD,
            PW + 2.0 * PAD,
            PH + 2.0 * PAD
        )?;
        writeln!(p.s, r#"<rect x="{PAD}" y="{PAD}" width="{PW}" height="{PH}" fill="none" stroke="black"/>"#)?;
        writeln!(
            p.s,
            r#"<text x="{:.1}" y="{:.1}" font-size="12" font-family="monospace" text-anchor="middle">{xlabel}</text>"#,
            PAD + PW / 2.0,
            PAD + PH + 40.0
        )?;
        writeln!(
            p.s,
            r#"<text x="14" y="{:.1}" font-size="12" font-family="monospace" transform="rotate(-90 14 {:.1})" text-anchor="middle">{ylabel}</text>"#,
            PAD + PH / 2.0,
            PAD + PH / 2.0
        )?;
        for (k, v) in [(0, p.x.0), (1, p.x.1)] {
            let px = if k == 0 { PAD } else { PAD + PW };
            writeln!(
                p.s,
                r#"<text x="{px:.1}" y="{:.1}" font-size="10" font-family="monospace" text-anchor="middle">{}</text>"#,
                PAD + PH + 16.0,
                fmt_num(v)
            )?;
        }
        for (k, v) in [(0, p.y.0), (1, p.y.1)] {
            let py = if k == 0 { PAD + PH } else { PAD };
            writeln!(
                p.s,
                r#"<text x="{:.1}" y="{:.1}" font-size="10" font-family="monospace" text-anchor="end">{}</text>"#,
                PAD - 4.0,
                py + 4.0,
                fmt_num(v)
            )?;
        }
        Ok(p)
    }

    fn map(&self, x: f64, y: f64) -> (f64, f64) {
        (
            PAD + (x - self.x.0) / (self.x.1 - self.x.0) * PW,
            PAD + PH - (y - self.y.0) / (self.y.1 - self.y.0) * PH,
        )
    }

    fn series(&mut self, pts: &[(f64, f64)], color: &str, label: &str, slot: usize) -> Result<()> {
        let mut d = String::new();
        for &(x, y) in pts {
            let (a, b) = self.map(x, y);
            write!(d, "{a:.3},{b:.3} ")?;
        }
        writeln!(self.s, r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="1.5"/>"#, d.trim_end())?;
        for &(x, y) in pts {
            let (a, b) = self.map(x, y);
            writeln!(self.s, r#"<circle cx="{a:.3}" cy="{b:.3}" r="2.5" fill="{color}"/>"#)?;
        }
        let ly = PAD + 14.0 + 14.0 * slot as f64;
        writeln!(
            self.s,
            r#"<text x="{:.1}" y="{ly:.1}" font-size="11" font-family="monospace" fill="{color}">{label}</text>"#,
            PAD + 8.0
        )?;
        Ok(())
    }

    fn finish<W: Write>(mut self, mut w: W) -> Result<()> {
        writeln!(self.s, "</svg>")?;
        w.write_all(self.s.as_bytes())?;
        Ok(())
    }
}

fn range(vals: impl Iterator<Item = f64>) -> (f64, f64) {
    vals.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)))
}

/// Log-log plot of the report errors against ε. Zero errors sit at 1e-16.
pub fn render_report_svg<W: Write>(report: &ConvergenceReport, w: W) -> Result<()> {
    let lg = |v: f64| v.max(1e-16).log10();
    let cols: [(&str, fn(&super::ConvergenceRow) -> f64); 4] = [
        ("sup_err_K", |r| r.sup_err_k),
        ("err_origin", |r| r.err_origin),
        ("err_M1", |r| r.err_m1),
        ("err_generic", |r| r.err_generic),
    ];
    let xr = range(report.rows.iter().map(|r| lg(r.epsilon)));
    let yr = range(report.rows.iter().flat_map(|r| cols.iter().map(move |(_, f)| lg(f(r)))));
    let (xr, yr) = if report.rows.is_empty() { ((0.0, 1.0), (0.0, 1.0)) } else { (xr, yr) };
    let mut p = Plot::new(xr, yr, "log10 epsilon", "log10 error")?;
    for (k, (name, f)) in cols.iter().enumerate() {
        let pts: Vec<(f64, f64)> = report.rows.iter().map(|r| (lg(r.epsilon), lg(f(r)))).collect();
        p.series(&pts, SERIES[k], name, k)?;
    }
    p.finish(w)
}

/// Tangential Hamiltonians and `min_q H̄` against p₁ at the first x-sample.
pub fn render_tables_svg<W: Write>(tables: &EffectiveTables, w: W) -> Result<()> {
    let k = tables.x_index(0.0);
    let p = &tables.p1_grid;
    let ys = tables.branches.iter().flat_map(|b| b.values[k].iter().cloned()).chain(tables.min_q[k].iter().cloned());
    let mut plot = Plot::new(range(p.iter().cloned()), range(ys), "p1", "H")?;
    let pts: Vec<(f64, f64)> = p.iter().cloned().zip(tables.min_q[k].iter().cloned()).collect();
    plot.series(&pts, SERIES[0], "min_q H", 0)?;
    for (i, b) in tables.branches.iter().enumerate() {
        let pts: Vec<(f64, f64)> = p.iter().cloned().zip(b.values[k].iter().cloned()).collect();
        plot.series(&pts, SERIES[(i + 1) % SERIES.len()], &format!("H1T {:?}", b.branch), i + 1)?;
    }
    plot.finish(w)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sl::GridSpec;

    #[test]
    fn constant_field_is_single_colour() {
        let f = ValueField::constant(GridSpec::square(1.0, 0.25).unwrap(), 2.0);
        let mut out = Vec::new();
        render_field_svg(&f, None, &mut out).unwrap();
        let s = String::from_utf8(out).unwrap();
        let fills: std::collections::BTreeSet<&str> =
            s.lines().filter(|l| l.starts_with("<rect x=") && l.contains("width=\"")).filter_map(|l| l.split("fill=\"").nth(1)).collect();
        let mid = color(0.5);
        assert!(fills.iter().all(|f| f.starts_with(&mid)), "{fills:?}");
        assert!(s.contains("2.0000"));
    }

    #[test]
    fn colour_map_endpoints() {
        assert_eq!(color(0.0), "#440154");
        assert_eq!(color(1.0), "#fde725");
    }
}
