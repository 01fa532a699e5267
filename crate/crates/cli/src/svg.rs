//! Minimal SVG 1.1 line and bar charts. The CSV files next to each plot
//! carry the data; these are only a view of it.

use std::fmt::Write;

const W: f64 = 640.0;
const H: f64 = 400.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 160.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 50.0;
const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"];

pub struct Series {
    pub name: String,
    pub points: Vec<(f64, f64)>,
    pub dashed: bool,
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn header(out: &mut String, title: &str) {
    let _ = writeln!(out, r#"<?xml version="1.0" encoding="UTF-8"?>"#);
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{W}" height="{H}" viewBox="0 0 {W} {H}">"#
    );
    let _ = writeln!(out, r#"<rect x="0" y="0" width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(
        out,
        r#"<text x="{:.1}" y="24" font-family="sans-serif" font-size="15" text-anchor="middle">{}</text>"#,
        W / 2.0,
        escape(title)
    );
}

struct Frame {
    x0: f64,
    x1: f64,
    y0: f64,
    y1: f64,
}

impl Frame {
    fn px(&self, x: f64) -> f64 {
        LEFT + (x - self.x0) / (self.x1 - self.x0) * (W - LEFT - RIGHT)
    }

    fn py(&self, y: f64) -> f64 {
        H - BOTTOM - (y - self.y0) / (self.y1 - self.y0) * (H - TOP - BOTTOM)
    }
}

fn axes(out: &mut String, f: &Frame, xlabel: &str, ylabel: &str) {
    let (l, r, t, b) = (LEFT, W - RIGHT, TOP, H - BOTTOM);
    let _ = writeln!(
        out,
        r#"<path d="M{l:.1},{t:.1} L{l:.1},{b:.1} L{r:.1},{b:.1}" fill="none" stroke="black" stroke-width="1"/>"#
    );
    for i in 0..=4 {
        let v = f.y0 + (f.y1 - f.y0) * i as f64 / 4.0;
        let y = f.py(v);
        let _ = writeln!(
            out,
            r#"<text x="{:.1}" y="{:.1}" font-family="sans-serif" font-size="10" text-anchor="end">{}</text>"#,
            l - 6.0,
            y + 3.0,
            tick(v)
        );
        let _ = writeln!(out, r##"<path d="M{:.1},{y:.1} L{l:.1},{y:.1}" stroke="black"/>"##, l - 3.0);
    }
    let _ = writeln!(
        out,
        r#"<text x="{:.1}" y="{:.1}" font-family="sans-serif" font-size="12" text-anchor="middle">{}</text>"#,
        (l + r) / 2.0,
        H - 12.0,
        escape(xlabel)
    );
    let _ = writeln!(
        out,
        r#"<text x="16" y="{:.1}" font-family="sans-serif" font-size="12" text-anchor="middle" transform="rotate(-90 16 {:.1})">{}</text>"#,
        (t + b) / 2.0,
        (t + b) / 2.0,
        escape(ylabel)
    );
}

fn tick(v: f64) -> String {
    if v == 0.0 {
        "0".into()
    } else if v.abs() >= 1e-2 && v.abs() < 1e4 {
        format!("{v:.3}")
    } else {
        format!("{v:.2e}")
    }
}

fn legend(out: &mut String, entries: &[(String, &str, bool)]) {
    let x = W - RIGHT + 12.0;
    for (i, (name, color, dashed)) in entries.iter().enumerate() {
        let y = TOP + 10.0 + 18.0 * i as f64;
        let dash = if *dashed { r#" stroke-dasharray="5,3""# } else { "" };
        let _ = writeln!(
            out,
            r#"<path d="M{x:.1},{y:.1} L{:.1},{y:.1}" stroke="{color}" stroke-width="2"{dash}/>"#,
            x + 20.0
        );
        let _ = writeln!(
            out,
            r#"<text x="{:.1}" y="{:.1}" font-family="sans-serif" font-size="11">{}</text>"#,
            x + 26.0,
            y + 4.0,
            escape(name)
        );
    }
}

fn padded(lo: f64, hi: f64) -> (f64, f64) {
    if !(hi > lo) {
        let c = if lo.is_finite() { lo } else { 0.0 };
        return (c - 1.0, c + 1.0);
    }
    let pad = 0.05 * (hi - lo);
    (lo - pad, hi + pad)
}

/// Polylines with optional labelled horizontal reference lines.
pub fn line_chart(title: &str, xlabel: &str, ylabel: &str, series: &[Series], hlines: &[(String, f64)]) -> String {
    let xs = series.iter().flat_map(|s| s.points.iter().map(|p| p.0));
    let ys = series
        .iter()
        .flat_map(|s| s.points.iter().map(|p| p.1))
        .chain(hlines.iter().map(|h| h.1));
    let (x0, x1) = xs.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    let (y0, y1) = ys.fold((0.0f64, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    let (x0, x1) = if x1 > x0 { (x0, x1) } else { padded(x0, x1) };
    let (y0, y1) = padded(y0, y1);
    let f = Frame { x0, x1, y0, y1 };
    let mut out = String::new();
    header(&mut out, title);
    axes(&mut out, &f, xlabel, ylabel);
    let mut entries = Vec::new();
    for (i, s) in series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let pts: Vec<String> = s.points.iter().map(|&(x, y)| format!("{:.2},{:.2}", f.px(x), f.py(y))).collect();
        let dash = if s.dashed { r#" stroke-dasharray="5,3""# } else { "" };
        let _ = writeln!(
            out,
            r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="2"{dash}/>"#,
            pts.join(" ")
        );
        entries.push((s.name.clone(), color, s.dashed));
    }
    for (label, y) in hlines {
        let py = f.py(*y);
        let _ = writeln!(
            out,
            r#"<path d="M{LEFT:.1},{py:.2} L{:.1},{py:.2}" stroke="gray" stroke-width="1" stroke-dasharray="2,2"/>"#,
            W - RIGHT
        );
        let _ = writeln!(
            out,
            r#"<text x="{:.1}" y="{:.2}" font-family="sans-serif" font-size="10" fill="gray">{}</text>"#,
            LEFT + 4.0,
            py - 4.0,
            escape(label)
        );
    }
    legend(&mut out, &entries);
    out.push_str("</svg>\n");
    out
}

/// Grouped bars: one group per label, one bar per series name.
pub fn bar_chart(title: &str, ylabel: &str, groups: &[(String, Vec<(String, f64)>)]) -> String {
    let names: Vec<String> = {
        let mut v: Vec<String> = Vec::new();
        for (_, bars) in groups {
            for (n, _) in bars {
                if !v.contains(n) {
                    v.push(n.clone());
                }
            }
        }
        v
    };
    let ymax = groups
        .iter()
        .flat_map(|g| g.1.iter().map(|b| b.1))
        .filter(|v| v.is_finite())
        .fold(0.0f64, f64::max);
    let f = Frame {
        x0: 0.0,
        x1: groups.len().max(1) as f64,
        y0: 0.0,
        y1: if ymax > 0.0 { ymax * 1.1 } else { 1.0 },
    };
    let mut out = String::new();
    header(&mut out, title);
    axes(&mut out, &f, "", ylabel);
    let slot = (W - LEFT - RIGHT) / groups.len().max(1) as f64;
    let bw = slot * 0.8 / names.len().max(1) as f64;
    for (gi, (label, bars)) in groups.iter().enumerate() {
        let gx = LEFT + slot * gi as f64 + slot * 0.1;
        for (n, v) in bars {
            let k = names.iter().position(|m| m == n).unwrap_or(0);
            let top = f.py(v.max(0.0).min(f.y1));
            let _ = writeln!(
                out,
                r#"<rect x="{:.2}" y="{top:.2}" width="{bw:.2}" height="{:.2}" fill="{}"/>"#,
                gx + bw * k as f64,
                (H - BOTTOM - top).max(0.0),
                PALETTE[k % PALETTE.len()]
            );
        }
        let _ = writeln!(
            out,
            r#"<text x="{:.2}" y="{:.1}" font-family="sans-serif" font-size="11" text-anchor="middle">{}</text>"#,
            LEFT + slot * (gi as f64 + 0.5),
            H - BOTTOM + 16.0,
            escape(label)
        );
    }
    let entries: Vec<(String, &str, bool)> =
        names.iter().enumerate().map(|(i, n)| (n.clone(), PALETTE[i % PALETTE.len()], false)).collect();
    legend(&mut out, &entries);
    out.push_str("</svg>\n");
    out
}
