//! Minimal static SVG plots: a histogram and a scatter with a fitted line.

use std::fmt::Write as _;

use crate::evaluate::Trend;

const W: f64 = 640.0;
const H: f64 = 420.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 20.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 60.0;

struct Frame {
    x0: f64,
    x1: f64,
    y0: f64,
    y1: f64,
}

impl Frame {
    fn new(x0: f64, x1: f64, y0: f64, y1: f64) -> Self {
        let widen = |a: f64, b: f64| if b > a { (a, b) } else { (a - 0.5, a + 0.5) };
        let (x0, x1) = widen(x0, x1);
        let (y0, y1) = widen(y0, y1);
        Frame { x0, x1, y0, y1 }
    }

    fn px(&self, x: f64) -> f64 {
        LEFT + (x - self.x0) / (self.x1 - self.x0) * (W - LEFT - RIGHT)
    }

    fn py(&self, y: f64) -> f64 {
        H - BOTTOM - (y - self.y0) / (self.y1 - self.y0) * (H - TOP - BOTTOM)
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn open(out: &mut String, title: &str) {
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(out, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(
        out,
        r#"<text x="{}" y="24" text-anchor="middle" font-size="15">{}</text>"#,
        W / 2.0,
        escape(title)
    );
}

fn axes(out: &mut String, f: &Frame, xlabel: &str, ylabel: &str) {
    let (bx, by) = (f.px(f.x0), f.py(f.y0));
    let _ = writeln!(
        out,
        r#"<path d="M{bx:.1},{:.1} L{bx:.1},{by:.1} L{:.1},{by:.1}" stroke="black" fill="none"/>"#,
        f.py(f.y1),
        f.px(f.x1)
    );
    for n in 0..=4 {
        let x = f.x0 + (f.x1 - f.x0) * n as f64 / 4.0;
        let y = f.y0 + (f.y1 - f.y0) * n as f64 / 4.0;
        let _ = writeln!(
            out,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#,
            f.px(x),
            by + 18.0,
            tick(x)
        );
        let _ = writeln!(
            out,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{}</text>"#,
            bx - 6.0,
            f.py(y) + 4.0,
            tick(y)
        );
    }
    let _ = writeln!(
        out,
        r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#,
        (LEFT + W - RIGHT) / 2.0,
        H - 18.0,
        escape(xlabel)
    );
    let cy = (TOP + H - BOTTOM) / 2.0;
    let _ = writeln!(
        out,
        r#"<text x="16" y="{cy:.1}" text-anchor="middle" transform="rotate(-90 16 {cy:.1})">{}</text>"#,
        escape(ylabel)
    );
}

fn tick(v: f64) -> String {
    if v == 0.0 {
        "0".into()
    } else if v.abs() >= 1e4 || v.abs() < 1e-3 {
        format!("{v:.2e}")
    } else {
        format!("{:.4}", v).trim_end_matches('0').trim_end_matches('.').to_string()
    }
}

/// Histogram of the finite entries of `values` with `bins` equal-width bins.
pub fn histogram(values: &[f64], bins: usize, title: &str, xlabel: &str) -> String {
    let vals: Vec<f64> = values.iter().copied().filter(|v| v.is_finite()).collect();
    let bins = bins.max(1);
    let lo = vals.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let (lo, hi) = if vals.is_empty() { (0.0, 1.0) } else { (lo, hi) };
    let width = if hi > lo { (hi - lo) / bins as f64 } else { 1.0 };
    let mut counts = vec![0usize; bins];
    for v in &vals {
        let b = (((v - lo) / width) as usize).min(bins - 1);
        counts[b] += 1;
    }
    let top = counts.iter().copied().max().unwrap_or(0).max(1) as f64;
    let f = Frame::new(lo, lo + width * bins as f64, 0.0, top);
    let mut out = String::new();
    open(&mut out, title);
    for (b, &c) in counts.iter().enumerate() {
        let (x0, x1) = (f.px(lo + width * b as f64), f.px(lo + width * (b + 1) as f64));
        let (y0, y1) = (f.py(c as f64), f.py(0.0));
        let _ = writeln!(
            out,
            r##"<rect x="{x0:.1}" y="{y0:.1}" width="{:.1}" height="{:.1}" fill="#4c78a8" stroke="white"/>"##,
            x1 - x0,
            y1 - y0
        );
    }
    axes(&mut out, &f, xlabel, "count");
    out.push_str("</svg>\n");
    out
}

/// Scatter of `(x, y)` with an optional fitted line drawn across the x range.
pub fn scatter(x: &[f64], y: &[f64], trend: Option<&Trend>, title: &str, xlabel: &str, ylabel: &str) -> String {
    let pts: Vec<(f64, f64)> = x
        .iter()
        .zip(y)
        .map(|(&a, &b)| (a, b))
        .filter(|(a, b)| a.is_finite() && b.is_finite())
        .collect();
    let range = |it: &mut dyn Iterator<Item = f64>| {
        it.fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), v| (l.min(v), h.max(v)))
    };
    let (x0, x1) = if pts.is_empty() { (0.0, 1.0) } else { range(&mut pts.iter().map(|p| p.0)) };
    let (mut y0, mut y1) = if pts.is_empty() { (0.0, 1.0) } else { range(&mut pts.iter().map(|p| p.1)) };
    if let Some(t) = trend {
        for v in [t.intercept + t.slope * x0, t.intercept + t.slope * x1] {
            y0 = y0.min(v);
            y1 = y1.max(v);
        }
    }
    let f = Frame::new(x0, x1, y0, y1);
    let mut out = String::new();
    open(&mut out, title);
    for (a, b) in &pts {
        let _ = writeln!(
            out,
            r##"<circle cx="{:.1}" cy="{:.1}" r="3" fill="#4c78a8" fill-opacity="0.7"/>"##,
            f.px(*a),
            f.py(*b)
        );
    }
    if let Some(t) = trend {
        let _ = writeln!(
            out,
            r##"<line x1="{:.1}" y1="{:.1}" x2="{:.1}" y2="{:.1}" stroke="#e45756" stroke-width="2"/>"##,
            f.px(f.x0),
            f.py(t.intercept + t.slope * f.x0),
            f.px(f.x1),
            f.py(t.intercept + t.slope * f.x1)
        );
        let _ = writeln!(
            out,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="end">slope {} , r = {:.3}</text>"#,
            W - RIGHT - 4.0,
            TOP + 14.0,
            tick(t.slope),
            t.correlation
        );
    }
    axes(&mut out, &f, xlabel, ylabel);
    out.push_str("</svg>\n");
    out
}
