//! Static SVG heatmaps.

use std::fmt::Write;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
pub enum Scale {
    /// White to dark blue over `[0, max]`.
    Sequential,
    /// Blue through white to red over `[-max|v|, max|v|]`.
    Diverging,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct Heatmap {
    pub name: String,
    pub title: String,
    pub n: usize,
    /// Row-major `n × n`; rows are targets, columns are sources.
    pub values: Vec<f64>,
    pub scale: Scale,
}

/// Three significant digits.
pub fn sig3(v: f64) -> String {
    if v == 0.0 || !v.is_finite() {
        return if v.is_nan() { "nan".into() } else if v == 0.0 { "0".into() } else { format!("{v}") };
    }
    let exp = v.abs().log10().floor() as i32;
    if (-3..=5).contains(&exp) {
        let decimals = (2 - exp).max(0) as usize;
        format!("{:.*}", decimals, v)
    } else {
        format!("{:.2e}", v)
    }
}

fn lerp(a: (u8, u8, u8), b: (u8, u8, u8), t: f64) -> (u8, u8, u8) {
    let t = t.clamp(0.0, 1.0);
    let f = |x: u8, y: u8| (x as f64 + (y as f64 - x as f64) * t).round() as u8;
    (f(a.0, b.0), f(a.1, b.1), f(a.2, b.2))
}

fn color(scale: Scale, v: f64, max: f64) -> (u8, u8, u8) {
    const WHITE: (u8, u8, u8) = (255, 255, 255);
    const BLUE: (u8, u8, u8) = (8, 48, 107);
    const RED: (u8, u8, u8) = (103, 0, 13);
    if max <= 0.0 || !v.is_finite() {
        return WHITE;
    }
    match scale {
        Scale::Sequential => lerp(WHITE, BLUE, v / max),
        Scale::Diverging if v >= 0.0 => lerp(WHITE, RED, v / max),
        Scale::Diverging => lerp(WHITE, BLUE, -v / max),
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

pub fn render(h: &Heatmap) -> String {
    let cell = 44usize;
    let margin = 40usize;
    let top = 48usize;
    let size = h.n * cell;
    let (w, ht) = (margin + size + 16, top + size + 16);
    let max = match h.scale {
        Scale::Sequential => h.values.iter().cloned().fold(0.0, f64::max),
        Scale::Diverging => h.values.iter().map(|v| v.abs()).fold(0.0, f64::max),
    };
    let mut s = String::new();
    let _ = writeln!(s, r##"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{ht}" viewBox="0 0 {w} {ht}" font-family="sans-serif">"##);
    let _ = writeln!(s, r##"<title>{}</title>"##, escape(&h.title));
    let _ = writeln!(s, r##"<text x="{}" y="18" font-size="13" text-anchor="middle">{}</text>"##, w / 2, escape(&h.title));
    for j in 0..h.n {
        let x = margin + j * cell + cell / 2;
        let _ = writeln!(s, r##"<text x="{x}" y="{}" font-size="10" text-anchor="middle">{j}</text>"##, top - 6);
    }
    for i in 0..h.n {
        let y = top + i * cell + cell / 2 + 4;
        let _ = writeln!(s, r##"<text x="{}" y="{y}" font-size="10" text-anchor="end">{i}</text>"##, margin - 6);
        for j in 0..h.n {
            let v = h.values[i * h.n + j];
            let (r, g, b) = color(h.scale, v, max);
            let (x, y0) = (margin + j * cell, top + i * cell);
            let _ = writeln!(s, r##"<rect x="{x}" y="{y0}" width="{cell}" height="{cell}" fill="rgb({r},{g},{b})" stroke="#999" stroke-width="0.5"/>"##);
            let luminance = 0.299 * r as f64 + 0.587 * g as f64 + 0.114 * b as f64;
            let ink = if luminance < 128.0 { "#fff" } else { "#000" };
            let _ = writeln!(
                s,
                r##"<text x="{}" y="{}" font-size="9" text-anchor="middle" fill="{ink}">{}</text>"##,
                x + cell / 2,
                y0 + cell / 2 + 3,
                sig3(v)
            );
        }
    }
    s.push_str("</svg>\n");
    s
}

/// Divides by the matrix maximum; all-zero (or nonpositive) input stays zero.
pub fn normalize_by_max(values: &[f64]) -> Vec<f64> {
    let max = values.iter().cloned().fold(0.0, f64::max);
    if max < 1e-12 {
        vec![0.0; values.len()]
    } else {
        values.iter().map(|v| v / max).collect()
    }
}
