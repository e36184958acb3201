//! Deterministic CSV and SVG emission.
//!
//! Every CSV starts with a single `#` comment naming columns and units;
//! numbers print in fixed scientific notation so reruns are byte-identical.
//! SVG output is fully self-contained: inline styling only, no external
//! fonts, images, or scripts.

use std::fmt::Write as _;
use std::path::Path;

use crate::CliError;

/// Fixed-width scientific formatting used for every CSV number.
pub fn num(x: f64) -> String {
    format!("{x:.12e}")
}

pub struct Csv {
    body: String,
}

impl Csv {
    /// `header` names columns and units, e.g. `tau (time), d_star (diffusivity)`.
    pub fn new(header: &str) -> Self {
        Self {
            body: format!("# {header}\n"),
        }
    }

    pub fn row(&mut self, cells: &[String]) {
        self.body.push_str(&cells.join(","));
        self.body.push('\n');
    }

    pub fn into_string(self) -> String {
        self.body
    }
}

pub fn write_file(path: &Path, content: &str) -> Result<(), CliError> {
    std::fs::write(path, content)
        .map_err(|e| CliError::Io(format!("cannot write `{}`: {e}", path.display())))
}

const PANEL_W: f64 = 640.0;
const PANEL_H: f64 = 440.0;
const MARGIN_L: f64 = 70.0;
const MARGIN_R: f64 = 25.0;
const MARGIN_T: f64 = 40.0;
const MARGIN_B: f64 = 55.0;

fn tick_label(v: f64) -> String {
    if v == 0.0 {
        return "0".into();
    }
    let mag = v.abs();
    if (1e-3..1e4).contains(&mag) {
        format!("{v:.3}")
    } else {
        format!("{v:.2e}")
    }
}

struct Frame {
    x_min: f64,
    x_max: f64,
    y_min: f64,
    y_max: f64,
}

impl Frame {
    fn new(x_min: f64, x_max: f64, y_min: f64, y_max: f64) -> Self {
        let pad = |lo: f64, hi: f64| {
            if hi > lo {
                (lo, hi)
            } else {
                (lo - 0.5, lo + 0.5)
            }
        };
        let (x_min, x_max) = pad(x_min, x_max);
        let (y_min, y_max) = pad(y_min, y_max);
        Self {
            x_min,
            x_max,
            y_min,
            y_max,
        }
    }

    fn px(&self, x: f64) -> f64 {
        MARGIN_L + (x - self.x_min) / (self.x_max - self.x_min) * (PANEL_W - MARGIN_L - MARGIN_R)
    }

    fn py(&self, y: f64) -> f64 {
        PANEL_H - MARGIN_B
            - (y - self.y_min) / (self.y_max - self.y_min) * (PANEL_H - MARGIN_T - MARGIN_B)
    }
}

fn panel_chrome(out: &mut String, frame: &Frame, title: &str, x_label: &str, y_label: &str) {
    let left = MARGIN_L;
    let right = PANEL_W - MARGIN_R;
    let top = MARGIN_T;
    let bottom = PANEL_H - MARGIN_B;
    let _ = writeln!(
        out,
        r##"<rect x="{left:.1}" y="{top:.1}" width="{:.1}" height="{:.1}" fill="none" stroke="#444" stroke-width="1"/>"##,
        right - left,
        bottom - top
    );
    let _ = writeln!(
        out,
        r#"<text x="{:.1}" y="{:.1}" font-family="sans-serif" font-size="15" text-anchor="middle">{title}</text>"#,
        (left + right) / 2.0,
        top - 14.0
    );
    let _ = writeln!(
        out,
        r#"<text x="{:.1}" y="{:.1}" font-family="sans-serif" font-size="13" text-anchor="middle">{x_label}</text>"#,
        (left + right) / 2.0,
        bottom + 38.0
    );
    let _ = writeln!(
        out,
        r#"<text x="{:.1}" y="{:.1}" font-family="sans-serif" font-size="13" text-anchor="middle" transform="rotate(-90 {:.1} {:.1})">{y_label}</text>"#,
        left - 52.0,
        (top + bottom) / 2.0,
        left - 52.0,
        (top + bottom) / 2.0
    );
    for i in 0..=4 {
        let fx = frame.x_min + (frame.x_max - frame.x_min) * i as f64 / 4.0;
        let fy = frame.y_min + (frame.y_max - frame.y_min) * i as f64 / 4.0;
        let px = frame.px(fx);
        let py = frame.py(fy);
        let _ = writeln!(
            out,
            r##"<line x1="{px:.1}" y1="{bottom:.1}" x2="{px:.1}" y2="{:.1}" stroke="#444" stroke-width="1"/>"##,
            bottom + 5.0
        );
        let _ = writeln!(
            out,
            r#"<text x="{px:.1}" y="{:.1}" font-family="sans-serif" font-size="11" text-anchor="middle">{}</text>"#,
            bottom + 18.0,
            tick_label(fx)
        );
        let _ = writeln!(
            out,
            r##"<line x1="{:.1}" y1="{py:.1}" x2="{left:.1}" y2="{py:.1}" stroke="#444" stroke-width="1"/>"##,
            left - 5.0
        );
        let _ = writeln!(
            out,
            r#"<text x="{:.1}" y="{:.1}" font-family="sans-serif" font-size="11" text-anchor="end">{}</text>"#,
            left - 8.0,
            py + 4.0,
            tick_label(fy)
        );
    }
}

/// A single polyline; points are (x, y) in data coordinates.
pub fn line_panel(title: &str, x_label: &str, y_label: &str, points: &[(f64, f64)]) -> String {
    let mut out = String::new();
    if points.is_empty() {
        return out;
    }
    let x_min = points.iter().map(|p| p.0).fold(f64::INFINITY, f64::min);
    let x_max = points.iter().map(|p| p.0).fold(f64::NEG_INFINITY, f64::max);
    let y_min = points.iter().map(|p| p.1).fold(f64::INFINITY, f64::min).min(0.0);
    let y_max = points.iter().map(|p| p.1).fold(f64::NEG_INFINITY, f64::max);
    let frame = Frame::new(x_min, x_max, y_min, y_max);
    panel_chrome(&mut out, &frame, title, x_label, y_label);
    let mut path = String::new();
    for (x, y) in points {
        let _ = write!(path, "{:.2},{:.2} ", frame.px(*x), frame.py(*y));
    }
    let _ = writeln!(
        out,
        r##"<polyline points="{}" fill="none" stroke="#1f77b4" stroke-width="2"/>"##,
        path.trim_end()
    );
    out
}

fn heat_color(norm: f64) -> String {
    // White to deep blue, two-stop linear ramp.
    let t = norm.clamp(0.0, 1.0);
    let lerp = |a: f64, b: f64| (a + (b - a) * t).round() as u8;
    format!("#{:02x}{:02x}{:02x}", lerp(247.0, 8.0), lerp(251.0, 81.0), lerp(255.0, 156.0))
}

/// Space-time raster: `rows[i][j]` is the value at time `ts[i]`, node `xs[j]`.
/// Time runs upward. Large grids are strided down to at most ~120 cells per
/// axis so the file stays small.
pub fn heat_panel(
    title: &str,
    x_label: &str,
    y_label: &str,
    xs: &[f64],
    ts: &[f64],
    rows: &[Vec<f64>],
) -> String {
    let mut out = String::new();
    if xs.is_empty() || ts.is_empty() || rows.len() != ts.len() {
        return out;
    }
    let frame = Frame::new(xs[0], *xs.last().unwrap(), ts[0], *ts.last().unwrap());
    let peak = rows
        .iter()
        .flat_map(|r| r.iter())
        .fold(0.0f64, |m, v| m.max(v.abs()))
        .max(1e-300);
    let sx = xs.len().div_ceil(120);
    let st = ts.len().div_ceil(120);
    for ti in (0..ts.len()).step_by(st) {
        let t_hi = ts[(ti + st).min(ts.len() - 1).max(ti)];
        let y1 = frame.py(t_hi.max(ts[ti]));
        let y0 = frame.py(ts[ti].min(t_hi));
        let height = (y0 - y1).max(1.0);
        for xi in (0..xs.len()).step_by(sx) {
            let x_hi = xs[(xi + sx).min(xs.len() - 1).max(xi)];
            let x0 = frame.px(xs[xi]);
            let width = (frame.px(x_hi) - x0).max(1.0);
            let _ = writeln!(
                out,
                r#"<rect x="{x0:.1}" y="{y1:.1}" width="{width:.1}" height="{height:.1}" fill="{}"/>"#,
                heat_color(rows[ti][xi] / peak)
            );
        }
    }
    panel_chrome(&mut out, &frame, title, x_label, y_label);
    out
}

/// Wrap panels into one self-contained document, stacked vertically.
pub fn document(panels: &[String]) -> String {
    let height = PANEL_H * panels.len() as f64;
    let mut out = format!(
        r#"<svg xmlns="http://www.w3.org/2000/svg" viewBox="0 0 {PANEL_W:.0} {height:.0}" width="{PANEL_W:.0}" height="{height:.0}">"#
    );
    out.push('\n');
    let _ = writeln!(
        out,
        r##"<rect x="0" y="0" width="{PANEL_W:.0}" height="{height:.0}" fill="#ffffff"/>"##
    );
    for (i, panel) in panels.iter().enumerate() {
        let _ = writeln!(out, r#"<g transform="translate(0 {:.1})">"#, PANEL_H * i as f64);
        out.push_str(panel);
        out.push_str("</g>\n");
    }
    out.push_str("</svg>\n");
    out
}
