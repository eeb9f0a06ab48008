//! Hand-written SVG line charts: per-step mean with a shaded 95% CI band.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use super::{StepAggregate, SweepResult};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Metric {
    ChamferSq,
    Iou,
}

impl Metric {
    pub const ALL: [Metric; 2] = [Metric::ChamferSq, Metric::Iou];

    pub fn name(self) -> &'static str {
        match self {
            Metric::ChamferSq => "chamfer_sq",
            Metric::Iou => "iou",
        }
    }

    fn label(self) -> &'static str {
        match self {
            Metric::ChamferSq => "Chamfer distance (squared)",
            Metric::Iou => "Mesh IoU",
        }
    }

    fn values(self, a: &StepAggregate) -> Option<(f64, f64)> {
        let (m, ci) = match self {
            Metric::ChamferSq => (a.mean_chamfer_sq, a.ci_chamfer_sq),
            Metric::Iou => (a.mean_iou, a.ci_iou),
        };
        m.map(|m| (m, ci.unwrap_or(0.0)))
    }
}

const W: f64 = 640.0;
const H: f64 = 400.0;
const LEFT: f64 = 80.0;
const RIGHT: f64 = 20.0;
const TOP: f64 = 30.0;
const BOTTOM: f64 = 50.0;

/// Writes one SVG per metric into `dir` and returns the paths.
pub fn emit_plot(result: &SweepResult, dir: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    Metric::ALL
        .iter()
        .map(|&m| {
            let path = dir.join(format!("{}_{}.svg", result.kind.name(), m.name()));
            std::fs::write(&path, render_svg(result, m)).map_err(|e| Error::io(&path, e))?;
            Ok(path)
        })
        .collect()
}

fn nice_step(span: f64, target: usize) -> f64 {
    let raw = span / target as f64;
    let mag = 10f64.powf(raw.log10().floor());
    let f = raw / mag;
    let nice = if f <= 1.0 {
        1.0
    } else if f <= 2.0 {
        2.0
    } else if f <= 5.0 {
        5.0
    } else {
        10.0
    };
    nice * mag
}

fn linear_ticks(lo: f64, hi: f64) -> Vec<f64> {
    let step = nice_step(hi - lo, 6);
    let first = (lo / step).ceil() as i64;
    let last = (hi / step).floor() as i64;
    (first..=last).map(|i| i as f64 * step).collect()
}

/// Ticks at `10^(k·e)` for a half-decade or coarser exponent step `e`, so
/// consecutive ticks have a constant ratio.
pub(crate) fn geometric_ticks(lo: f64, hi: f64) -> Vec<f64> {
    let (a, b) = (lo.log10(), hi.log10());
    let mut e = 0.5;
    while (b - a) / e > 8.0 {
        e *= 2.0;
    }
    let first = (a / e - 1e-9).ceil() as i64;
    let last = (b / e + 1e-9).floor() as i64;
    (first..=last).map(|k| 10f64.powf(k as f64 * e)).collect()
}

fn fmt_tick(v: f64) -> String {
    if v == 0.0 {
        return "0".into();
    }
    let a = v.abs();
    if !(1e-3..1e4).contains(&a) {
        return format!("{v:.1e}");
    }
    let s = format!("{v:.4}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    s.to_string()
}

pub fn render_svg(result: &SweepResult, metric: Metric) -> String {
    let log_x = result.kind.is_geometric();
    let pts: Vec<(f64, f64, f64)> = result
        .aggregates
        .iter()
        .filter_map(|a| metric.values(a).map(|(m, ci)| (a.param_value, m, ci)))
        .collect();
    let xs: Vec<f64> = result.aggregates.iter().map(|a| a.param_value).collect();
    let (mut x_lo, mut x_hi) = xs.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), &x| (l.min(x), h.max(x)));
    if !(x_lo < x_hi) {
        x_lo -= 1.0;
        x_hi += 1.0;
    }
    let (mut y_lo, mut y_hi) = pts
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), &(_, m, ci)| (l.min(m - ci), h.max(m + ci)));
    if pts.is_empty() {
        (y_lo, y_hi) = (0.0, 1.0);
    } else if !(y_lo < y_hi) {
        let pad = if y_lo == 0.0 { 1.0 } else { y_lo.abs() * 0.1 };
        y_lo -= pad;
        y_hi += pad;
    } else {
        let pad = (y_hi - y_lo) * 0.05;
        y_lo -= pad;
        y_hi += pad;
    }

    let tx = |x: f64| {
        let u = if log_x {
            (x.ln() - x_lo.ln()) / (x_hi.ln() - x_lo.ln())
        } else {
            (x - x_lo) / (x_hi - x_lo)
        };
        LEFT + u * (W - LEFT - RIGHT)
    };
    let ty = |y: f64| H - BOTTOM - (y - y_lo) / (y_hi - y_lo) * (H - TOP - BOTTOM);

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="{}" y="18" text-anchor="middle" font-size="14">{} sweep: {}</text>"#,
        W / 2.0,
        result.kind.name(),
        metric.label()
    );

    // Axes and ticks.
    let (x0, x1, y0, y1) = (LEFT, W - RIGHT, H - BOTTOM, TOP);
    let _ = writeln!(s, r#"<g stroke="black" fill="none"><path d="M{x0} {y1} L{x0} {y0} L{x1} {y0}"/></g>"#);
    let x_ticks = if log_x { geometric_ticks(x_lo, x_hi) } else { linear_ticks(x_lo, x_hi) };
    for t in &x_ticks {
        let px = tx(*t);
        let _ = writeln!(
            s,
            r#"<g class="xtick"><line x1="{px:.2}" y1="{y0}" x2="{px:.2}" y2="{}" stroke="black"/><text x="{px:.2}" y="{}" text-anchor="middle">{}</text></g>"#,
            y0 + 5.0,
            y0 + 18.0,
            fmt_tick(*t)
        );
    }
    for t in linear_ticks(y_lo, y_hi) {
        let py = ty(t);
        let _ = writeln!(
            s,
            r#"<g class="ytick"><line x1="{}" y1="{py:.2}" x2="{x0}" y2="{py:.2}" stroke="black"/><text x="{}" y="{:.2}" text-anchor="end">{}</text></g>"#,
            x0 - 5.0,
            x0 - 8.0,
            py + 4.0,
            fmt_tick(t)
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" text-anchor="middle">{}{}</text>"#,
        (x0 + x1) / 2.0,
        H - 10.0,
        result.kind.unit(),
        if log_x { " (log scale)" } else { "" }
    );
    let _ = writeln!(
        s,
        r#"<text transform="translate(16 {}) rotate(-90)" text-anchor="middle">{}</text>"#,
        (y0 + y1) / 2.0,
        metric.label()
    );

    if !pts.is_empty() {
        let mut band = String::new();
        for &(x, m, ci) in &pts {
            let _ = write!(band, "{:.2},{:.2} ", tx(x), ty(m + ci));
        }
        for &(x, m, ci) in pts.iter().rev() {
            let _ = write!(band, "{:.2},{:.2} ", tx(x), ty(m - ci));
        }
        let _ = writeln!(
            s,
            r##"<polygon class="ci-band" points="{}" fill="#1f77b4" fill-opacity="0.25" stroke="none"/>"##,
            band.trim_end()
        );
        let line: Vec<String> = pts.iter().map(|&(x, m, _)| format!("{:.2},{:.2}", tx(x), ty(m))).collect();
        let _ = writeln!(
            s,
            r##"<polyline class="mean" points="{}" fill="none" stroke="#1f77b4" stroke-width="2"/>"##,
            line.join(" ")
        );
    }
    s.push_str("</svg>\n");
    s
}
