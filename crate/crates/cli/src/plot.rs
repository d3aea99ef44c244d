//! Deterministic SVG line and scatter charts.

use std::fmt::Write;

use crate::error::{CliError, CliResult};
use crate::tables::Table;

const PANEL_W: f64 = 560.0;
const PANEL_H: f64 = 360.0;
const MARGIN_L: f64 = 72.0;
const MARGIN_R: f64 = 16.0;
const MARGIN_T: f64 = 32.0;
const MARGIN_B: f64 = 48.0;
const COLORS: [&str; 4] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd"];

#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub label: String,
    pub points: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Panel {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub lines: Vec<Series>,
    pub scatter: Vec<Series>,
}

/// Named chart layouts for bundle CSVs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlotSpec {
    /// `curves.csv`: per-seed rewards as dots and their mean as a line, raw and EMA panels.
    RewardCurves,
    /// `checkpoints.csv`: log10 validation loss of the raw and EMA parameters.
    LossCurves,
    /// `mean_cliff.csv`: expected cliff reward of raw and averaged iterates.
    CliffCurve,
    /// Any CSV with columns `x` and `y`.
    Xy,
}

impl PlotSpec {
    pub const NAMES: [&'static str; 4] = ["reward-curves", "loss-curves", "cliff-curve", "xy"];

    pub fn parse(name: &str) -> CliResult<Self> {
        match name {
            "reward-curves" => Ok(Self::RewardCurves),
            "loss-curves" => Ok(Self::LossCurves),
            "cliff-curve" => Ok(Self::CliffCurve),
            "xy" => Ok(Self::Xy),
            _ => Err(CliError::Config(format!("unknown plot spec {name:?}; expected one of {:?}", Self::NAMES))),
        }
    }
}

fn finite(points: &[(f64, f64)]) -> impl Iterator<Item = &(f64, f64)> {
    points.iter().filter(|(x, y)| x.is_finite() && y.is_finite())
}

fn span(lo: f64, hi: f64) -> (f64, f64) {
    if !lo.is_finite() || !hi.is_finite() {
        (0.0, 1.0)
    } else if hi - lo <= f64::EPSILON * lo.abs().max(1.0) {
        (lo - 0.5, hi + 0.5)
    } else {
        (lo, hi)
    }
}

fn tick_label(v: f64) -> String {
    let a = v.abs();
    if a == 0.0 || (1e-3..1e5).contains(&a) {
        format!("{v:.4}").trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        format!("{v:.2e}")
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn render_panel(out: &mut String, p: &Panel, ox: f64) {
    let all: Vec<(f64, f64)> = p.lines.iter().chain(&p.scatter).flat_map(|s| finite(&s.points).copied()).collect();
    let (x0, x1) = span(
        all.iter().map(|q| q.0).fold(f64::INFINITY, f64::min),
        all.iter().map(|q| q.0).fold(f64::NEG_INFINITY, f64::max),
    );
    let (y0, y1) = span(
        all.iter().map(|q| q.1).fold(f64::INFINITY, f64::min),
        all.iter().map(|q| q.1).fold(f64::NEG_INFINITY, f64::max),
    );
    let (left, right) = (ox + MARGIN_L, ox + PANEL_W - MARGIN_R);
    let (top, bottom) = (MARGIN_T, PANEL_H - MARGIN_B);
    let mx = |x: f64| left + (x - x0) / (x1 - x0) * (right - left);
    let my = |y: f64| bottom - (y - y0) / (y1 - y0) * (bottom - top);
    let _ = writeln!(out, r#"<g class="panel">"#);
    let _ = writeln!(out, r#"<text x="{:.2}" y="20" text-anchor="middle" font-size="14">{}</text>"#, (left + right) / 2.0, escape(&p.title));
    let _ = writeln!(
        out,
        r#"<path class="axes" d="M{left:.2},{top:.2} L{left:.2},{bottom:.2} L{right:.2},{bottom:.2}" fill="none" stroke="black"/>"#
    );
    for k in 0..=4 {
        let f = k as f64 / 4.0;
        let xv = x0 + f * (x1 - x0);
        let yv = y0 + f * (y1 - y0);
        let _ = writeln!(
            out,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="middle" font-size="10">{}</text>"#,
            mx(xv),
            bottom + 14.0,
            tick_label(xv)
        );
        let _ = writeln!(
            out,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="end" font-size="10">{}</text>"#,
            left - 4.0,
            my(yv) + 3.0,
            tick_label(yv)
        );
    }
    let _ = writeln!(
        out,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle" font-size="12">{}</text>"#,
        (left + right) / 2.0,
        PANEL_H - 12.0,
        escape(&p.x_label)
    );
    let _ = writeln!(
        out,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle" font-size="12" transform="rotate(-90 {:.2} {:.2})">{}</text>"#,
        ox + 16.0,
        (top + bottom) / 2.0,
        ox + 16.0,
        (top + bottom) / 2.0,
        escape(&p.y_label)
    );
    if all.is_empty() {
        let _ = writeln!(
            out,
            r#"<text class="no-data" x="{:.2}" y="{:.2}" text-anchor="middle" font-size="14">no data</text>"#,
            (left + right) / 2.0,
            (top + bottom) / 2.0
        );
    }
    for (i, s) in p.scatter.iter().enumerate() {
        let c = COLORS[i % COLORS.len()];
        for (x, y) in finite(&s.points) {
            let _ = writeln!(out, r#"<circle cx="{:.2}" cy="{:.2}" r="1.5" fill="{c}" fill-opacity="0.35"/>"#, mx(*x), my(*y));
        }
    }
    for (i, s) in p.lines.iter().enumerate() {
        let c = COLORS[i % COLORS.len()];
        let pts: Vec<(f64, f64)> = finite(&s.points).map(|(x, y)| (mx(*x), my(*y))).collect();
        match pts.len() {
            0 => {}
            1 => {
                let _ = writeln!(out, r#"<circle class="series" cx="{:.2}" cy="{:.2}" r="2.5" fill="{c}"/>"#, pts[0].0, pts[0].1);
            }
            2 => {
                let _ = writeln!(
                    out,
                    r#"<line class="series" x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="{c}" stroke-width="1.5"/>"#,
                    pts[0].0, pts[0].1, pts[1].0, pts[1].1
                );
            }
            _ => {
                let coords: Vec<String> = pts.iter().map(|(x, y)| format!("{x:.2},{y:.2}")).collect();
                let _ = writeln!(
                    out,
                    r#"<polyline class="series" points="{}" fill="none" stroke="{c}" stroke-width="1.5"/>"#,
                    coords.join(" ")
                );
            }
        }
        let _ = writeln!(
            out,
            r#"<text x="{:.2}" y="{:.2}" font-size="11" fill="{c}">{}</text>"#,
            right - 110.0,
            top + 14.0 * (i as f64 + 1.0),
            escape(&s.label)
        );
    }
    let _ = writeln!(out, "</g>");
}

/// Panels side by side in one SVG document.
pub fn render(panels: &[Panel]) -> String {
    let w = PANEL_W * panels.len().max(1) as f64;
    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w:.0}" height="{PANEL_H:.0}" viewBox="0 0 {w:.0} {PANEL_H:.0}">"#
    );
    let _ = writeln!(out, r#"<rect width="100%" height="100%" fill="white"/>"#);
    for (i, p) in panels.iter().enumerate() {
        render_panel(&mut out, p, i as f64 * PANEL_W);
    }
    out.push_str("</svg>\n");
    out
}

fn reward_panels(t: &Table) -> CliResult<Vec<Panel>> {
    let step = t.column("step")?;
    let mut panels = Vec::new();
    for (col, title) in [("raw_reward", "raw iterate"), ("ema_reward", "EMA iterate")] {
        let r = t.column(col)?;
        let scatter: Vec<(f64, f64)> = step.iter().copied().zip(r.iter().copied()).collect();
        // mean over seeds at each checkpoint, in checkpoint order
        let mut mean: Vec<(f64, f64, usize)> = Vec::new();
        for &(s, v) in &scatter {
            if !v.is_finite() {
                continue;
            }
            match mean.iter_mut().find(|m| m.0 == s) {
                Some(m) => {
                    m.1 += v;
                    m.2 += 1;
                }
                None => mean.push((s, v, 1)),
            }
        }
        mean.sort_by(|a, b| a.0.total_cmp(&b.0));
        panels.push(Panel {
            title: title.into(),
            x_label: "optimizer step".into(),
            y_label: "rollout reward".into(),
            lines: vec![Series { label: "mean".into(), points: mean.iter().map(|m| (m.0, m.1 / m.2 as f64)).collect() }],
            scatter: vec![Series { label: "seeds".into(), points: scatter }],
        });
    }
    Ok(panels)
}

fn xy_series(t: &Table, x: &str, ys: &[(&str, &str)], transform: fn(f64) -> f64) -> CliResult<Vec<Series>> {
    let xs = t.column(x)?;
    ys.iter()
        .map(|(col, label)| {
            let v = t.column(col)?;
            Ok(Series { label: label.to_string(), points: xs.iter().copied().zip(v.into_iter().map(transform)).collect() })
        })
        .collect()
}

pub fn render_table(t: &Table, spec: PlotSpec) -> CliResult<String> {
    let panels = match spec {
        PlotSpec::RewardCurves => reward_panels(t)?,
        PlotSpec::LossCurves => vec![Panel {
            title: "validation loss".into(),
            x_label: "optimizer step".into(),
            y_label: "log10 loss".into(),
            lines: xy_series(t, "step", &[("val_loss", "raw"), ("ema_val_loss", "EMA")], f64::log10)?,
            scatter: Vec::new(),
        }],
        PlotSpec::CliffCurve => vec![Panel {
            title: "expected cliff reward".into(),
            x_label: "SGD step".into(),
            y_label: "E[J]".into(),
            lines: xy_series(t, "t", &[("raw_J", "raw"), ("ema_J", "averaged")], |v| v)?,
            scatter: Vec::new(),
        }],
        PlotSpec::Xy => vec![Panel {
            title: String::new(),
            x_label: "x".into(),
            y_label: "y".into(),
            lines: xy_series(t, "x", &[("y", "y")], |v| v)?,
            scatter: Vec::new(),
        }],
    };
    Ok(render(&panels))
}
