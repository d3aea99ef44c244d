//! Seed-median comparison tables across result bundles.

use std::path::Path;

use gva_core::gva_metrics::{compare, median_over_seeds, GvaSummary};
use serde_json::Value;

use crate::error::{CliError, CliResult};
use crate::tables::{fmt_opt, Table};

/// One table row: an intervention's seed-median summary.
#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub intervention: String,
    pub seeds: usize,
    pub summary: GvaSummary,
    /// Only on rows compared against the raw row.
    pub oscillation_ratio: Option<f64>,
}

fn num(v: &Value, key: &str) -> f64 {
    v.get(key).and_then(Value::as_f64).unwrap_or(f64::NAN)
}

/// Reads a summary written by serde (non-finite numbers appear as null).
pub fn summary_from_json(v: &Value) -> CliResult<GvaSummary> {
    if !v.is_object() {
        return Err(CliError::Data("bundle has no training-curve summary".into()));
    }
    Ok(GvaSummary {
        j_max: num(v, "j_max"),
        j_final: num(v, "j_final"),
        loss_min: num(v, "loss_min"),
        loss_final: num(v, "loss_final"),
        mu_mid: num(v, "mu_mid"),
        range_mid: num(v, "range_mid"),
        t_early: v.get("t_early").and_then(Value::as_f64),
        t_worse: v.get("t_worse").and_then(Value::as_f64),
        divergence_rate: num(v, "divergence_rate"),
    })
}

pub fn read_summary_json(bundle: &Path) -> CliResult<Value> {
    let p = bundle.join("summary.json");
    let bytes = std::fs::read(&p).map_err(|e| CliError::io(&p, e))?;
    Ok(serde_json::from_slice(&bytes)?)
}

/// Medians over the bundles of the raw and EMA summaries, plus the
/// oscillation ratio of the medians.
pub fn aggregate(bundles: &[impl AsRef<Path>]) -> CliResult<Vec<ReportRow>> {
    if bundles.is_empty() {
        return Err(CliError::Config("report needs at least one bundle".into()));
    }
    let mut kind: Option<String> = None;
    let (mut raw, mut ema) = (Vec::new(), Vec::new());
    for b in bundles {
        let v = read_summary_json(b.as_ref())?;
        let k = v.get("kind").and_then(Value::as_str).unwrap_or_default().to_string();
        match &kind {
            Some(k0) if *k0 != k => {
                return Err(CliError::Config(format!("mixed experiment kinds: {k0} and {k}")));
            }
            _ => kind = Some(k),
        }
        let results = &v["results"];
        raw.push(summary_from_json(&results["raw"])?);
        ema.push(summary_from_json(&results["ema"])?);
    }
    let raw_m = median_over_seeds(&raw)?;
    let ema_m = median_over_seeds(&ema)?;
    Ok(vec![
        ReportRow { intervention: "raw".into(), seeds: raw.len(), summary: raw_m, oscillation_ratio: None },
        ReportRow {
            intervention: "ema".into(),
            seeds: ema.len(),
            summary: ema_m,
            oscillation_ratio: Some(compare(&raw_m, &ema_m).oscillation_ratio),
        },
    ])
}

const COLUMNS: [&str; 12] = [
    "intervention", "seeds", "j_max", "j_final", "loss_min", "loss_final", "mu_mid", "range_mid", "t_early",
    "t_worse", "divergence_rate", "oscillation_ratio",
];

fn short(x: Option<f64>) -> String {
    match x {
        None => "-".into(),
        Some(v) if v == 0.0 || (1e-3..1e5).contains(&v.abs()) => format!("{v:.4}"),
        Some(v) => format!("{v:.3e}"),
    }
}

fn cells(r: &ReportRow, f: fn(Option<f64>) -> String) -> Vec<String> {
    let s = &r.summary;
    vec![
        r.intervention.clone(),
        r.seeds.to_string(),
        f(Some(s.j_max)),
        f(Some(s.j_final)),
        f(Some(s.loss_min)),
        f(Some(s.loss_final)),
        f(Some(s.mu_mid)),
        f(Some(s.range_mid)),
        f(s.t_early),
        f(s.t_worse),
        f(Some(s.divergence_rate)),
        f(r.oscillation_ratio),
    ]
}

/// Aligned plain-text table; `-` marks absent values.
pub fn render_text(rows: &[ReportRow]) -> String {
    let body: Vec<Vec<String>> = rows.iter().map(|r| cells(r, short)).collect();
    let widths: Vec<usize> = (0..COLUMNS.len())
        .map(|i| body.iter().map(|r| r[i].len()).chain([COLUMNS[i].len()]).max().unwrap_or(0))
        .collect();
    let line = |r: Vec<String>| {
        r.iter().zip(&widths).map(|(c, w)| format!("{c:>w$}")).collect::<Vec<_>>().join("  ").trim_end().to_string() + "\n"
    };
    let mut out = line(COLUMNS.iter().map(|s| s.to_string()).collect());
    for r in body {
        out += &line(r);
    }
    out
}

pub fn to_table(rows: &[ReportRow]) -> Table {
    let mut t = Table::new(&COLUMNS);
    for r in rows {
        let mut c = cells(r, fmt_opt);
        c[1] = r.seeds.to_string();
        t.push(c);
    }
    t
}

