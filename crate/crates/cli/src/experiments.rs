//! One runner per experiment kind. Each validates its inputs, computes, and
//! returns tables, plots, checks and a JSON summary.

use std::collections::BTreeMap;

use gva_core::behavior_cloning::{
    collect_expert_data_with, eval_checkpoint, train_bc, CheckpointRecord, Dataset, Imitator, MlpPolicy,
};
use gva_core::gva_metrics::{compare, summarize, TrainingCurve};
use gva_core::linear_control::{
    dare_solve, error_amplification_probe, geometric_energy, make_marginally_stable, make_spring_cliff,
    marginal_reference_system, stability_margin_check, InitSampler, LinearPolicy, LinearSystem, DARE_MAX_ITER,
    DARE_TOL,
};
use gva_core::mean_cliff::{
    closed_form_no_ema_mse, cliff_stats, ema_mse_bounds, gaussian_cliff_check, monte_carlo_cliff_curve,
    simulate_driftless, simulate_ou_ema, terminal_samples, CliffSpec, CliffStats, DriftSchedule, DriftlessSpec,
    OuSpec, SgdMeanProcess,
};
use gva_core::numerics::{mean_estimate, op_norm, Matrix, RngState, Vector};
use gva_core::stabilizers::{FilterConfig, GammaSchedule};
use serde_json::{json, Value};

use crate::check::Check;
use crate::config::{
    AmplificationParams, BenchParams, CliffParams, DriftlessParams, DtEmaParams, Experiment, ExperimentConfig,
    ImitatorSpec, LqrParams, MeanCliffParams, OuParams, SystemSpec,
};
use crate::error::{CliError, CliResult};
use crate::plot::{render_table, PlotSpec};
use crate::tables::{fmt_f64, fmt_opt, Table};

/// Everything a run produces before it is written to disk.
#[derive(Debug, Clone)]
pub struct Outcome {
    pub tables: BTreeMap<String, Table>,
    pub plots: BTreeMap<String, String>,
    pub checks: Vec<Check>,
    pub results: Value,
}

impl Outcome {
    fn new(results: Value) -> Self {
        Self { tables: BTreeMap::new(), plots: BTreeMap::new(), checks: Vec::new(), results }
    }

    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }
}

pub fn execute(config: &ExperimentConfig) -> CliResult<Outcome> {
    config.validate()?;
    let rng = RngState::new(config.seed);
    match &config.experiment {
        Experiment::VerifyDtEma(p) => dt_ema(p, &rng),
        Experiment::VerifyCliff(p) => cliff(p, &rng),
        Experiment::VerifyOu(p) => ou(p, &rng),
        Experiment::VerifyDriftless(p) => driftless(p, &rng),
        Experiment::VerifyAmplification(p) => amplification(p, &rng),
        Experiment::MeanCliff(p) => mean_cliff(p, &rng),
        Experiment::LqrMarginal(p) | Experiment::LqrCliff(p) => lqr(p, &rng),
        Experiment::BenchAveraging(p) => bench(p, &rng),
    }
}

fn est(e: &gva_core::numerics::Estimate) -> Value {
    json!({ "value": e.value, "se": e.se })
}

fn stats_json(s: &CliffStats) -> Value {
    json!({
        "loss": est(&s.loss),
        "reward": est(&s.reward),
        "penalty": est(&s.penalty),
        "p_inside": est(&s.p_inside),
        "mse": est(&s.mse),
    })
}

fn axis_vector(dim: usize, offset: f64) -> Vector {
    let mut v = vec![0.0; dim];
    v[0] = offset;
    Vector(v)
}

fn ema_fixed(gamma: f64) -> FilterConfig {
    FilterConfig::Ema { schedule: GammaSchedule::Fixed { gamma }, burn_in: 0, period: 1 }
}

/// Smallest `T` with `(1-γ)^{2T} ≤ γ`.
pub fn ema_horizon_for(gamma: f64) -> u64 {
    let mut t = (gamma.ln() / (2.0 * (1.0 - gamma).ln())).ceil().max(1.0) as u64;
    while t > 1 && (1.0 - gamma).powf(2.0 * (t - 1) as f64) <= gamma {
        t -= 1;
    }
    while (1.0 - gamma).powf(2.0 * t as f64) > gamma {
        t += 1;
    }
    t
}

fn scalar_process(eta: f64, sigma: f64, b: f64, horizon: u64) -> SgdMeanProcess {
    SgdMeanProcess { eta, sigma, theta0: Vector(vec![b]), mu: Vector(vec![0.0]), horizon }
}

fn dt_ema(p: &DtEmaParams, rng: &RngState) -> CliResult<Outcome> {
    // (eta, gamma, b, T); gamma absent for the raw grid
    let mut cells: Vec<(f64, Option<f64>, f64, u64)> = Vec::new();
    for &eta in &p.raw_etas {
        for &b in &p.raw_offsets {
            for &t in &p.raw_horizons {
                cells.push((eta, None, b, t));
            }
        }
    }
    for &eta in &p.ema_etas {
        for &g in &p.ema_gammas {
            cells.push((eta, Some(g), p.ema_offset, p.ema_horizon.unwrap_or_else(|| ema_horizon_for(g))));
        }
    }
    for &(eta, g, b, t) in &cells {
        scalar_process(eta, p.sigma, b, t).validate()?;
        closed_form_no_ema_mse(eta, p.sigma, b, t)?;
        if let Some(g) = g {
            ema_mse_bounds(eta, g, p.sigma, b, t)?;
        }
    }
    let mut table = Table::new(&[
        "eta", "gamma", "b", "horizon", "mc_mse_raw", "closed_raw", "mc_mse_ema", "lb_ema", "ub_ema", "se", "se_ema",
    ]);
    let mut out = Outcome::new(Value::Null);
    let mut rows = Vec::new();
    for (ci, &(eta, g, b, t)) in cells.iter().enumerate() {
        let proc = scalar_process(eta, p.sigma, b, t);
        let samples = terminal_samples(&proc, ema_fixed(g.unwrap_or(1.0)), p.trials, &rng.fork(ci as u64))?;
        let raw_sq: Vec<f64> = samples.iter().map(|s| s.0[0] * s.0[0]).collect();
        let raw = mean_estimate(&raw_sq);
        let closed = closed_form_no_ema_mse(eta, p.sigma, b, t)?;
        let label = match g {
            None => format!("eta={eta},b={b},T={t}"),
            Some(g) => format!("eta={eta},gamma={g},T={t}"),
        };
        let (ema, bounds) = match g {
            Some(g) => {
                let ema_sq: Vec<f64> = samples.iter().map(|s| s.1[0] * s.1[0]).collect();
                (Some(mean_estimate(&ema_sq)), Some(ema_mse_bounds(eta, g, p.sigma, b, t)?))
            }
            None => (None, None),
        };
        match (ema, bounds) {
            (Some(e), Some((lb, ub))) => {
                out.checks.push(Check::ge(format!("ema_mse_lower[{label}]"), e.value, lb));
                out.checks.push(Check::le(format!("ema_mse_upper[{label}]"), e.value, ub));
            }
            _ => {
                out.checks.push(
                    Check::near(format!("raw_mse_formula[{label}]"), raw.value, closed, 3.0 * raw.se)
                        .with(format!("mc {:.6e}, closed form {closed:.6e}, 3 SE {:.3e}", raw.value, 3.0 * raw.se)),
                );
            }
        }
        table.push(vec![
            fmt_f64(eta),
            fmt_opt(g),
            fmt_f64(b),
            t.to_string(),
            fmt_f64(raw.value),
            fmt_f64(closed),
            fmt_opt(ema.map(|e| e.value)),
            fmt_opt(bounds.map(|x| x.0)),
            fmt_opt(bounds.map(|x| x.1)),
            fmt_f64(raw.se),
            fmt_opt(ema.map(|e| e.se)),
        ]);
        rows.push(json!({
            "eta": eta, "gamma": g, "b": b, "horizon": t,
            "mc_mse_raw": est(&raw), "closed_raw": closed,
            "mc_mse_ema": ema.as_ref().map(est), "bounds_ema": bounds,
        }));
    }
    out.results = json!({ "trials": p.trials, "cells": rows });
    out.tables.insert("dt_ema.csv".into(), table);
    Ok(out)
}

const CLIFF_COLUMNS: [&str; 13] = [
    "trial_block", "t", "raw_mse", "ema_mse", "raw_J", "ema_J", "p_inside", "p_inside_ema", "se_raw_mse",
    "se_ema_mse", "se_raw_J", "se_ema_J", "se_p_inside",
];

fn cliff_row(block: usize, t: u64, raw: &CliffStats, ema: &CliffStats) -> Vec<String> {
    vec![
        block.to_string(),
        t.to_string(),
        fmt_f64(raw.mse.value),
        fmt_f64(ema.mse.value),
        fmt_f64(raw.reward.value),
        fmt_f64(ema.reward.value),
        fmt_f64(raw.p_inside.value),
        fmt_f64(ema.p_inside.value),
        fmt_f64(raw.mse.se),
        fmt_f64(ema.mse.se),
        fmt_f64(raw.reward.se),
        fmt_f64(ema.reward.se),
        fmt_f64(raw.p_inside.se),
    ]
}

fn cliff(p: &CliffParams, rng: &RngState) -> CliResult<Outcome> {
    let spec = CliffSpec::new(Vector::zeros(p.dim), p.eps, p.c)?;
    let proc = SgdMeanProcess {
        eta: p.eta,
        sigma: p.sigma,
        theta0: axis_vector(p.dim, p.offset),
        mu: Vector::zeros(p.dim),
        horizon: p.horizon,
    };
    proc.validate()?;
    let filter = ema_fixed(p.gamma);
    let samples = terminal_samples(&proc, filter, p.trials, &rng.fork(0))?;
    let (raw_pts, ema_pts): (Vec<Vector>, Vec<Vector>) = samples.into_iter().unzip();
    let raw = cliff_stats(&raw_pts, &spec);
    let ema = cliff_stats(&ema_pts, &spec);
    let mut table = Table::new(&CLIFF_COLUMNS);
    let size = p.trials / p.blocks;
    for b in 0..p.blocks {
        let r = cliff_stats(&raw_pts[b * size..(b + 1) * size], &spec);
        let e = cliff_stats(&ema_pts[b * size..(b + 1) * size], &spec);
        table.push(cliff_row(b, p.horizon, &r, &e));
    }
    let separation = raw.penalty.value / ema.penalty.value;
    let mut out = Outcome::new(Value::Null);
    out.checks.push(Check::ge("raw_penalty >= C/2", raw.penalty.value, p.c / 2.0));
    out.checks.push(Check::le("ema_penalty <= 1", ema.penalty.value, 1.0));
    out.checks.push(Check::ge("separation_factor", separation, p.min_separation));
    out.checks.push(Check::ge("raw_p_inside >= 0.1*gamma/eta", raw.p_inside.value, 0.1 * p.gamma / p.eta));
    out.checks.push(Check::le("raw_p_inside <= 0.9", raw.p_inside.value, 0.9));
    let high = gaussian_cliff_check(0.0, p.gaussian_high_variance, &spec, p.trials, &rng.fork(1))?;
    let low = gaussian_cliff_check(0.0, p.gaussian_low_variance, &spec, p.trials, &rng.fork(2))?;
    let e2 = p.eps * p.eps;
    out.checks.push(Check::ge("gaussian_high: E[loss] >= 10 eps^2", high.stats.loss.value, 10.0 * e2));
    out.checks.push(Check::ge("gaussian_high: penalty >= C/2", high.stats.penalty.value, p.c / 2.0));
    out.checks.push(Check::le("gaussian_low: E[loss] <= eps^2/100", low.stats.loss.value, 0.01 * e2));
    out.checks.push(Check::le("gaussian_low: penalty <= 3 E[loss]", low.stats.penalty.value, 3.0 * low.stats.loss.value));
    out.results = json!({
        "trials": p.trials,
        "raw": stats_json(&raw),
        "ema": stats_json(&ema),
        "separation_factor": separation,
        "gaussian_high": { "stats": stats_json(&high.stats), "fitted_tail_constant": high.fitted_tail_constant },
        "gaussian_low": { "stats": stats_json(&low.stats), "fitted_tail_constant": low.fitted_tail_constant },
    });
    out.tables.insert("mean_cliff.csv".into(), table);
    Ok(out)
}

fn ou(p: &OuParams, rng: &RngState) -> CliResult<Outcome> {
    let spec = OuSpec { a: p.a, theta0: p.theta0, mu: p.mu, gamma: p.gamma, t_end: p.t_end, dt: p.dt };
    let r = simulate_ou_ema(&spec, p.trials, &rng.fork(0))?;
    let mut out = Outcome::new(Value::Null);
    out.checks.push(Check::near("mean_theta", r.mean_theta.value, r.analytic_mean_theta, 3.0 * r.mean_theta.se));
    out.checks.push(Check::near("mean_ema", r.mean_ema.value, r.analytic_mean_ema, 3.0 * r.mean_ema.se));
    out.checks.push(Check::near("var_theta", r.var_theta.value, r.analytic_var_theta, 3.0 * r.var_theta.se));
    out.checks.push(Check::le("var_ema <= bound + 3 SE", r.var_ema.value, r.var_ema_bound + 3.0 * r.var_ema.se));
    let mut t = Table::new(&["quantity", "empirical", "se", "reference", "relation"]);
    let gap_ref = r.analytic_mean_theta - r.analytic_mean_ema;
    for (q, e, reference, rel) in [
        ("mean_theta", r.mean_theta, r.analytic_mean_theta, "equal"),
        ("var_theta", r.var_theta, r.analytic_var_theta, "equal"),
        ("mean_ema", r.mean_ema, r.analytic_mean_ema, "equal"),
        ("var_ema", r.var_ema, r.var_ema_bound, "upper_bound"),
        ("mean_gap", r.mean_gap, gap_ref, "equal"),
    ] {
        t.push(vec![q.into(), fmt_f64(e.value), fmt_f64(e.se), fmt_f64(reference), rel.into()]);
    }
    out.results = serde_json::to_value(r)?;
    out.tables.insert("ou.csv".into(), t);
    Ok(out)
}

fn schedule_name(s: &DriftSchedule) -> String {
    match s {
        DriftSchedule::Constant => "constant".into(),
        DriftSchedule::InverseSqrt => "inverse_sqrt".into(),
        DriftSchedule::Inverse => "inverse".into(),
        DriftSchedule::LinearDecay { horizon } => format!("linear_decay(T={horizon})"),
    }
}

fn driftless(p: &DriftlessParams, rng: &RngState) -> CliResult<Outcome> {
    let specs: Vec<DriftlessSpec> = p
        .schedules
        .iter()
        .map(|&schedule| DriftlessSpec { schedule, eta: p.eta, gamma: p.gamma, t_end: p.t_end, dt: p.dt })
        .collect();
    for s in &specs {
        s.validate()?;
    }
    let mut out = Outcome::new(Value::Null);
    let mut t = Table::new(&[
        "schedule", "var_theta", "se_theta", "integrated_variance", "var_ema", "se_ema", "quadrature_bound",
        "closed_form_bound",
    ]);
    let mut rows = Vec::new();
    for (i, s) in specs.iter().enumerate() {
        let name = schedule_name(&s.schedule);
        let r = simulate_driftless(s, p.trials, &rng.fork(i as u64))?;
        out.checks.push(Check::near(
            format!("var_theta[{name}]"),
            r.var_theta.value,
            r.analytic_var_theta,
            3.0 * r.var_theta.se,
        ));
        let slack = 3.0 * r.var_ema.se;
        out.checks.push(Check::le(format!("var_ema <= quadrature + 3 SE [{name}]"), r.var_ema.value, r.quadrature_bound + slack));
        if let Some(cf) = r.closed_form_bound {
            out.checks.push(Check::le(format!("var_ema <= closed form + 3 SE [{name}]"), r.var_ema.value, cf + slack));
            out.checks.push(Check::le(format!("quadrature <= closed form [{name}]"), r.quadrature_bound, cf * (1.0 + 1e-9)));
        }
        t.push(vec![
            name.clone(),
            fmt_f64(r.var_theta.value),
            fmt_f64(r.var_theta.se),
            fmt_f64(r.analytic_var_theta),
            fmt_f64(r.var_ema.value),
            fmt_f64(r.var_ema.se),
            fmt_f64(r.quadrature_bound),
            fmt_opt(r.closed_form_bound),
        ]);
        rows.push(json!({ "schedule": name, "report": r }));
    }
    out.results = json!({ "trials": p.trials, "schedules": rows });
    out.tables.insert("driftless.csv".into(), t);
    Ok(out)
}

fn amplification(p: &AmplificationParams, rng: &RngState) -> CliResult<Outcome> {
    let stable = marginal_reference_system(p.stable_horizon);
    stable.validate()?;
    let rows = error_amplification_probe(p.dim, p.eps, p.c, &p.eps_primes, p.horizon)?;
    let mut out = Outcome::new(Value::Null);
    let mut t = Table::new(&["eps_prime", "delta", "gap", "closed_form", "rel_err", "good_gap"]);
    let base = geometric_energy(1.0 - p.eps, p.horizon);
    for r in &rows {
        let closed = p.dim as f64 * (geometric_energy(1.0 + r.delta, p.horizon) - base);
        let rel = ((r.gap - closed) / closed).abs();
        let label = format!("eps'={}", r.eps_prime);
        out.checks.push(Check::le(format!("gap matches geometric sum [{label}]"), rel, 1e-10));
        out.checks.push(Check::le(format!("good_gap <= 0 [{label}]"), r.good_gap, 0.0));
        t.push(vec![
            fmt_f64(r.eps_prime),
            fmt_f64(r.delta),
            fmt_f64(r.gap),
            fmt_f64(closed),
            fmt_f64(rel),
            fmt_f64(r.good_gap),
        ]);
    }
    let mut sorted = rows.clone();
    sorted.sort_by(|a, b| a.eps_prime.total_cmp(&b.eps_prime));
    for w in sorted.windows(2) {
        out.checks.push(Check::ge(format!("gap increasing [eps'={} -> {}]", w[0].eps_prime, w[1].eps_prime), w[1].gap, w[0].gap));
    }
    let find = |d: f64| {
        rows.iter()
            .find(|r| (r.delta - d).abs() <= 1e-9)
            .ok_or_else(|| CliError::Config(format!("ratio_deltas: no probe row with delta {d}")))
    };
    let (hi, lo) = (find(p.ratio_deltas[0])?, find(p.ratio_deltas[1])?);
    let ratio = hi.gap / lo.gap;
    let floor = (0.9 * p.horizon as f64 * (p.ratio_deltas[0] - p.ratio_deltas[1]) / 2.0).exp();
    out.checks.push(Check::ge(format!("gap ratio delta {} / {}", p.ratio_deltas[0], p.ratio_deltas[1]), ratio, floor));

    let sol = dare_solve(&stable.a, &stable.b, &stable.q, &stable.r, DARE_TOL, DARE_MAX_ITER)?;
    let tol = 1e-12;
    let radius = p.stable_eps / (p.stable_horizon as f64 * op_norm(&stable.b, tol)?);
    let mut r = rng.fork(0);
    let dir = Matrix::new(2, 2, (0..4).map(|_| r.normal()).collect())?;
    let k_hat = sol.k.add(&dir.scale(0.5 * radius / op_norm(&dir, tol)?))?;
    let report = stability_margin_check(&stable, &sol.k, &k_hat, p.stable_eps, &[1.0, 0.0], p.stable_grid, &mut rng.fork(1))?;
    out.checks.push(Check::le("stable loop: max reward gap <= bound", report.max_gap, report.bound));
    out.results = json!({
        "probe": rows,
        "gap_ratio": ratio,
        "gap_ratio_floor": floor,
        "stable": { "k_star": sol.k.to_rows(), "max_gap": report.max_gap, "bound": report.bound },
    });
    out.tables.insert("amplification.csv".into(), t);
    Ok(out)
}

fn mean_cliff(p: &MeanCliffParams, rng: &RngState) -> CliResult<Outcome> {
    let spec = CliffSpec::new(Vector::zeros(p.dim), p.eps, p.c)?;
    let proc = SgdMeanProcess {
        eta: p.eta,
        sigma: p.sigma,
        theta0: axis_vector(p.dim, p.offset),
        mu: Vector::zeros(p.dim),
        horizon: p.horizon,
    };
    proc.validate()?;
    let mut steps: Vec<u64> = (0..p.points)
        .map(|k| ((k as f64) * p.horizon as f64 / (p.points - 1) as f64).round() as u64)
        .collect();
    steps.dedup();
    let curve = monte_carlo_cliff_curve(&proc, &spec, p.filter, p.trials, &steps, &rng.fork(0))?;
    let mut table = Table::new(&CLIFF_COLUMNS);
    let mut rows = Vec::new();
    for (t, rep) in &curve {
        table.push(cliff_row(0, *t, &rep.raw, &rep.ema));
        rows.push(json!({ "t": t, "raw": stats_json(&rep.raw), "ema": stats_json(&rep.ema) }));
    }
    let mut out = Outcome::new(json!({ "trials": p.trials, "curve": rows }));
    out.plots.insert("mean_cliff.svg".into(), render_table(&table, PlotSpec::CliffCurve)?);
    out.tables.insert("mean_cliff.csv".into(), table);
    Ok(out)
}

/// Short human-readable filter name.
pub fn filter_label(f: &FilterConfig) -> String {
    match f {
        FilterConfig::Ema { schedule, burn_in, period } => {
            let s = match schedule {
                GammaSchedule::Fixed { gamma } => format!("gamma={gamma}"),
                GammaSchedule::Annealed { alpha, gamma_min } => format!("alpha={alpha} gamma_min={gamma_min}"),
            };
            format!("ema({s} burn_in={burn_in} period={period})")
        }
        FilterConfig::Uniform => "uniform".into(),
        FilterConfig::LacosteJulien => "lacoste_julien".into(),
        FilterConfig::Suffix { alpha } => format!("suffix(alpha={alpha})"),
    }
}

fn bench(p: &BenchParams, rng: &RngState) -> CliResult<Outcome> {
    let proc = SgdMeanProcess {
        eta: p.eta,
        sigma: p.sigma,
        theta0: axis_vector(p.dim, p.offset),
        mu: Vector::zeros(p.dim),
        horizon: p.horizon,
    };
    proc.validate()?;
    for f in &p.filters {
        gva_core::stabilizers::Filter::new(*f)?;
    }
    let mut t = Table::new(&["filter", "mse", "se"]);
    let mut rows = Vec::new();
    let mut raw_done = false;
    for f in &p.filters {
        // common random numbers: every filter sees the same noise paths
        let samples = terminal_samples(&proc, *f, p.trials, &rng.fork(0))?;
        if !raw_done {
            let raw = mean_estimate(&samples.iter().map(|s| s.0.norm_sq()).collect::<Vec<f64>>());
            t.push(vec!["raw".into(), fmt_f64(raw.value), fmt_f64(raw.se)]);
            rows.push(json!({ "filter": "raw", "mse": est(&raw) }));
            raw_done = true;
        }
        let m = mean_estimate(&samples.iter().map(|s| s.1.norm_sq()).collect::<Vec<f64>>());
        let label = filter_label(f);
        t.push(vec![label.clone(), fmt_f64(m.value), fmt_f64(m.se)]);
        rows.push(json!({ "filter": label, "mse": est(&m) }));
    }
    let mut out = Outcome::new(json!({ "trials": p.trials, "filters": rows }));
    out.tables.insert("averaging.csv".into(), t);
    Ok(out)
}

pub fn build_system(spec: &SystemSpec, rng: &RngState) -> CliResult<LinearSystem> {
    let sys = match *spec {
        SystemSpec::MarginalReference { horizon } => marginal_reference_system(horizon),
        SystemSpec::MarginalRandom { dim, alpha, horizon } => make_marginally_stable(&mut rng.fork(4), dim, alpha, horizon)?,
        SystemSpec::SpringCliff { eta_time, kappa, horizon, arc_lo, arc_hi } => {
            let mut s = make_spring_cliff(eta_time, kappa, horizon)?;
            s.init = InitSampler::CircleArc { lo: arc_lo, hi: arc_hi };
            s
        }
    };
    sys.validate()?;
    Ok(sys)
}

pub fn build_imitator(spec: &ImitatorSpec, sys: &LinearSystem, rng: &RngState) -> CliResult<Imitator> {
    let (dx, du) = (sys.state_dim(), sys.action_dim());
    let mut r = rng.fork(3);
    Ok(match spec {
        ImitatorSpec::Linear { init_scale } => {
            let s = init_scale.unwrap_or(1.0 / (dx as f64).sqrt());
            let k = Matrix::new(du, dx, (0..du * dx).map(|_| r.uniform_range(-s, s)).collect())?;
            Imitator::Linear(LinearPolicy::new(k))
        }
        ImitatorSpec::Mlp { hidden, activation, prev_action_augmented } => {
            let mut dims = vec![dx + if *prev_action_augmented { du } else { 0 }];
            dims.extend(hidden);
            dims.push(du);
            Imitator::Mlp(MlpPolicy::init(dims, *activation, *prev_action_augmented, &mut r)?)
        }
    })
}

/// Dataset as CSV: one row per (trajectory, step) with its split.
pub fn dataset_table(d: &Dataset) -> Table {
    let (dx, du) = (d.state_dim(), d.action_dim());
    let mut header = vec!["traj_id".to_string(), "split".into(), "h".into()];
    header.extend((0..dx).map(|i| format!("x{i}")));
    header.extend((0..du).map(|i| format!("u{i}")));
    let mut t = Table { header, rows: Vec::new() };
    let mut split = vec![""; d.trajectories.len()];
    d.train.iter().for_each(|&i| split[i] = "train");
    d.val.iter().for_each(|&i| split[i] = "val");
    for (i, tr) in d.trajectories.iter().enumerate() {
        for (h, u) in tr.actions.iter().enumerate() {
            let mut row = vec![i.to_string(), split[i].to_string(), h.to_string()];
            row.extend(tr.states[h].iter().map(|v| fmt_f64(*v)));
            row.extend(u.iter().map(|v| fmt_f64(*v)));
            t.rows.push(row);
        }
    }
    t
}

/// Inverse of [`dataset_table`]; rows must be grouped by trajectory in step order.
pub fn dataset_from_table(t: &Table) -> CliResult<Dataset> {
    let xcols: Vec<usize> = (0..).map_while(|i| t.index(&format!("x{i}")).ok()).collect();
    let ucols: Vec<usize> = (0..).map_while(|i| t.index(&format!("u{i}")).ok()).collect();
    let (ti, si, hi) = (t.index("traj_id")?, t.index("split")?, t.index("h")?);
    let num = |s: &str| s.parse::<f64>().map_err(|_| CliError::Data(format!("bad number {s:?}")));
    let mut d = Dataset { trajectories: Vec::new(), train: Vec::new(), val: Vec::new() };
    for row in &t.rows {
        let id: usize = row[ti].parse().map_err(|_| CliError::Data(format!("bad traj_id {:?}", row[ti])))?;
        let h: usize = row[hi].parse().map_err(|_| CliError::Data(format!("bad step {:?}", row[hi])))?;
        if id == d.trajectories.len() {
            d.trajectories.push(gva_core::behavior_cloning::Trajectory { states: Vec::new(), actions: Vec::new() });
            match row[si].as_str() {
                "train" => d.train.push(id),
                "val" => d.val.push(id),
                s => return Err(CliError::Data(format!("bad split {s:?}"))),
            }
        }
        let tr = d
            .trajectories
            .get_mut(id)
            .filter(|tr| tr.actions.len() == h)
            .ok_or_else(|| CliError::Data(format!("row for trajectory {id} step {h} is out of order")))?;
        tr.states.push(xcols.iter().map(|&c| num(&row[c])).collect::<CliResult<_>>()?);
        tr.actions.push(ucols.iter().map(|&c| num(&row[c])).collect::<CliResult<_>>()?);
    }
    d.validate()?;
    Ok(d)
}

fn checkpoint_tables(records: &[CheckpointRecord]) -> (Table, Table) {
    let mut cp = Table::new(&[
        "step", "train_loss", "val_loss", "ema_val_loss", "raw_mean_reward", "ema_mean_reward", "raw_divergence_rate",
        "ema_divergence_rate",
    ]);
    let mut curves = Table::new(&["step", "seed", "raw_reward", "ema_reward", "raw_diverged", "ema_diverged"]);
    let rate = |e: Option<&gva_core::behavior_cloning::EvalResult>| {
        e.map(|e| e.diverged.iter().filter(|d| **d).count() as f64 / e.diverged.len().max(1) as f64)
    };
    for r in records {
        cp.push(vec![
            r.step.to_string(),
            fmt_f64(r.train_loss),
            fmt_f64(r.val_loss),
            fmt_f64(r.ema_val_loss),
            fmt_opt(r.raw_eval.as_ref().map(|e| e.mean)),
            fmt_opt(r.ema_eval.as_ref().map(|e| e.mean)),
            fmt_opt(rate(r.raw_eval.as_ref())),
            fmt_opt(rate(r.ema_eval.as_ref())),
        ]);
        if let (Some(a), Some(b)) = (&r.raw_eval, &r.ema_eval) {
            for k in 0..a.rewards.len() {
                curves.push(vec![
                    r.step.to_string(),
                    k.to_string(),
                    fmt_f64(a.rewards[k]),
                    fmt_f64(b.rewards[k]),
                    u8::from(a.diverged[k]).to_string(),
                    u8::from(b.diverged[k]).to_string(),
                ]);
            }
        }
    }
    (cp, curves)
}

fn lqr(p: &LqrParams, rng: &RngState) -> CliResult<Outcome> {
    let sys = build_system(&p.system, rng)?;
    let init = build_imitator(&p.imitator, &sys, rng)?;
    p.train.validate()?;
    let sol = dare_solve(&sys.a, &sys.b, &sys.q, &sys.r, DARE_TOL, DARE_MAX_ITER)?;
    let expert = LinearPolicy::new(sol.k.clone());
    let data = collect_expert_data_with(&sys, &expert, p.data, &rng.fork(0))?;
    let train_rng = rng.fork(2);
    let records = train_bc(&data, &init, &p.train, &sys, &train_rng)?;
    let expert_eval = if p.train.evaluate {
        Some(eval_checkpoint(&sys, &expert, p.train.eval_seeds, &train_rng.fork(1_000_000))?)
    } else {
        None
    };
    let (cp, curves) = checkpoint_tables(&records);
    let mut out = Outcome::new(Value::Null);
    let summaries = if p.train.evaluate && records.len() >= 4 {
        let raw = summarize(&TrainingCurve::raw(&records)?)?;
        let ema = summarize(&TrainingCurve::ema(&records)?)?;
        Some((raw, ema, compare(&raw, &ema)))
    } else {
        None
    };
    out.results = json!({
        "expert_gain": sol.k.to_rows(),
        "expert_mean_reward": expert_eval.as_ref().map(|e| e.mean),
        "checkpoints": records.len(),
        "final_step": records.last().map(|r| r.step),
        "raw": summaries.as_ref().map(|s| s.0),
        "ema": summaries.as_ref().map(|s| s.1),
        "comparison": summaries.as_ref().map(|s| s.2),
    });
    if p.train.evaluate {
        out.plots.insert("reward_curves.svg".into(), render_table(&curves, PlotSpec::RewardCurves)?);
    }
    out.plots.insert("loss_curves.svg".into(), render_table(&cp, PlotSpec::LossCurves)?);
    if p.export_dataset {
        out.tables.insert("dataset.csv".into(), dataset_table(&data));
    }
    out.tables.insert("checkpoints.csv".into(), cp);
    out.tables.insert("curves.csv".into(), curves);
    Ok(out)
}
