//! End-to-end acceptance run: every criterion at its stated tolerance, one
//! PASS/FAIL line each. Runs without the libtest harness so the lines are
//! always printed; exits nonzero if any criterion fails.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use gva_cli::bundle::MANIFEST;
use gva_cli::check::Check;
use gva_cli::presets::{preset, PRESETS};
use gva_cli::report::aggregate;
use gva_cli::tables::Table;
use gva_cli::{run, ExperimentConfig, RunOutput};
use gva_core::behavior_cloning::{mlp_forward, mlp_grad, Activation, MlpPolicy, Sample};
use gva_core::linear_control::{dare_solve, error_amplification_probe, marginal_reference_system, DARE_MAX_ITER, DARE_TOL};
use gva_core::numerics::RngState;
use gva_core::stabilizers::{filter_checkpoint_stream, FilterConfig};
use gva_core::ParamVector;

struct Outcome {
    passed: bool,
    details: Vec<String>,
}

struct Verdict {
    passed: bool,
    details: Vec<String>,
}

impl Verdict {
    fn new() -> Self {
        Self { passed: true, details: Vec::new() }
    }

    fn le(&mut self, what: &str, lhs: f64, rhs: f64) {
        self.record(what, lhs, "<=", rhs, lhs <= rhs);
    }

    fn ge(&mut self, what: &str, lhs: f64, rhs: f64) {
        self.record(what, lhs, ">=", rhs, lhs >= rhs);
    }

    fn record(&mut self, what: &str, lhs: f64, rel: &str, rhs: f64, ok: bool) {
        self.passed &= ok;
        let tag = if ok { "ok  " } else { "FAIL" };
        self.details.push(format!("{tag} {what}: {lhs:.6e} {rel} {rhs:.6e}"));
    }

    fn checks<'a>(&mut self, checks: impl IntoIterator<Item = &'a Check>) {
        let mut any = false;
        for c in checks {
            any = true;
            self.passed &= c.passed;
            self.details.push(c.to_string());
        }
        if !any {
            self.passed = false;
            self.details.push("FAIL no matching checks were produced".into());
        }
    }

    fn note(&mut self, s: String) {
        self.details.push(format!("     {s}"));
    }

    fn done(self) -> Outcome {
        Outcome { passed: self.passed, details: self.details }
    }
}

/// Runs presets into one root and remembers every bundle for the rerun check.
struct Runs {
    root: PathBuf,
    done: BTreeMap<String, PathBuf>,
}

impl Runs {
    fn config(name: &str, seed: u64) -> ExperimentConfig {
        let mut c = ExperimentConfig::parse(preset(name).expect("shipped preset")).expect("preset parses");
        c.seed = seed;
        c
    }

    fn run(&mut self, name: &str, seed: u64) -> Result<RunOutput, String> {
        let c = Self::config(name, seed);
        let out = run(&c, &self.root).map_err(|e| format!("{name} seed {seed}: {e}"))?;
        self.done.insert(format!("{name}@{seed}"), out.dir.clone());
        Ok(out)
    }
}

fn table<'a>(out: &'a RunOutput, name: &str) -> &'a Table {
    out.outcome.tables.get(name).unwrap_or_else(|| panic!("bundle has no {name}"))
}

fn col(t: &Table, name: &str) -> Vec<f64> {
    t.column(name).expect("column present")
}

fn timed<T>(f: impl FnOnce() -> T) -> (T, f64) {
    let start = Instant::now();
    let v = f();
    (v, start.elapsed().as_secs_f64())
}

/// Exact `(E[x²], E[y²])` of the scalar SGD/EMA recursion after `T` steps.
fn exact_moments(eta: f64, gamma: f64, sigma: f64, b: f64, horizon: u64) -> (f64, f64) {
    let (mut xx, mut xy, mut yy) = (b * b, b * b, b * b);
    let s2 = sigma * sigma;
    let (p, q) = (1.0 - eta, 1.0 - gamma);
    for _ in 0..horizon {
        let nxx = p * p * xx + eta * eta * s2;
        let nxy = q * p * xy + gamma * nxx;
        let nyy = q * q * yy + 2.0 * q * gamma * p * xy + gamma * gamma * nxx;
        xx = nxx;
        xy = nxy;
        yy = nyy;
    }
    (xx, yy)
}

fn c1() -> Outcome {
    let mut v = Verdict::new();
    let sys = marginal_reference_system(1000);
    let (sol, secs) = timed(|| dare_solve(&sys.a, &sys.b, &sys.q, &sys.r, DARE_TOL, DARE_MAX_ITER));
    let sol = match sol {
        Ok(s) => s,
        Err(e) => return Outcome { passed: false, details: vec![format!("FAIL dare_solve: {e}")] },
    };
    let want = [[1.3867, 0.8250], [0.8250, -1.3867]];
    for (i, row) in want.iter().enumerate() {
        for (j, w) in row.iter().enumerate() {
            let got = sol.k.get(i, j);
            v.le(&format!("|K[{i}][{j}] - {w}| (K = {got:.6})"), (got - w).abs(), 5e-5);
        }
    }
    v.le("runtime s", secs, 5.0);
    v.done()
}

fn c2_c3(runs: &mut Runs) -> Result<(Outcome, Outcome), String> {
    let (out, secs) = timed(|| runs.run("verify-dt-ema", 0));
    let out = out?;
    let t = table(&out, "dt_ema.csv");
    let (eta, gamma, b, h) = (col(t, "eta"), col(t, "gamma"), col(t, "b"), col(t, "horizon"));
    let (mc_raw, closed, se) = (col(t, "mc_mse_raw"), col(t, "closed_raw"), col(t, "se"));
    let (mc_ema, lb, ub) = (col(t, "mc_mse_ema"), col(t, "lb_ema"), col(t, "ub_ema"));
    let mut raw = Verdict::new();
    let mut ema = Verdict::new();
    let (mut n_raw, mut n_ema) = (0, 0);
    for i in 0..t.rows.len() {
        let g = if gamma[i].is_nan() { 0.0 } else { gamma[i] };
        let (xx, yy) = exact_moments(eta[i], g, 1.0, b[i], h[i] as u64);
        if gamma[i].is_nan() {
            n_raw += 1;
            let cell = format!("eta={} b={} T={}", eta[i], b[i], h[i]);
            raw.le(&format!("|MC - closed form| [{cell}] vs 3 SE"), (mc_raw[i] - closed[i]).abs(), 3.0 * se[i]);
            raw.le(&format!("closed form vs exact recursion, relative [{cell}]"), ((closed[i] - xx) / xx).abs(), 1e-9);
        } else {
            n_ema += 1;
            let cell = format!("eta={} gamma={} T={}", eta[i], gamma[i], h[i]);
            let (one_minus, t2) = (1.0 - gamma[i], 2.0 * h[i]);
            ema.le(&format!("(1-gamma)^(2T) [{cell}]"), one_minus.powf(t2), gamma[i]);
            ema.ge(&format!("MC EMA MSE >= lower [{cell}]"), mc_ema[i], lb[i]);
            ema.le(&format!("MC EMA MSE <= upper [{cell}]"), mc_ema[i], ub[i]);
            ema.note(format!("exact EMA MSE from the moment recursion: {yy:.6e}"));
        }
    }
    raw.ge("raw grid cells", n_raw as f64, 12.0);
    ema.ge("EMA grid cells", n_ema as f64, 6.0);
    // both grids come from one run, so each is charged the full runtime
    raw.le("runtime s (both grids)", secs, 60.0);
    ema.le("runtime s (both grids)", secs, 120.0);
    Ok((raw.done(), ema.done()))
}

fn c4_c5(runs: &mut Runs) -> Result<(Outcome, Outcome), String> {
    let (out, secs) = timed(|| runs.run("verify-cliff", 0));
    let out = out?;
    let named = |n: &[&str]| out.outcome.checks.iter().filter(|c| n.contains(&c.name.as_str())).collect::<Vec<_>>();
    let mut sep = Verdict::new();
    sep.checks(named(&["raw_penalty >= C/2", "ema_penalty <= 1", "separation_factor"]));
    sep.le("runtime s", secs, 60.0);
    let r = &out.outcome.results;
    sep.note(format!("trials {}, separation factor {}", r["trials"], r["separation_factor"]));
    let mut inside = Verdict::new();
    inside.checks(named(&["raw_p_inside >= 0.1*gamma/eta", "raw_p_inside <= 0.9"]));
    Ok((sep.done(), inside.done()))
}

/// `E[θ̃_t]` from the mean ODEs `m' = -a(m - μ)`, `ỹ' = γ(m - ỹ)`, RK4 with 10⁵ steps.
fn ou_mean_ema_rk4(a: f64, gamma: f64, theta0: f64, mu: f64, t_end: f64) -> f64 {
    let f = |z: [f64; 2]| [-a * (z[0] - mu), gamma * (z[0] - z[1])];
    let n = 100_000;
    let h = t_end / n as f64;
    let mut z = [theta0, theta0];
    let step = |z: [f64; 2], k: [f64; 2], s: f64| [z[0] + s * k[0], z[1] + s * k[1]];
    for _ in 0..n {
        let k1 = f(z);
        let k2 = f(step(z, k1, h / 2.0));
        let k3 = f(step(z, k2, h / 2.0));
        let k4 = f(step(z, k3, h));
        for i in 0..2 {
            z[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
    }
    z[1]
}

fn c6(runs: &mut Runs) -> Result<Outcome, String> {
    let (out, secs) = timed(|| runs.run("verify-ou", 0));
    let out = out?;
    let r = &out.outcome.results;
    let est = |k: &str| (r[k]["value"].as_f64().unwrap_or(f64::NAN), r[k]["se"].as_f64().unwrap_or(f64::NAN));
    let (a, gamma, t, theta0, mu) = (1.0f64, 0.1f64, 5.0f64, 1.0f64, 0.0f64);
    let mean_ema = ou_mean_ema_rk4(a, gamma, theta0, mu, t);
    // the closed form with coefficient gamma/(gamma-a) on the transient disagrees with the ODE solution
    let variant = mu + (theta0 - mu) * (-a * t).exp() + ((-t * a).exp() - (-gamma * t).exp()) * gamma / (gamma - a) * (theta0 - mu);
    let var_theta = (1.0 - (-2.0 * a * t).exp()) / (2.0 * a);
    let mut v = Verdict::new();
    let (m, s) = est("mean_ema");
    v.le("|mean(EMA) - mean ODE| vs 3 SE", (m - mean_ema).abs(), 3.0 * s);
    v.note(format!("empirical {m:.6e}, mean ODE {mean_ema:.6e}, gamma/(gamma-a) variant {variant:.6e}"));
    let lib = r["analytic_mean_ema"].as_f64().unwrap_or(f64::NAN);
    v.le("|library mean formula - mean ODE|", (lib - mean_ema).abs(), 1e-9);
    let (m, s) = est("var_theta");
    v.le("|var(theta) - (1-e^{-2at})/(2a)| vs 3 SE", (m - var_theta).abs(), 3.0 * s);
    let (m, s) = est("var_ema");
    let bound = r["var_ema_bound"].as_f64().unwrap_or(f64::NAN);
    v.le("var(EMA) vs bound + 3 SE", m, bound + 3.0 * s);
    v.le("trials", 1e5, r["trials"].as_f64().unwrap_or(0.0));
    v.le("runtime s", secs, 300.0);
    Ok(v.done())
}

fn c7(runs: &mut Runs) -> Result<Outcome, String> {
    let out = runs.run("verify-driftless", 0)?;
    let (eta, t) = (1.0f64, 10.0f64);
    let integrated = BTreeMap::from([
        ("constant", eta * eta * t),
        ("inverse_sqrt", eta * eta * (1.0 + t).ln()),
        ("linear_decay(T=10)", eta * eta * t / 3.0),
    ]);
    let mut v = Verdict::new();
    let rows = out.outcome.results["schedules"].as_array().cloned().unwrap_or_default();
    v.ge("schedules checked", rows.len() as f64, 3.0);
    for row in rows {
        let name = row["schedule"].as_str().unwrap_or("?").to_string();
        let r = &row["report"];
        let f = |k: &str, f: &str| r[k][f].as_f64().unwrap_or(f64::NAN);
        if let Some(h) = integrated.get(name.as_str()) {
            v.le(
                &format!("|var(theta) - integral of eta^2| [{name}] vs 3 SE"),
                (f("var_theta", "value") - h).abs(),
                3.0 * f("var_theta", "se"),
            );
        }
        let slack = 3.0 * f("var_ema", "se");
        let bound = r["closed_form_bound"].as_f64().or(r["quadrature_bound"].as_f64()).unwrap_or(f64::NAN);
        v.le(&format!("var(EMA) vs bound + 3 SE [{name}]"), f("var_ema", "value"), bound + slack);
        if name == "constant" {
            let gamma = 1.0f64;
            let cf = eta * eta * (t - (1.0 - (-gamma * t).exp()) / gamma);
            v.le("var(EMA) vs eta^2 (t - (1-e^{-gamma t})/gamma) + 3 SE [constant]", f("var_ema", "value"), cf + slack);
        }
    }
    v.checks(out.outcome.checks.iter());
    Ok(v.done())
}

fn c8(runs: &mut Runs) -> Result<Outcome, String> {
    let (d, eps, c, h) = (1usize, 0.01f64, 1.0f64, 500usize);
    let mut v = Verdict::new();
    let rows = error_amplification_probe(d, eps, c, &[0.02, 0.03], h).map_err(|e| e.to_string())?;
    // energy of the loop x <- rho x over H steps, summed one term at a time
    let energy = |rho: f64| (0..h).map(|k| rho.powi(2 * k as i32)).sum::<f64>();
    let gap_at = |delta: f64| rows.iter().find(|r| (r.delta - delta).abs() < 1e-12).map(|r| r.gap);
    let (hi, lo) = (gap_at(0.02), gap_at(0.01));
    match (hi, lo) {
        (Some(hi), Some(lo)) => {
            let closed = d as f64 * (energy(1.02) - energy(1.0 - eps));
            v.le("gap(0.02) vs geometric sum, relative", ((hi - closed) / closed).abs(), 1e-10);
            v.note(format!("gap {hi:.10e}, geometric sum {closed:.10e}"));
            v.ge("gap(0.02) / gap(0.01) vs e^(0.005 H 0.9)", hi / lo, (0.005 * h as f64 * 0.9).exp());
        }
        _ => {
            v.passed = false;
            v.note("probe rows for delta 0.02 / 0.01 missing".into());
        }
    }
    let out = runs.run("verify-amplification", 0)?;
    let tagged: Vec<&Check> =
        out.outcome.checks.iter().filter(|c| c.name.contains("eps'=0.03]") || c.name.starts_with("gap ratio")).collect();
    v.checks(tagged);
    Ok(v.done())
}

fn lqr_seeds(runs: &mut Runs, name: &str) -> Result<(Vec<gva_cli::report::ReportRow>, f64), String> {
    let start = Instant::now();
    let mut dirs = Vec::new();
    for seed in 0..3 {
        dirs.push(runs.run(name, seed)?.dir);
    }
    let rows = aggregate(&dirs).map_err(|e| e.to_string())?;
    Ok((rows, start.elapsed().as_secs_f64()))
}

fn c9(runs: &mut Runs) -> Result<Outcome, String> {
    let (rows, secs) = lqr_seeds(runs, "lqr-marginal")?;
    let (raw, ema) = (&rows[0].summary, &rows[1].summary);
    let band = 0.02 * raw.j_max.abs();
    let mut v = Verdict::new();
    v.le("median final val loss (raw)", raw.loss_final, 1e-6);
    v.le("median range_mid (raw) vs 0.02 |J_max|", raw.range_mid, band);
    v.le("median range_mid (EMA) vs 0.02 |J_max|", ema.range_mid, band);
    v.le("|mu_mid(EMA) - mu_mid(raw)| vs 0.02 |J_max|", (ema.mu_mid - raw.mu_mid).abs(), band);
    v.note(format!("J_max {:.6e}, mu_mid raw {:.6e}, EMA {:.6e}", raw.j_max, raw.mu_mid, ema.mu_mid));
    v.le("runtime s (3 seeds)", secs, 600.0);
    Ok(v.done())
}

fn c10(runs: &mut Runs) -> Result<Outcome, String> {
    let (rows, secs) = lqr_seeds(runs, "lqr-cliff")?;
    let (raw, ema) = (&rows[0].summary, &rows[1].summary);
    let mut v = Verdict::new();
    v.le("median range_mid(EMA) vs 0.5 range_mid(raw)", ema.range_mid, 0.5 * raw.range_mid);
    v.ge("median mu_mid(EMA) vs mu_mid(raw)", ema.mu_mid, raw.mu_mid);
    v.note(format!("J_max raw {:.6e}, EMA {:.6e}", raw.j_max, ema.j_max));
    v.le("runtime s (3 seeds)", secs, 600.0);
    Ok(v.done())
}

fn lj_oracle(xs: &[f64]) -> f64 {
    let t = xs.len();
    let gamma = |j: usize| 2.0 / (j as f64 + 1.0);
    (1..=t).map(|k| gamma(k) * ((k + 1)..=t).map(|j| 1.0 - gamma(j)).product::<f64>() * xs[k - 1]).sum()
}

fn suffix_oracle(xs: &[f64], alpha: f64) -> f64 {
    let k = ((alpha * xs.len() as f64).ceil() as usize).max(1);
    xs[xs.len() - k..].iter().sum::<f64>() / k as f64
}

fn c11() -> Outcome {
    let mut v = Verdict::new();
    let (worst, secs) = timed(|| {
        let mut rng = RngState::new(11);
        let (mut lj_err, mut sx_err) = (0.0f64, 0.0f64);
        for _ in 0..100 {
            let xs: Vec<f64> = (0..200).map(|_| rng.uniform_range(-10.0, 10.0)).collect();
            let alpha = rng.uniform_range(0.01, 1.0);
            let stream: Vec<ParamVector> = xs.iter().map(|&x| ParamVector::from(vec![x])).collect();
            let lj = filter_checkpoint_stream(&stream, FilterConfig::LacosteJulien).expect("filter runs");
            let sx = filter_checkpoint_stream(&stream, FilterConfig::Suffix { alpha }).expect("filter runs");
            for t in 0..xs.len() {
                lj_err = lj_err.max((lj[t][0] - lj_oracle(&xs[..=t])).abs());
                sx_err = sx_err.max((sx[t][0] - suffix_oracle(&xs[..=t], alpha)).abs());
            }
        }
        (lj_err, sx_err)
    });
    v.le("max |LJ - weighted mean| over 100 streams x 200 steps", worst.0, 1e-10);
    v.le("max |suffix - window mean| over 100 streams x 200 steps", worst.1, 1e-10);
    v.le("runtime s", secs, 5.0);
    v.done()
}

fn loss(p: &MlpPolicy, batch: &[Sample]) -> f64 {
    let total: f64 = batch
        .iter()
        .map(|s| {
            let prev = p.prev_action_augmented.then_some(s.prev_u.as_slice());
            let out = mlp_forward(p, &s.x, prev).expect("forward");
            0.5 * out.iter().zip(&s.u).map(|(a, b)| (a - b).powi(2)).sum::<f64>()
        })
        .sum();
    total / batch.len() as f64
}

fn fd_relative_error(p: &MlpPolicy, batch: &[Sample], h: f64) -> f64 {
    let g = mlp_grad(p, batch).expect("gradient");
    let mut q = p.clone();
    let mut worst: f64 = 0.0;
    for i in 0..p.params.len() {
        let base = p.params[i];
        q.params[i] = base + h;
        let up = loss(&q, batch);
        q.params[i] = base - h;
        let down = loss(&q, batch);
        q.params[i] = base;
        worst = worst.max((g[i] - (up - down) / (2.0 * h)).abs());
    }
    worst / g.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-12)
}

fn c12() -> Outcome {
    let mut v = Verdict::new();
    let (worst, secs) = timed(|| {
        let mut rng = RngState::new(12);
        let mut worst = 0.0f64;
        for _ in 0..50 {
            let (dx, du) = (1 + rng.below(4), 1 + rng.below(3));
            let augmented = rng.below(2) == 1;
            let mut dims = vec![if augmented { dx + du } else { dx }];
            dims.extend((0..1 + rng.below(3)).map(|_| 1 + rng.below(8)));
            dims.push(du);
            let act = if rng.below(2) == 0 { Activation::Relu } else { Activation::Tanh };
            let p = MlpPolicy::init(dims, act, augmented, &mut rng).expect("init");
            let batch: Vec<Sample> = (0..1 + rng.below(8))
                .map(|_| Sample {
                    x: (0..dx).map(|_| rng.normal()).collect(),
                    prev_u: (0..du).map(|_| rng.normal()).collect(),
                    u: (0..du).map(|_| rng.normal()).collect(),
                })
                .collect();
            worst = worst.max(fd_relative_error(&p, &batch, 1e-6));
        }
        worst
    });
    v.le("max relative FD error over 50 MLPs", worst, 1e-4);
    v.le("runtime s", secs, 30.0);
    v.done()
}

fn c13(runs: &mut Runs, rerun_root: &Path) -> Result<Outcome, String> {
    let mut v = Verdict::new();
    for (name, _) in PRESETS {
        let key = format!("{name}@0");
        let first = match runs.done.get(&key) {
            Some(d) => d.clone(),
            None => runs.run(name, 0)?.dir,
        };
        let again = run(&Runs::config(name, 0), rerun_root).map_err(|e| format!("{name}: {e}"))?;
        let a = std::fs::read(first.join(MANIFEST)).map_err(|e| e.to_string())?;
        let b = std::fs::read(again.dir.join(MANIFEST)).map_err(|e| e.to_string())?;
        let same = a == b;
        v.passed &= same;
        v.details.push(format!("{} {name}: manifest {} bytes, rerun identical = {same}", if same { "ok  " } else { "FAIL" }, a.len()));
    }
    Ok(v.done())
}

fn main() {
    let tmp = tempfile::tempdir().expect("temp dir");
    let mut runs = Runs { root: tmp.path().join("first"), done: BTreeMap::new() };
    let rerun_root = tmp.path().join("rerun");
    let failed = |e: String| Outcome { passed: false, details: vec![format!("FAIL {e}")] };
    let pair = |r: Result<(Outcome, Outcome), String>| match r {
        Ok(p) => p,
        Err(e) => (failed(e.clone()), failed(e)),
    };

    let mut results: Vec<(usize, &str, Outcome)> = Vec::new();
    results.push((1, "DARE gain on the reference marginal system", c1()));
    let (a, b) = pair(c2_c3(&mut runs));
    results.push((2, "raw SGD MSE matches the exact formula", a));
    results.push((3, "EMA MSE inside its two-sided bounds", b));
    let (a, b) = pair(c4_c5(&mut runs));
    results.push((4, "cliff separation of raw SGD and EMA", a));
    results.push((5, "raw SGD inside-ball fraction", b));
    results.push((6, "OU average moments", c6(&mut runs).unwrap_or_else(failed)));
    results.push((7, "driftless schedule bounds", c7(&mut runs).unwrap_or_else(failed)));
    results.push((8, "error amplification probe", c8(&mut runs).unwrap_or_else(failed)));
    results.push((9, "marginal LQR shows no oscillation", c9(&mut runs).unwrap_or_else(failed)));
    results.push((10, "spring-cliff oscillation and EMA mitigation", c10(&mut runs).unwrap_or_else(failed)));
    results.push((11, "averaging filters match brute force", c11()));
    results.push((12, "MLP gradients match finite differences", c12()));
    results.push((13, "preset reruns give identical manifests", c13(&mut runs, &rerun_root).unwrap_or_else(failed)));

    let mut bad = Vec::new();
    for (n, what, o) in &results {
        println!("criterion {n:>2} {} {what}", if o.passed { "PASS" } else { "FAIL" });
        for d in &o.details {
            println!("      {d}");
        }
        if !o.passed {
            bad.push(*n);
        }
    }
    if bad.is_empty() {
        println!("acceptance: all {} criteria pass", results.len());
    } else {
        println!("acceptance: failing criteria {bad:?}");
        std::process::exit(1);
    }
}
