//! Noisy mean estimation with a cliff reward: SGD/EMA simulation, closed-form
//! MSE predictions, and continuous-time (driftless Brownian, Ornstein-Uhlenbeck)
//! simulators of the averaged process.

use serde::{Deserialize, Serialize};

use crate::error::{arg, check_dims, Error, Result};
use crate::numerics::{mean_estimate, par_trials, variance_estimate, Estimate, RngState, Vector};
use crate::stabilizers::{Filter, FilterConfig};

/// Reward `-‖θ-μ‖²` inside the closed ε-ball around `μ`, `-C` outside.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CliffSpec {
    pub mu: Vector,
    pub eps: f64,
    pub c: f64,
}

impl CliffSpec {
    pub fn new(mu: Vector, eps: f64, c: f64) -> Result<Self> {
        let s = Self { mu, eps, c };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.eps > 0.0 && self.eps <= 1.0) {
            return Err(Error::Validation(format!("cliff radius must lie in (0, 1], got {}", self.eps)));
        }
        if !(self.c > self.eps * self.eps) {
            return Err(Error::Validation("cliff penalty C must exceed eps²".into()));
        }
        Ok(())
    }
}

/// `½‖θ-μ‖²`.
pub fn bc_loss(theta: &Vector, mu: &Vector) -> Result<f64> {
    check_dims("bc_loss", mu.dim(), theta.dim())?;
    Ok(0.5 * theta.sub(mu).norm_sq())
}

pub fn bc_loss_grad(theta: &Vector, mu: &Vector) -> Result<Vector> {
    check_dims("bc_loss_grad", mu.dim(), theta.dim())?;
    Ok(theta.sub(mu))
}

pub fn cliff_reward(theta: &Vector, spec: &CliffSpec) -> f64 {
    let d2 = theta.sub(&spec.mu).norm_sq();
    if d2.sqrt() <= spec.eps {
        -d2
    } else {
        -spec.c
    }
}

/// SGD on the noisy square loss: `θ ← θ - η(θ - μ + w)`, `w ~ N(0, σ²I)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SgdMeanProcess {
    pub eta: f64,
    pub sigma: f64,
    pub theta0: Vector,
    pub mu: Vector,
    pub horizon: u64,
}

impl SgdMeanProcess {
    pub fn validate(&self) -> Result<()> {
        if !(self.eta > 0.0 && self.eta < 1.0) {
            return Err(Error::Validation(format!("step size must lie in (0, 1), got {}", self.eta)));
        }
        if !(self.sigma >= 0.0) {
            return Err(Error::Validation("noise scale must be >= 0".into()));
        }
        if self.theta0.is_empty() {
            return Err(Error::Validation("dimension must be >= 1".into()));
        }
        check_dims("SgdMeanProcess", self.mu.dim(), self.theta0.dim())
    }

    pub fn dim(&self) -> usize {
        self.theta0.dim()
    }

    /// Initial distance `b = ‖θ⁰ - μ‖`.
    pub fn offset(&self) -> f64 {
        self.theta0.sub(&self.mu).norm()
    }

    fn step(&self, theta: &mut Vector, rng: &mut RngState) {
        for (x, m) in theta.iter_mut().zip(self.mu.iter()) {
            let w = self.sigma * rng.normal();
            *x -= self.eta * (*x - m + w);
        }
    }

    fn final_pair(&self, filter: FilterConfig, rng: &mut RngState) -> Result<(Vector, Vector)> {
        let mut f = Filter::new(filter)?;
        let mut theta = self.theta0.clone();
        let mut shadow = f.update(0, &theta)?;
        for t in 1..=self.horizon {
            self.step(&mut theta, rng);
            shadow = f.update(t, &theta)?;
        }
        Ok((theta, shadow))
    }
}

/// Full path `(θ⁽ᵗ⁾, θ̃⁽ᵗ⁾)` for `t = 0..=T`.
pub fn simulate_sgd_mean(proc: &SgdMeanProcess, filter: FilterConfig, rng: &mut RngState) -> Result<Vec<(Vector, Vector)>> {
    proc.validate()?;
    let mut f = Filter::new(filter)?;
    let mut theta = proc.theta0.clone();
    let mut out = Vec::with_capacity(proc.horizon as usize + 1);
    out.push((theta.clone(), f.update(0, &theta)?));
    for t in 1..=proc.horizon {
        proc.step(&mut theta, rng);
        out.push((theta.clone(), f.update(t, &theta)?));
    }
    Ok(out)
}

/// Exact `E[(θ⁽ᵗ⁾-μ)²]` of scalar SGD without averaging.
pub fn closed_form_no_ema_mse(eta: f64, sigma: f64, b: f64, t: u64) -> Result<f64> {
    if !(eta > 0.0 && eta < 1.0) {
        return arg(format!("closed_form_no_ema_mse: eta must lie in (0, 1), got {eta}"));
    }
    let decay = (1.0 - eta).powf(2.0 * t as f64);
    Ok(eta * sigma * sigma * (1.0 - decay) / (2.0 - eta) + b * b * decay)
}

/// Which of the three step-size/averaging regimes a pair falls into.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EmaRegime {
    /// γ ≥ 2η: averaging faster than the optimizer.
    FastAveraging,
    /// γ/2 < η < 2γ
    Comparable,
    /// η ≥ 2γ: averaging slower than the optimizer.
    SlowAveraging,
}

pub fn ema_regime(eta: f64, gamma: f64) -> EmaRegime {
    if gamma >= 2.0 * eta {
        EmaRegime::FastAveraging
    } else if eta >= 2.0 * gamma {
        EmaRegime::SlowAveraging
    } else {
        EmaRegime::Comparable
    }
}

/// Analytic `(lower, upper)` bounds on the scalar EMA MSE `E[(θ̃⁽ᵀ⁾-μ)²]`,
/// valid for `0 < η, γ < ½`.
pub fn ema_mse_bounds(eta: f64, gamma: f64, sigma: f64, b: f64, horizon: u64) -> Result<(f64, f64)> {
    if !(eta > 0.0 && eta < 0.5 && gamma > 0.0 && gamma < 0.5) {
        return Err(Error::Validation(format!(
            "ema_mse_bounds needs 0 < eta, gamma < 1/2 (got eta={eta}, gamma={gamma})"
        )));
    }
    let t = horizon as f64;
    let s2 = sigma * sigma;
    let b2 = b * b;
    let g_decay = (1.0 - gamma).powf(2.0 * t);
    let upper = 2.0 * b2 * g_decay
        + match ema_regime(eta, gamma) {
            EmaRegime::FastAveraging => 4.0 * s2 * eta + 4.0 * b2 * (1.0 - eta).powf(2.0 * t),
            EmaRegime::Comparable => 16.0 * s2 * eta + 32.0 * b2 * (1.0 - eta / 4.0).powf(2.0 * t),
            EmaRegime::SlowAveraging => 4.0 * s2 * gamma + 4.0 * b2 * (gamma / eta).powi(2) * g_decay,
        };
    let tm1 = (t - 1.0).max(0.0);
    let lower = b2 * g_decay
        + 0.25
            * if gamma >= eta {
                s2 * eta + b2 * (1.0 - eta).powf(2.0 * tm1)
            } else {
                s2 * gamma + b2 * (gamma / eta).powi(2) * (1.0 - gamma).powf(2.0 * tm1)
            };
    Ok((lower, upper))
}

/// Monte Carlo statistics of one estimator (raw iterate or its average).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CliffStats {
    /// `E[ℓ_BC]`
    pub loss: Estimate,
    /// `E[J]`
    pub reward: Estimate,
    /// `J(μ) - E[J] = -E[J]`
    pub penalty: Estimate,
    /// `P[‖θ-μ‖ ≤ ε]`
    pub p_inside: Estimate,
    /// `E[‖θ-μ‖²]`
    pub mse: Estimate,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CliffReport {
    pub trials: usize,
    pub raw: CliffStats,
    pub ema: CliffStats,
}

fn estimate_jk(xs: &[f64]) -> Estimate {
    Estimate { value: crate::numerics::mean(xs), se: crate::numerics::jackknife_se(xs) }
}

/// Loss, reward, penalty, in-ball rate and MSE of a set of estimates.
pub fn cliff_stats(points: &[Vector], spec: &CliffSpec) -> CliffStats {
    let d2: Vec<f64> = points.iter().map(|p| p.sub(&spec.mu).norm_sq()).collect();
    let loss: Vec<f64> = d2.iter().map(|x| 0.5 * x).collect();
    let reward: Vec<f64> = points.iter().map(|p| cliff_reward(p, spec)).collect();
    let penalty: Vec<f64> = reward.iter().map(|r| -r).collect();
    let inside: Vec<f64> = d2.iter().map(|x| f64::from(u8::from(x.sqrt() <= spec.eps))).collect();
    CliffStats {
        loss: estimate_jk(&loss),
        reward: estimate_jk(&reward),
        penalty: estimate_jk(&penalty),
        p_inside: estimate_jk(&inside),
        mse: estimate_jk(&d2),
    }
}

/// Terminal iterates of `trials` independent runs, in trial order.
pub fn terminal_samples(proc: &SgdMeanProcess, filter: FilterConfig, trials: usize, rng: &RngState) -> Result<Vec<(Vector, Vector)>> {
    proc.validate()?;
    Filter::new(filter)?;
    par_trials(rng, trials, |_, mut r| proc.final_pair(filter, &mut r)).into_iter().collect()
}

pub fn monte_carlo_cliff(
    proc: &SgdMeanProcess,
    spec: &CliffSpec,
    filter: FilterConfig,
    trials: usize,
    rng: &RngState,
) -> Result<CliffReport> {
    if trials < 100 {
        return arg("monte_carlo_cliff: trials must be >= 100");
    }
    spec.validate()?;
    check_dims("monte_carlo_cliff", spec.mu.dim(), proc.dim())?;
    let samples = terminal_samples(proc, filter, trials, rng)?;
    let (raw, ema): (Vec<Vector>, Vec<Vector>) = samples.into_iter().unzip();
    Ok(CliffReport { trials, raw: cliff_stats(&raw, spec), ema: cliff_stats(&ema, spec) })
}

/// Cliff statistics at each requested step (sorted, each `<= T`) from one
/// set of `trials` runs.
pub fn monte_carlo_cliff_curve(
    proc: &SgdMeanProcess,
    spec: &CliffSpec,
    filter: FilterConfig,
    trials: usize,
    steps: &[u64],
    rng: &RngState,
) -> Result<Vec<(u64, CliffReport)>> {
    if trials < 100 {
        return arg("monte_carlo_cliff_curve: trials must be >= 100");
    }
    proc.validate()?;
    spec.validate()?;
    Filter::new(filter)?;
    check_dims("monte_carlo_cliff_curve", spec.mu.dim(), proc.dim())?;
    if steps.windows(2).any(|w| w[0] >= w[1]) || steps.last().is_some_and(|&s| s > proc.horizon) {
        return arg("monte_carlo_cliff_curve: steps must be strictly increasing and <= T");
    }
    let paths = par_trials(rng, trials, |_, mut r| -> Result<Vec<(Vector, Vector)>> {
        let mut f = Filter::new(filter)?;
        let mut theta = proc.theta0.clone();
        let mut shadow = f.update(0, &theta)?;
        let mut out = Vec::with_capacity(steps.len());
        let mut next = steps.iter().peekable();
        if next.peek() == Some(&&0) {
            out.push((theta.clone(), shadow.clone()));
            next.next();
        }
        for t in 1..=proc.horizon {
            if next.peek().is_none() {
                break;
            }
            proc.step(&mut theta, &mut r);
            shadow = f.update(t, &theta)?;
            if next.peek() == Some(&&t) {
                out.push((theta.clone(), shadow.clone()));
                next.next();
            }
        }
        Ok(out)
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    Ok(steps
        .iter()
        .enumerate()
        .map(|(k, &t)| {
            let raw: Vec<Vector> = paths.iter().map(|p| p[k].0.clone()).collect();
            let ema: Vec<Vector> = paths.iter().map(|p| p[k].1.clone()).collect();
            (t, CliffReport { trials, raw: cliff_stats(&raw, spec), ema: cliff_stats(&ema, spec) })
        })
        .collect())
}

/// Thresholds separating the high-loss and low-loss regimes of the Gaussian check.
pub const HIGH_LOSS_FACTOR: f64 = 10.0;
pub const LOW_LOSS_FACTOR: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussianCliffReport {
    pub stats: CliffStats,
    /// Penalty `2E[ℓ] + C·c₂·exp(-ε²/(2E[ℓ]))` solved for `c₂` (0 when not positive).
    pub fitted_tail_constant: f64,
    /// `E[ℓ] ≥ 10ε²`: penalty must be at least C/2.
    pub high_loss: bool,
    /// `E[ℓ] ≤ ε²/100`: penalty must be at most 3E[ℓ].
    pub low_loss: bool,
    pub ordering_holds: bool,
}

/// Samples `θ ~ N(μ + offset·e₁, variance·I)` and compares the cliff penalty
/// with the BC loss.
pub fn gaussian_cliff_check(offset: f64, variance: f64, spec: &CliffSpec, trials: usize, rng: &RngState) -> Result<GaussianCliffReport> {
    if trials < 100 {
        return arg("gaussian_cliff_check: trials must be >= 100");
    }
    if !(variance >= 0.0) {
        return arg("gaussian_cliff_check: variance must be >= 0");
    }
    spec.validate()?;
    let sd = variance.sqrt();
    let points: Vec<Vector> = par_trials(rng, trials, |_, mut r| {
        Vector(
            spec.mu
                .iter()
                .enumerate()
                .map(|(i, m)| m + if i == 0 { offset } else { 0.0 } + sd * r.normal())
                .collect(),
        )
    });
    let stats = cliff_stats(&points, spec);
    let l = stats.loss.value;
    let e2 = spec.eps * spec.eps;
    let high_loss = l >= HIGH_LOSS_FACTOR * e2;
    let low_loss = l <= LOW_LOSS_FACTOR * e2;
    let p = stats.penalty.value;
    let ordering_holds = (!high_loss || p >= spec.c / 2.0) && (!low_loss || p <= 3.0 * l);
    let fitted_tail_constant = if l > 0.0 {
        ((p - 2.0 * l) / (spec.c * (-e2 / (2.0 * l)).exp())).max(0.0)
    } else {
        0.0
    };
    let fitted_tail_constant = if fitted_tail_constant.is_finite() { fitted_tail_constant } else { 0.0 };
    Ok(GaussianCliffReport { stats, fitted_tail_constant, high_loss, low_loss, ordering_holds })
}

/// `dθ = -a(θ-μ)dt + dB` with the averaged process `dθ̃ = γ(θ-θ̃)dt`, both
/// started at `θ⁰`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OuSpec {
    pub a: f64,
    pub theta0: f64,
    pub mu: f64,
    pub gamma: f64,
    pub t_end: f64,
    pub dt: f64,
}

pub const OU_RESONANCE_TOL: f64 = 1e-6;

impl OuSpec {
    pub fn validate(&self) -> Result<()> {
        if self.a == 0.0 || !self.a.is_finite() {
            return Err(Error::Validation("drift rate a must be nonzero".into()));
        }
        if !(self.gamma > 0.0) || !(self.t_end > 0.0) || !(self.dt > 0.0) {
            return Err(Error::Validation("gamma, t_end and dt must be > 0".into()));
        }
        let ratio = self.gamma / self.a;
        if (ratio - 1.0).abs() < OU_RESONANCE_TOL || (ratio - 2.0).abs() < OU_RESONANCE_TOL {
            return Err(Error::Validation(format!("gamma/a = {ratio} hits a singular case (1 or 2)")));
        }
        let max_dt = (1.0 / self.a.abs()).min(1.0 / self.gamma) / 50.0;
        if self.dt > max_dt {
            return Err(Error::Validation(format!("dt = {} too coarse, need <= {max_dt}", self.dt)));
        }
        Ok(())
    }

    pub fn analytic_mean_theta(&self) -> f64 {
        self.mu + (self.theta0 - self.mu) * (-self.a * self.t_end).exp()
    }

    pub fn analytic_var_theta(&self) -> f64 {
        (1.0 - (-2.0 * self.a * self.t_end).exp()) / (2.0 * self.a)
    }

    pub fn analytic_mean_ema(&self) -> f64 {
        let (a, g, t) = (self.a, self.gamma, self.t_end);
        let eg = (-g * t).exp();
        self.mu + (self.theta0 - self.mu) * (eg + g / (g - a) * ((-a * t).exp() - eg))
    }

    /// Upper bound on `var(θ̃_t)` for a deterministic start.
    pub fn var_ema_bound(&self) -> f64 {
        let (a, g, t) = (self.a, self.gamma, self.t_end);
        let eg = (-g * t).exp();
        ((1.0 - eg) - g / (g - 2.0 * a) * ((-2.0 * a * t).exp() - eg)) / (2.0 * a)
    }

    fn steps(&self) -> usize {
        (self.t_end / self.dt).round() as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OuReport {
    pub trials: usize,
    pub mean_theta: Estimate,
    pub var_theta: Estimate,
    pub mean_ema: Estimate,
    pub var_ema: Estimate,
    /// `E[θ_t - θ̃_t]`
    pub mean_gap: Estimate,
    pub analytic_mean_theta: f64,
    pub analytic_var_theta: f64,
    pub analytic_mean_ema: f64,
    pub var_ema_bound: f64,
}

/// Euler-Maruyama paths of the Ornstein-Uhlenbeck process and its average.
pub fn simulate_ou_ema(spec: &OuSpec, trials: usize, rng: &RngState) -> Result<OuReport> {
    spec.validate()?;
    if trials < 2 {
        return arg("simulate_ou_ema: trials must be >= 2");
    }
    let n = spec.steps();
    let sq = spec.dt.sqrt();
    let ends: Vec<(f64, f64)> = par_trials(rng, trials, |_, mut r| {
        let mut x = spec.theta0;
        let mut y = spec.theta0;
        for _ in 0..n {
            let nx = x - spec.a * (x - spec.mu) * spec.dt + sq * r.normal();
            y += spec.gamma * (x - y) * spec.dt;
            x = nx;
        }
        (x, y)
    });
    let xs: Vec<f64> = ends.iter().map(|p| p.0).collect();
    let ys: Vec<f64> = ends.iter().map(|p| p.1).collect();
    let gaps: Vec<f64> = ends.iter().map(|p| p.0 - p.1).collect();
    Ok(OuReport {
        trials,
        mean_theta: mean_estimate(&xs),
        var_theta: variance_estimate(&xs),
        mean_ema: mean_estimate(&ys),
        var_ema: variance_estimate(&ys),
        mean_gap: mean_estimate(&gaps),
        analytic_mean_theta: spec.analytic_mean_theta(),
        analytic_var_theta: spec.analytic_var_theta(),
        analytic_mean_ema: spec.analytic_mean_ema(),
        var_ema_bound: spec.var_ema_bound(),
    })
}

/// Diffusion coefficient schedules `η_s` for the driftless process.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DriftSchedule {
    Constant,
    /// `η(1+s)^-½`
    InverseSqrt,
    /// `η/(1+s)`
    Inverse,
    /// `η(1 - s/T)` on `[0, T]`
    LinearDecay { horizon: f64 },
}

/// `θ_t = ∫₀ᵗ η_s dB_s` with a constant-rate average `dθ̃ = γ(θ-θ̃)dt`, `θ₀ = θ̃₀ = 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DriftlessSpec {
    pub schedule: DriftSchedule,
    pub eta: f64,
    pub gamma: f64,
    pub t_end: f64,
    pub dt: f64,
}

impl DriftlessSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.eta > 0.0 && self.gamma > 0.0 && self.t_end > 0.0 && self.dt > 0.0) {
            return Err(Error::Validation("eta, gamma, t_end and dt must be > 0".into()));
        }
        if let DriftSchedule::LinearDecay { horizon } = self.schedule {
            if !(horizon >= self.t_end) {
                return Err(Error::Validation("linear decay horizon must be >= t_end".into()));
            }
        }
        let max_dt = (1.0 / self.gamma).min(1.0) / 50.0;
        if self.dt > max_dt {
            return Err(Error::Validation(format!("dt = {} too coarse, need <= {max_dt}", self.dt)));
        }
        Ok(())
    }

    pub fn eta_at(&self, s: f64) -> f64 {
        match self.schedule {
            DriftSchedule::Constant => self.eta,
            DriftSchedule::InverseSqrt => self.eta / (1.0 + s).sqrt(),
            DriftSchedule::Inverse => self.eta / (1.0 + s),
            DriftSchedule::LinearDecay { horizon } => self.eta * (1.0 - s / horizon).max(0.0),
        }
    }

    /// `H(t) = ∫₀ᵗ η_s² ds`, the variance of `θ_t`.
    pub fn integrated_variance(&self, t: f64) -> f64 {
        let e2 = self.eta * self.eta;
        match self.schedule {
            DriftSchedule::Constant => e2 * t,
            DriftSchedule::InverseSqrt => e2 * t.ln_1p(),
            DriftSchedule::Inverse => e2 * t / (1.0 + t),
            DriftSchedule::LinearDecay { horizon } => e2 * horizon / 3.0 * (1.0 - (1.0 - t / horizon).powi(3)),
        }
    }

    /// `∫₀ᵗ γe^{γ(s-t)} H(s) ds` by composite Simpson.
    pub fn quadrature_bound(&self, t: f64) -> f64 {
        let n = 4000;
        let h = t / n as f64;
        let f = |s: f64| self.gamma * (self.gamma * (s - t)).exp() * self.integrated_variance(s);
        let mut acc = f(0.0) + f(t);
        for i in 1..n {
            acc += if i % 2 == 1 { 4.0 } else { 2.0 } * f(i as f64 * h);
        }
        acc * h / 3.0
    }

    /// Closed-form upper bound on `var(θ̃_t)` for the constant, inverse-sqrt and
    /// linear-decay schedules (the latter with `T = t`).
    pub fn closed_form_bound(&self, t: f64) -> Option<f64> {
        let g = self.gamma;
        let e2 = self.eta * self.eta;
        let eg = (-g * t).exp();
        let ramp = t - (1.0 - eg) / g;
        match self.schedule {
            DriftSchedule::Constant => Some(e2 * ramp),
            DriftSchedule::InverseSqrt => Some(e2 * (1.0 - eg) * (ramp / (1.0 - eg)).ln_1p()),
            DriftSchedule::Inverse => None,
            DriftSchedule::LinearDecay { horizon } if (horizon - t).abs() <= 1e-12 * horizon => {
                Some(e2 * (t / 2.0 - (1.0 - eg * (g * t + 1.0)) / (g * g * t)))
            }
            DriftSchedule::LinearDecay { .. } => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DriftlessReport {
    pub trials: usize,
    pub var_theta: Estimate,
    pub var_ema: Estimate,
    pub analytic_var_theta: f64,
    pub quadrature_bound: f64,
    pub closed_form_bound: Option<f64>,
}

pub fn simulate_driftless(spec: &DriftlessSpec, trials: usize, rng: &RngState) -> Result<DriftlessReport> {
    spec.validate()?;
    if trials < 2 {
        return arg("simulate_driftless: trials must be >= 2");
    }
    let n = (spec.t_end / spec.dt).round() as usize;
    let sq = spec.dt.sqrt();
    let scales: Vec<f64> = (0..n).map(|k| spec.eta_at(k as f64 * spec.dt) * sq).collect();
    let gdt = spec.gamma * spec.dt;
    let ends: Vec<(f64, f64)> = par_trials(rng, trials, |_, mut r| {
        let mut x = 0.0;
        let mut y = 0.0;
        for s in &scales {
            y += gdt * (x - y);
            x += s * r.normal();
        }
        (x, y)
    });
    let xs: Vec<f64> = ends.iter().map(|p| p.0).collect();
    let ys: Vec<f64> = ends.iter().map(|p| p.1).collect();
    Ok(DriftlessReport {
        trials,
        var_theta: variance_estimate(&xs),
        var_ema: variance_estimate(&ys),
        analytic_var_theta: spec.integrated_variance(spec.t_end),
        quadrature_bound: spec.quadrature_bound(spec.t_end),
        closed_form_bound: spec.closed_form_bound(spec.t_end),
    })
}
