//! Linear-quadratic control environments, the Riccati solver, rollouts and
//! error-amplification probes.

use serde::{Deserialize, Serialize};

use crate::error::{arg, check_dims, numeric, Error, Result};
use crate::numerics::{mat_exp, op_norm, random_rotation, Matrix, RngState, Vector};

/// Anything that maps a state (and the previous action) to an action.
pub trait Policy: Sync {
    fn state_dim(&self) -> usize;
    fn action_dim(&self) -> usize;
    fn act(&self, x: &[f64], prev_u: &[f64]) -> Vec<f64>;
}

/// `u = Kx`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearPolicy {
    pub k: Matrix,
}

impl LinearPolicy {
    pub fn new(k: Matrix) -> Self {
        Self { k }
    }

    pub fn zero(du: usize, dx: usize) -> Self {
        Self { k: Matrix::zeros(du, dx) }
    }
}

impl Policy for LinearPolicy {
    fn state_dim(&self) -> usize {
        self.k.cols()
    }

    fn action_dim(&self) -> usize {
        self.k.rows()
    }

    fn act(&self, x: &[f64], _prev_u: &[f64]) -> Vec<f64> {
        let k = &self.k;
        (0..k.rows()).map(|i| k.row(i).iter().zip(x).map(|(a, b)| a * b).sum()).collect()
    }
}

/// Initial-state distribution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitSampler {
    /// `N(0, scale²I)`
    Gaussian { scale: f64 },
    /// `(cos φ, sin φ, 0, ...)` with `φ` uniform on `[lo, hi]`.
    CircleArc { lo: f64, hi: f64 },
    Fixed { x: Vec<f64> },
}

impl InitSampler {
    pub fn unit_circle() -> Self {
        Self::CircleArc { lo: 0.0, hi: std::f64::consts::TAU }
    }

    pub fn sample(&self, d: usize, rng: &mut RngState) -> Vec<f64> {
        match self {
            Self::Gaussian { scale } => (0..d).map(|_| scale * rng.normal()).collect(),
            Self::CircleArc { lo, hi } => {
                let phi = rng.uniform_range(*lo, *hi);
                let mut x = vec![0.0; d];
                x[0] = phi.cos();
                if d > 1 {
                    x[1] = phi.sin();
                }
                x
            }
            Self::Fixed { x } => x.clone(),
        }
    }
}

/// Terminate the episode on the first state with `x₁ < κ`; reward is the
/// number of steps survived.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Cliff {
    pub kappa: f64,
}

/// `x_{t+1} = Ax_t + Bu_t + w_t`, `w_t ~ N(0, σ_w²I)`, reward `-xᵀQx - uᵀRu`
/// (or survival count when a cliff is present).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearSystem {
    pub a: Matrix,
    pub b: Matrix,
    pub q: Matrix,
    pub r: Matrix,
    pub sigma_w: f64,
    pub horizon: usize,
    pub init: InitSampler,
    pub cliff: Option<Cliff>,
}

impl LinearSystem {
    pub fn state_dim(&self) -> usize {
        self.a.rows()
    }

    pub fn action_dim(&self) -> usize {
        self.b.cols()
    }

    pub fn validate(&self) -> Result<()> {
        let dx = self.a.rows();
        let du = self.b.cols();
        let shape_ok = self.a.is_square()
            && self.b.rows() == dx
            && self.q.rows() == dx
            && self.q.cols() == dx
            && self.r.rows() == du
            && self.r.cols() == du;
        if !shape_ok || dx == 0 || du == 0 {
            return Err(Error::Validation("system matrices have inconsistent shapes".into()));
        }
        if !self.q.is_psd(1e-10) {
            return Err(Error::Validation("Q must be symmetric PSD".into()));
        }
        if !self.r.is_psd(1e-10) {
            return Err(Error::Validation("R must be symmetric PSD".into()));
        }
        if !(self.sigma_w >= 0.0) {
            return Err(Error::Validation("process noise scale must be >= 0".into()));
        }
        if self.horizon == 0 {
            return Err(Error::Validation("horizon must be >= 1".into()));
        }
        if let Some(c) = self.cliff {
            if !(c.kappa < 0.0) {
                return Err(Error::Validation("cliff threshold must be < 0".into()));
            }
        }
        match &self.init {
            InitSampler::Fixed { x } if x.len() != dx => {
                Err(Error::Validation("fixed initial state has the wrong dimension".into()))
            }
            InitSampler::CircleArc { lo, hi } if !(lo <= hi) => {
                Err(Error::Validation("initial arc needs lo <= hi".into()))
            }
            _ => Ok(()),
        }
    }

    pub fn closed_loop(&self, k: &Matrix) -> Result<Matrix> {
        self.a.add(&self.b.matmul(k)?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RolloutResult {
    pub states: Vec<Vector>,
    pub actions: Vec<Vector>,
    pub total_reward: f64,
    pub terminated_at: Option<usize>,
    pub diverged: bool,
}

fn quad(m: &Matrix, x: &[f64]) -> f64 {
    (0..m.rows()).map(|i| x[i] * m.row(i).iter().zip(x).map(|(a, b)| a * b).sum::<f64>()).sum()
}

pub fn rollout(system: &LinearSystem, policy: &dyn Policy, x0: &[f64], rng: &mut RngState) -> Result<RolloutResult> {
    let dx = system.state_dim();
    let du = system.action_dim();
    check_dims("rollout state", dx, x0.len())?;
    check_dims("rollout policy input", dx, policy.state_dim())?;
    check_dims("rollout policy output", du, policy.action_dim())?;
    let mut x = x0.to_vec();
    let mut prev_u = vec![0.0; du];
    let mut states = vec![Vector(x.clone())];
    let mut actions = Vec::new();
    let mut reward = 0.0;
    let mut terminated_at = None;
    let mut diverged = false;
    for t in 0..system.horizon {
        if let Some(c) = system.cliff {
            if x[0] < c.kappa {
                terminated_at = Some(t);
                break;
            }
        }
        let u = policy.act(&x, &prev_u);
        reward += match system.cliff {
            Some(_) => 1.0,
            None => -(quad(&system.q, &x) + quad(&system.r, &u)),
        };
        let mut next = system.a.mul_vec(&x)?;
        for i in 0..dx {
            next[i] += system.b.row(i).iter().zip(&u).map(|(a, b)| a * b).sum::<f64>();
            if system.sigma_w > 0.0 {
                next[i] += system.sigma_w * rng.normal();
            }
        }
        actions.push(Vector(u.clone()));
        prev_u = u;
        if !next.iter().all(|v| v.is_finite()) || !reward.is_finite() {
            diverged = true;
            break;
        }
        x = next;
        states.push(Vector(x.clone()));
    }
    if !reward.is_finite() {
        reward = -f64::MAX;
    }
    Ok(RolloutResult { states, actions, total_reward: reward, terminated_at, diverged })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DareSolution {
    pub s: Matrix,
    pub k: Matrix,
    pub iterations: usize,
    /// Max-norm residual of the Riccati equation at the returned `S`.
    pub residual: f64,
}

fn riccati_map(a: &Matrix, b: &Matrix, q: &Matrix, r: &Matrix, s: &Matrix) -> Result<(Matrix, Matrix)> {
    let at = a.transpose();
    let bt = b.transpose();
    let sa = s.matmul(a)?;
    let sb = s.matmul(b)?;
    let gain_inv = r.add(&bt.matmul(&sb)?)?.inverse()?;
    let bt_sa = bt.matmul(&sa)?;
    let k = gain_inv.matmul(&bt_sa)?.scale(-1.0);
    // Q + AᵀSA + AᵀSB K  with K = -(R+BᵀSB)⁻¹BᵀSA
    let next = q.add(&at.matmul(&sa)?)?.add(&at.matmul(&sb)?.matmul(&k)?)?;
    let sym = next.add(&next.transpose())?.scale(0.5);
    Ok((sym, k))
}

/// Fixed-point iteration of the discrete algebraic Riccati equation from
/// `S₀ = Q`. Stops when `‖ΔS‖_max < tol·max(1, ‖S‖_max)`.
pub fn dare_solve(a: &Matrix, b: &Matrix, q: &Matrix, r: &Matrix, tol: f64, max_iter: usize) -> Result<DareSolution> {
    if !a.is_square() || b.rows() != a.rows() || q.rows() != a.rows() || r.rows() != b.cols() {
        return arg("dare_solve: inconsistent shapes");
    }
    if !q.is_psd(1e-10) || !r.is_psd(1e-10) {
        return arg("dare_solve: Q and R must be symmetric PSD");
    }
    let mut s = q.clone();
    for it in 1..=max_iter {
        let (next, _) = riccati_map(a, b, q, r, &s).map_err(|e| match e {
            Error::Numeric { detail, .. } => Error::Numeric { op: "dare_solve", detail },
            other => other,
        })?;
        if !next.is_finite() {
            return numeric("dare_solve", format!("iterate became non-finite at step {it}"));
        }
        let delta = next.sub(&s)?.max_abs();
        s = next;
        if delta < tol * s.max_abs().max(1.0) {
            let (again, k) = riccati_map(a, b, q, r, &s)?;
            let residual = again.sub(&s)?.max_abs();
            return Ok(DareSolution { s, k, iterations: it, residual });
        }
    }
    let (again, _) = riccati_map(a, b, q, r, &s)?;
    numeric(
        "dare_solve",
        format!("no convergence in {max_iter} iterations, residual {:e}", again.sub(&s)?.max_abs()),
    )
}

pub const DARE_TOL: f64 = 1e-12;
pub const DARE_MAX_ITER: usize = 1_000_000;

/// `A = (1+α/H)I`, `B = -(α/H)O`, `Q = R = I` for a given orthogonal `O`.
pub fn marginally_stable_with(o: &Matrix, alpha: f64, horizon: usize) -> Result<LinearSystem> {
    if !(alpha > 0.0) || horizon == 0 {
        return Err(Error::Validation("marginal system needs alpha > 0 and H >= 1".into()));
    }
    if !o.is_square() {
        return arg("marginal system: O must be square");
    }
    let d = o.rows();
    let eps = alpha / horizon as f64;
    Ok(LinearSystem {
        a: Matrix::identity(d).scale(1.0 + eps),
        b: o.scale(-eps),
        q: Matrix::identity(d),
        r: Matrix::identity(d),
        sigma_w: 1e-3,
        horizon,
        init: InitSampler::Gaussian { scale: 1.0 },
        cliff: None,
    })
}

/// Marginally stable system with a uniformly random rotation `O`.
pub fn make_marginally_stable(rng: &mut RngState, d: usize, alpha: f64, horizon: usize) -> Result<LinearSystem> {
    let o = random_rotation(rng, d)?;
    marginally_stable_with(&o, alpha, horizon)
}

/// `[[cos φ, sin φ], [sin φ, -cos φ]]`
pub fn reflection(phi: f64) -> Matrix {
    let (s, c) = phi.sin_cos();
    Matrix::from_rows(&[vec![c, s], vec![s, -c]]).expect("finite entries")
}

/// The two-dimensional reference instance with `A = 1.0025·I`,
/// `B = -0.005·O` for the reflection `O` whose Riccati gain is
/// `[[1.3867, 0.8250], [0.8250, -1.3867]]`.
pub fn marginal_reference_system(horizon: usize) -> LinearSystem {
    let o = reflection(0.8250f64.atan2(1.3867));
    LinearSystem {
        a: Matrix::identity(2).scale(1.0025),
        b: o.scale(-0.005),
        q: Matrix::identity(2),
        r: Matrix::identity(2),
        sigma_w: 1e-3,
        horizon,
        init: InitSampler::Gaussian { scale: 1.0 },
        cliff: None,
    }
}

/// Harmonic oscillator `A = exp(η[[0,1],[-1,0]])`, force on the velocity,
/// cliff at `x₁ < κ`.
pub fn make_spring_cliff(eta_time: f64, kappa: f64, horizon: usize) -> Result<LinearSystem> {
    if !(eta_time > 0.0) {
        return Err(Error::Validation("spring time step must be > 0".into()));
    }
    if !(kappa < 0.0) {
        return Err(Error::Validation("cliff threshold must be < 0".into()));
    }
    let gen = Matrix::from_rows(&[vec![0.0, 1.0], vec![-1.0, 0.0]])?.scale(eta_time);
    let sys = LinearSystem {
        a: mat_exp(&gen, 1e-14)?,
        b: Matrix::column(&[0.0, 1.0]),
        q: Matrix::identity(2),
        r: Matrix::identity(1),
        sigma_w: 0.0,
        horizon,
        init: InitSampler::unit_circle(),
        cliff: Some(Cliff { kappa }),
    };
    sys.validate()?;
    Ok(sys)
}

/// Arc of starting angles on the unit circle from which the Riccati expert of
/// the default spring (η = 0.1, κ = -0.05) never crosses the cliff.
pub const SPRING_SAFE_ARC: (f64, f64) = (-1.4758, 1.6208);

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProbeRow {
    pub eps_prime: f64,
    /// `cε' - ε`, the closed-loop growth rate minus one.
    pub delta: f64,
    /// `J(K*) - J(K* + ε'I)`
    pub gap: f64,
    /// `J(K*) - J(K* - (ε'/2)I)`
    pub good_gap: f64,
}

/// Sum over `h = 1..=H` of `ρ^{2(h-1)}`.
pub fn geometric_energy(rho: f64, horizon: usize) -> f64 {
    let r2 = rho * rho;
    if (r2 - 1.0).abs() < 1e-12 {
        horizon as f64
    } else {
        (r2.powi(horizon as i32) - 1.0) / (r2 - 1.0)
    }
}

fn probe_cost(d: usize, c: f64, k_scale: f64, horizon: usize) -> Result<f64> {
    // A = I, B = cI, K = k_scale·I, Q = I, R = 0, summed over basis starts
    let mut total = 0.0;
    for i in 0..d {
        let mut x = vec![0.0; d];
        x[i] = 1.0;
        for h in 0..horizon {
            total += x.iter().map(|v| v * v).sum::<f64>();
            for v in x.iter_mut() {
                *v += c * k_scale * *v;
            }
            if !x.iter().all(|v| v.is_finite()) || !total.is_finite() {
                return numeric("error_amplification_probe", format!("state overflow at step {}", h + 1));
            }
        }
    }
    Ok(-total)
}

/// Rolls out `K* = -(ε/c)I` and `K* + ε'I` on `A = I`, `B = cI` for each ε'.
pub fn error_amplification_probe(d: usize, eps: f64, c: f64, eps_primes: &[f64], horizon: usize) -> Result<Vec<ProbeRow>> {
    if d == 0 || !(eps > 0.0) || !(c > 0.0) || horizon == 0 {
        return arg("error_amplification_probe: need d, H >= 1 and eps, c > 0");
    }
    let k_star = -eps / c;
    let j_star = probe_cost(d, c, k_star, horizon)?;
    eps_primes
        .iter()
        .map(|&ep| {
            Ok(ProbeRow {
                eps_prime: ep,
                delta: c * ep - eps,
                gap: j_star - probe_cost(d, c, k_star + ep, horizon)?,
                good_gap: j_star - probe_cost(d, c, k_star - ep / 2.0, horizon)?,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityReport {
    pub gaps: Vec<f64>,
    pub max_gap: f64,
    pub bound: f64,
    pub all_within: bool,
}

/// Checks that nearby gains in a stable closed loop lose little reward.
/// The perturbation ball has operator-norm radius `ε/(H‖B‖)` around `K*`.
pub fn stability_margin_check(
    system: &LinearSystem,
    k_star: &Matrix,
    k_hat: &Matrix,
    eps: f64,
    x0: &[f64],
    grid: usize,
    rng: &mut RngState,
) -> Result<StabilityReport> {
    let tol = 1e-10;
    let cl = op_norm(&system.closed_loop(k_star)?, tol)?;
    if cl > 1.0 + 1e-8 {
        return Err(Error::Validation(format!("‖A+BK*‖_op = {cl} exceeds 1")));
    }
    let h = system.horizon as f64;
    let b_norm = op_norm(&system.b, tol)?;
    let radius = eps / (h * b_norm);
    let dist = op_norm(&k_star.sub(k_hat)?, tol)?;
    if dist > radius * (1.0 + 1e-9) {
        return Err(Error::Validation(format!("‖K*-K̂‖_op = {dist:e} exceeds ε/(H‖B‖_op) = {radius:e}")));
    }
    let quad_form = system.q.add(&k_hat.transpose().matmul(&system.r)?.matmul(k_hat)?)?;
    let c = op_norm(&quad_form, tol)?;
    let r_norm = op_norm(&system.r, tol)?;
    let x2: f64 = x0.iter().map(|v| v * v).sum();
    let bound = 100.0 * (c * h * h + h * r_norm) * x2 * eps;
    let mut noiseless = system.clone();
    noiseless.sigma_w = 0.0;
    let mut scratch = RngState::new(0);
    let j_star = rollout(&noiseless, &LinearPolicy::new(k_star.clone()), x0, &mut scratch)?.total_reward;
    let mut gains = vec![k_hat.clone()];
    for _ in 1..grid.max(1) {
        let dir = Matrix::new(
            k_star.rows(),
            k_star.cols(),
            (0..k_star.rows() * k_star.cols()).map(|_| rng.normal()).collect(),
        )?;
        let n = op_norm(&dir, tol)?.max(1e-300);
        let scale = radius * rng.uniform();
        gains.push(k_star.add(&dir.scale(scale / n))?);
    }
    let gaps = gains
        .iter()
        .map(|k| Ok(j_star - rollout(&noiseless, &LinearPolicy::new(k.clone()), x0, &mut scratch)?.total_reward))
        .collect::<Result<Vec<f64>>>()?;
    let max_gap = gaps.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    Ok(StabilityReport { all_within: max_gap <= bound, gaps, max_gap, bound })
}
