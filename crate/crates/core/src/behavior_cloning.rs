//! Offline imitation: expert data collection, linear and MLP imitators with
//! exact gradients, and the minibatch training loop with checkpoint evaluation.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{arg, check_dims, Error, Result};
use crate::linear_control::{rollout, LinearPolicy, LinearSystem, Policy};
use crate::numerics::{Matrix, ParamVector, RngState};
use crate::optim::{GradAccumulator, LrSchedule, OptimizerSpec};
use crate::stabilizers::{EmaConfig, EmaFilter};

/// One recorded expert trajectory; `actions[h]` was recorded at `states[h]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub states: Vec<Vec<f64>>,
    pub actions: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub trajectories: Vec<Trajectory>,
    pub train: Vec<usize>,
    pub val: Vec<usize>,
}

/// A supervised pair with the previously recorded action (zero at `h = 0`).
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub x: Vec<f64>,
    pub prev_u: Vec<f64>,
    pub u: Vec<f64>,
}

impl Dataset {
    pub fn state_dim(&self) -> usize {
        self.trajectories.iter().find_map(|t| t.states.first().map(|s| s.len())).unwrap_or(0)
    }

    pub fn action_dim(&self) -> usize {
        self.trajectories.iter().find_map(|t| t.actions.first().map(|s| s.len())).unwrap_or(0)
    }

    pub fn samples(&self, idx: &[usize]) -> Vec<Sample> {
        let du = self.action_dim();
        let mut out = Vec::new();
        for &i in idx {
            let tr = &self.trajectories[i];
            for (h, u) in tr.actions.iter().enumerate() {
                let prev_u = if h == 0 { vec![0.0; du] } else { tr.actions[h - 1].clone() };
                out.push(Sample { x: tr.states[h].clone(), prev_u, u: u.clone() });
            }
        }
        out
    }

    pub fn train_samples(&self) -> Vec<Sample> {
        self.samples(&self.train)
    }

    pub fn val_samples(&self) -> Vec<Sample> {
        self.samples(&self.val)
    }

    pub fn validate(&self) -> Result<()> {
        let dx = self.state_dim();
        let du = self.action_dim();
        for (i, t) in self.trajectories.iter().enumerate() {
            if t.actions.len() > t.states.len()
                || t.states.iter().any(|s| s.len() != dx)
                || t.actions.iter().any(|a| a.len() != du)
            {
                return Err(Error::Data(format!("trajectory {i} has inconsistent dimensions")));
            }
        }
        let mut seen = vec![0u8; self.trajectories.len()];
        for &i in self.train.iter().chain(&self.val) {
            match seen.get_mut(i) {
                Some(s) => *s += 1,
                None => return Err(Error::Data(format!("split index {i} out of range"))),
            }
        }
        if seen.iter().any(|&s| s != 1) {
            return Err(Error::Data("train/val split must partition the trajectories".into()));
        }
        Ok(())
    }
}

/// Expert data options. `label_noise` perturbs only the recorded action; the
/// executed action stays `K*x`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExpertDataConfig {
    pub trajectories: usize,
    #[serde(default = "default_val_fraction")]
    pub val_fraction: f64,
    #[serde(default)]
    pub label_noise: f64,
}

fn default_val_fraction() -> f64 {
    0.1
}

impl ExpertDataConfig {
    pub fn new(trajectories: usize) -> Self {
        Self { trajectories, val_fraction: 0.1, label_noise: 0.0 }
    }
}

/// Noise-free expert data with a 90/10 split.
pub fn collect_expert_data(system: &LinearSystem, expert: &LinearPolicy, n: usize, rng: &RngState) -> Result<Dataset> {
    collect_expert_data_with(system, expert, ExpertDataConfig::new(n), rng)
}

pub fn collect_expert_data_with(
    system: &LinearSystem,
    expert: &LinearPolicy,
    config: ExpertDataConfig,
    rng: &RngState,
) -> Result<Dataset> {
    let n = config.trajectories;
    if n < 2 {
        return arg("collect_expert_data: need at least 2 trajectories");
    }
    if !(0.0..1.0).contains(&config.val_fraction) || !(config.label_noise >= 0.0) {
        return arg("collect_expert_data: bad split fraction or label noise");
    }
    system.validate()?;
    let dx = system.state_dim();
    let data_rng = rng.fork(0);
    let trajectories = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut r = data_rng.fork(i as u64);
            let x0 = system.init.sample(dx, &mut r);
            let ro = rollout(system, expert, &x0, &mut r)?;
            if ro.diverged {
                return Err(Error::Data(format!("expert diverged on trajectory {i}")));
            }
            let mut noise = r.fork(1);
            let actions = ro
                .actions
                .iter()
                .map(|u| u.iter().map(|v| v + config.label_noise * noise.normal()).collect())
                .collect();
            let states = ro.states.iter().take(ro.actions.len()).map(|s| s.0.clone()).collect();
            Ok(Trajectory { states, actions })
        })
        .collect::<Result<Vec<_>>>()?;
    let n_val = ((n as f64 * config.val_fraction).round() as usize).clamp(1, n - 1);
    let perm = rng.fork(1).permutation(n);
    let mut val: Vec<usize> = perm[..n_val].to_vec();
    let mut train: Vec<usize> = perm[n_val..].to_vec();
    val.sort_unstable();
    train.sort_unstable();
    Ok(Dataset { trajectories, train, val })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Relu,
    Tanh,
}

impl Activation {
    fn apply(self, z: f64) -> f64 {
        match self {
            Self::Relu => z.max(0.0),
            Self::Tanh => z.tanh(),
        }
    }

    /// Derivative expressed through the pre-activation `z`.
    fn deriv(self, z: f64) -> f64 {
        match self {
            Self::Relu => f64::from(u8::from(z > 0.0)),
            Self::Tanh => 1.0 - z.tanh().powi(2),
        }
    }
}

/// Fully connected network. Parameters are flattened layer by layer, each
/// layer as its weight matrix (row-major, `out × in`) followed by its bias.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpPolicy {
    pub dims: Vec<usize>,
    pub activation: Activation,
    pub prev_action_augmented: bool,
    pub params: ParamVector,
}

impl MlpPolicy {
    /// `dims` = input, hidden..., output, where input already includes the
    /// action width when augmented.
    pub fn zeros(dims: Vec<usize>, activation: Activation, prev_action_augmented: bool) -> Result<Self> {
        if dims.len() < 2 || dims.contains(&0) {
            return arg("mlp: need at least input and output widths, all >= 1");
        }
        if prev_action_augmented && dims[0] <= *dims.last().expect("len >= 2") {
            return arg("mlp: augmented input must be wider than the action");
        }
        let n = Self::param_count(&dims);
        Ok(Self { dims, activation, prev_action_augmented, params: ParamVector::zeros(n) })
    }

    /// Uniform `±1/sqrt(fan_in)` for weights and biases.
    pub fn init(dims: Vec<usize>, activation: Activation, prev_action_augmented: bool, rng: &mut RngState) -> Result<Self> {
        let mut p = Self::zeros(dims, activation, prev_action_augmented)?;
        let mut off = 0;
        for w in p.dims.clone().windows(2) {
            let bound = 1.0 / (w[0] as f64).sqrt();
            for v in &mut p.params[off..off + (w[0] + 1) * w[1]] {
                *v = rng.uniform_range(-bound, bound);
            }
            off += (w[0] + 1) * w[1];
        }
        Ok(p)
    }

    pub fn param_count(dims: &[usize]) -> usize {
        dims.windows(2).map(|w| (w[0] + 1) * w[1]).sum()
    }

    fn input(&self, x: &[f64], prev_u: &[f64]) -> Vec<f64> {
        let mut z = x.to_vec();
        if self.prev_action_augmented {
            z.extend_from_slice(prev_u);
        }
        z
    }

    fn check_input(&self, x: &[f64], prev_u: Option<&[f64]>) -> Result<()> {
        let du = *self.dims.last().expect("len >= 2");
        match (self.prev_action_augmented, prev_u) {
            (true, Some(p)) => {
                check_dims("mlp prev action", du, p.len())?;
                check_dims("mlp input", self.dims[0], x.len() + du)
            }
            (true, None) => arg("mlp: augmented policy needs the previous action"),
            (false, Some(_)) => arg("mlp: previous action given to an unaugmented policy"),
            (false, None) => check_dims("mlp input", self.dims[0], x.len()),
        }
    }

    /// Pre-activations of every layer.
    fn forward_trace(&self, input: &[f64]) -> Vec<Vec<f64>> {
        let mut pre = Vec::with_capacity(self.dims.len() - 1);
        let mut h = input.to_vec();
        let mut off = 0;
        let last = self.dims.len() - 2;
        for (l, w) in self.dims.windows(2).enumerate() {
            let (fan_in, fan_out) = (w[0], w[1]);
            let wts = &self.params[off..off + fan_in * fan_out];
            let bias = &self.params[off + fan_in * fan_out..off + (fan_in + 1) * fan_out];
            let z: Vec<f64> = (0..fan_out)
                .map(|o| bias[o] + wts[o * fan_in..(o + 1) * fan_in].iter().zip(&h).map(|(a, b)| a * b).sum::<f64>())
                .collect();
            h = if l == last { z.clone() } else { z.iter().map(|&v| self.activation.apply(v)).collect() };
            pre.push(z);
            off += (fan_in + 1) * fan_out;
        }
        pre
    }

    pub fn forward(&self, x: &[f64], prev_u: Option<&[f64]>) -> Result<Vec<f64>> {
        self.check_input(x, prev_u)?;
        let du = *self.dims.last().expect("len >= 2");
        let zeros = vec![0.0; du];
        let input = self.input(x, prev_u.unwrap_or(&zeros));
        Ok(self.forward_trace(&input).pop().expect("at least one layer"))
    }

    /// Batch-mean of `½‖π(x) - u‖²` and its gradient.
    pub fn loss_and_grad(&self, batch: &[Sample]) -> Result<(f64, ParamVector)> {
        if batch.is_empty() {
            return arg("mlp_grad: empty batch");
        }
        let mut grad = vec![0.0; self.params.len()];
        let mut loss = 0.0;
        let n_layers = self.dims.len() - 1;
        for s in batch {
            let prev = if self.prev_action_augmented { Some(s.prev_u.as_slice()) } else { None };
            self.check_input(&s.x, prev)?;
            check_dims("mlp target", *self.dims.last().expect("len >= 2"), s.u.len())?;
            let input = self.input(&s.x, &s.prev_u);
            let pre = self.forward_trace(&input);
            let out = &pre[n_layers - 1];
            let mut delta: Vec<f64> = out.iter().zip(&s.u).map(|(a, b)| a - b).collect();
            loss += 0.5 * delta.iter().map(|d| d * d).sum::<f64>();
            let mut off = self.params.len();
            for l in (0..n_layers).rev() {
                let (fan_in, fan_out) = (self.dims[l], self.dims[l + 1]);
                off -= (fan_in + 1) * fan_out;
                let act_in: Vec<f64> = if l == 0 {
                    input.clone()
                } else {
                    pre[l - 1].iter().map(|&v| self.activation.apply(v)).collect()
                };
                for o in 0..fan_out {
                    let row = off + o * fan_in;
                    for i in 0..fan_in {
                        grad[row + i] += delta[o] * act_in[i];
                    }
                    grad[off + fan_in * fan_out + o] += delta[o];
                }
                if l > 0 {
                    let wts = &self.params[off..off + fan_in * fan_out];
                    delta = (0..fan_in)
                        .map(|i| {
                            let back: f64 = (0..fan_out).map(|o| wts[o * fan_in + i] * delta[o]).sum();
                            back * self.activation.deriv(pre[l - 1][i])
                        })
                        .collect();
                }
            }
        }
        let n = batch.len() as f64;
        Ok((loss / n, ParamVector::from(grad.into_iter().map(|g| g / n).collect::<Vec<f64>>())))
    }
}

/// Gradient of the batch-mean half squared error in the documented layout.
pub fn mlp_grad(policy: &MlpPolicy, batch: &[Sample]) -> Result<ParamVector> {
    policy.loss_and_grad(batch).map(|(_, g)| g)
}

pub fn mlp_forward(policy: &MlpPolicy, x: &[f64], prev_u: Option<&[f64]>) -> Result<Vec<f64>> {
    policy.forward(x, prev_u)
}

impl Policy for MlpPolicy {
    fn state_dim(&self) -> usize {
        let du = *self.dims.last().expect("len >= 2");
        if self.prev_action_augmented {
            self.dims[0] - du
        } else {
            self.dims[0]
        }
    }

    fn action_dim(&self) -> usize {
        *self.dims.last().expect("len >= 2")
    }

    fn act(&self, x: &[f64], prev_u: &[f64]) -> Vec<f64> {
        self.forward_trace(&self.input(x, prev_u)).pop().expect("at least one layer")
    }
}

/// Trainable policy: a gain matrix (parameters = `K` row-major) or an MLP.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Imitator {
    Linear(LinearPolicy),
    Mlp(MlpPolicy),
}

impl Imitator {
    pub fn params(&self) -> ParamVector {
        match self {
            Self::Linear(p) => ParamVector::from(p.k.data().to_vec()),
            Self::Mlp(p) => p.params.clone(),
        }
    }

    pub fn with_params(&self, params: &ParamVector) -> Result<Self> {
        Ok(match self {
            Self::Linear(p) => Self::Linear(LinearPolicy::new(Matrix::new(p.k.rows(), p.k.cols(), params.0.clone())?)),
            Self::Mlp(p) => {
                check_dims("imitator params", p.params.dim(), params.dim())?;
                let mut q = p.clone();
                q.params = params.clone();
                Self::Mlp(q)
            }
        })
    }

    pub fn policy(&self) -> &dyn Policy {
        match self {
            Self::Linear(p) => p,
            Self::Mlp(p) => p,
        }
    }

    pub fn loss_and_grad(&self, batch: &[Sample]) -> Result<(f64, ParamVector)> {
        match self {
            Self::Mlp(p) => p.loss_and_grad(batch),
            Self::Linear(p) => {
                if batch.is_empty() {
                    return arg("linear grad: empty batch");
                }
                let (du, dx) = (p.k.rows(), p.k.cols());
                let mut g = vec![0.0; du * dx];
                let mut loss = 0.0;
                for s in batch {
                    check_dims("linear grad state", dx, s.x.len())?;
                    check_dims("linear grad target", du, s.u.len())?;
                    let out = p.act(&s.x, &s.prev_u);
                    for i in 0..du {
                        let r = out[i] - s.u[i];
                        loss += 0.5 * r * r;
                        for j in 0..dx {
                            g[i * dx + j] += r * s.x[j];
                        }
                    }
                }
                let n = batch.len() as f64;
                Ok((loss / n, ParamVector::from(g.into_iter().map(|v| v / n).collect::<Vec<f64>>())))
            }
        }
    }

    /// Mean half squared error over `samples` (0 for an empty set).
    pub fn loss(&self, samples: &[Sample]) -> f64 {
        if samples.is_empty() {
            return 0.0;
        }
        let pol = self.policy();
        let total: f64 = samples
            .par_chunks(4096)
            .map(|c| {
                c.iter()
                    .map(|s| {
                        let out = pol.act(&s.x, &s.prev_u);
                        0.5 * out.iter().zip(&s.u).map(|(a, b)| (a - b).powi(2)).sum::<f64>()
                    })
                    .sum::<f64>()
            })
            .collect::<Vec<f64>>()
            .iter()
            .sum();
        total / samples.len() as f64
    }
}

/// Per-seed rollout rewards of one parameter vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalResult {
    pub rewards: Vec<f64>,
    pub diverged: Vec<bool>,
    /// Mean over non-diverged seeds (NaN if all diverged).
    pub mean: f64,
}

/// Seed `k` starts from an initial state and noise stream that depend only on
/// `(base, k)`, so every checkpoint of a run sees the same starts.
pub fn eval_checkpoint(system: &LinearSystem, policy: &dyn Policy, seeds: usize, base: &RngState) -> Result<EvalResult> {
    if seeds == 0 {
        return arg("eval_checkpoint: seeds must be >= 1");
    }
    let dx = system.state_dim();
    let runs = (0..seeds)
        .into_par_iter()
        .map(|k| {
            let mut r = base.fork(k as u64);
            let x0 = system.init.sample(dx, &mut r);
            rollout(system, policy, &x0, &mut r)
        })
        .collect::<Result<Vec<_>>>()?;
    let rewards: Vec<f64> = runs.iter().map(|r| r.total_reward).collect();
    let diverged: Vec<bool> = runs.iter().map(|r| r.diverged).collect();
    let kept: Vec<f64> = rewards.iter().zip(&diverged).filter(|(_, d)| !**d).map(|(r, _)| *r).collect();
    let mean = if kept.is_empty() { f64::NAN } else { kept.iter().sum::<f64>() / kept.len() as f64 };
    Ok(EvalResult { rewards, diverged, mean })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub optimizer: OptimizerSpec,
    pub schedule: LrSchedule,
    pub ema: EmaConfig,
    pub eval_every: u64,
    pub eval_seeds: usize,
    /// Gradients of this many minibatches are averaged per optimizer step.
    #[serde(default = "one")]
    pub grad_accum: usize,
    /// Run rollouts at checkpoints (otherwise only losses are recorded).
    #[serde(default = "yes")]
    pub evaluate: bool,
    /// Keep parameter snapshots in the checkpoint records.
    #[serde(default)]
    pub retain_params: bool,
}

fn one() -> usize {
    1
}
fn yes() -> bool {
    true
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 || self.eval_every == 0 || self.grad_accum == 0 {
            return Err(Error::Validation("batch size, eval_every and grad_accum must be >= 1".into()));
        }
        if self.evaluate && self.eval_seeds == 0 {
            return Err(Error::Validation("eval_seeds must be >= 1".into()));
        }
        self.schedule.validate()?;
        self.ema.validate()?;
        self.optimizer.init(0).map(|_| ())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointRecord {
    pub step: u64,
    pub train_loss: f64,
    pub val_loss: f64,
    pub ema_val_loss: f64,
    pub raw_eval: Option<EvalResult>,
    pub ema_eval: Option<EvalResult>,
    pub raw_params: Option<ParamVector>,
    pub ema_params: Option<ParamVector>,
}

/// Optimizer steps per epoch for `n` training pairs.
pub fn steps_per_epoch(n: usize, config: &TrainConfig) -> u64 {
    n.div_ceil(config.batch_size).div_ceil(config.grad_accum) as u64
}

/// Minibatch training over shuffled pairs with a per-step EMA shadow.
/// Checkpoints are taken at step 0, every `eval_every` steps, and at the end.
pub fn train_bc(
    dataset: &Dataset,
    init: &Imitator,
    config: &TrainConfig,
    system: &LinearSystem,
    rng: &RngState,
) -> Result<Vec<CheckpointRecord>> {
    config.validate()?;
    dataset.validate()?;
    let pol = init.policy();
    if pol.state_dim() != dataset.state_dim() || pol.action_dim() != dataset.action_dim() {
        return arg("train_bc: policy dimensions do not match the dataset");
    }
    let train = dataset.train_samples();
    let val = dataset.val_samples();
    if train.is_empty() {
        return Err(Error::Data("empty training set".into()));
    }
    let per_epoch = steps_per_epoch(train.len(), config);
    let total = per_epoch * config.epochs as u64;
    let eval_base = rng.fork(1_000_000);
    let mut params = init.params();
    let mut opt = config.optimizer.init(params.dim())?;
    let mut ema = EmaFilter::new(config.ema)?;
    ema.update(0, &params)?;
    let mut records = Vec::new();
    let checkpoint = |step: u64, params: &ParamVector, shadow: &ParamVector| -> Result<CheckpointRecord> {
        let raw = init.with_params(params)?;
        let avg = init.with_params(shadow)?;
        let (raw_eval, ema_eval) = if config.evaluate {
            (
                Some(eval_checkpoint(system, raw.policy(), config.eval_seeds, &eval_base)?),
                Some(eval_checkpoint(system, avg.policy(), config.eval_seeds, &eval_base)?),
            )
        } else {
            (None, None)
        };
        Ok(CheckpointRecord {
            step,
            train_loss: raw.loss(&train),
            val_loss: raw.loss(&val),
            ema_val_loss: avg.loss(&val),
            raw_eval,
            ema_eval,
            raw_params: config.retain_params.then(|| params.clone()),
            ema_params: config.retain_params.then(|| shadow.clone()),
        })
    };
    records.push(checkpoint(0, &params, ema.shadow().expect("seeded"))?);
    let mut step = 0u64;
    let mut acc = GradAccumulator::new(params.dim(), config.grad_accum)?;
    for epoch in 0..config.epochs {
        let perm = rng.fork(epoch as u64).permutation(train.len());
        let chunks: Vec<&[usize]> = perm.chunks(config.batch_size).collect();
        for (ci, chunk) in chunks.iter().enumerate() {
            let batch: Vec<Sample> = chunk.iter().map(|&i| train[i].clone()).collect();
            let model = init.with_params(&params)?;
            let (loss, grad) = model.loss_and_grad(&batch)?;
            if !loss.is_finite() || !grad.is_finite() {
                let last = records.last().map_or(0, |r| r.step);
                return Err(Error::Numeric {
                    op: "train_bc",
                    detail: format!("non-finite loss at step {}; last finite checkpoint at step {last}", step + 1),
                });
            }
            acc.accumulate(&grad)?;
            if !acc.is_ready() && ci + 1 < chunks.len() {
                continue;
            }
            let g = acc.flush()?;
            let lr = config.schedule.lr_at(step, total)?;
            params = opt.step(&params, &g, lr)?;
            step += 1;
            let shadow = ema.update(step, &params)?.clone();
            if step % config.eval_every == 0 || step == total {
                records.push(checkpoint(step, &params, &shadow)?);
            }
        }
    }
    Ok(records)
}
