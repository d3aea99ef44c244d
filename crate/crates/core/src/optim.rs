//! Learning-rate schedules, gradient accumulation, SGD (with momentum) and AdamW.

use serde::{Deserialize, Serialize};

use crate::error::{arg, check_dims, Error, Result};
use crate::numerics::ParamVector;

/// Learning rate as a function of the global step `t` out of `T` total steps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum LrSchedule {
    Constant { lr: f64 },
    /// `lr / (1 + t)`
    Inverse { lr: f64 },
    /// `lr / sqrt(1 + t)`
    InverseSqrt { lr: f64 },
    /// `lr * (1 - t/T)^power`
    PowerDecay { lr: f64, power: f64 },
    /// Linear ramp from 0 over the first `warmup` steps, multiplying `base`.
    Warmup { base: Box<LrSchedule>, warmup: u64 },
}

impl LrSchedule {
    pub fn validate(&self) -> Result<()> {
        let ok = |lr: f64| {
            if lr >= 0.0 && lr.is_finite() {
                Ok(())
            } else {
                arg(format!("learning rate must be finite and >= 0, got {lr}"))
            }
        };
        match self {
            Self::Constant { lr } | Self::Inverse { lr } | Self::InverseSqrt { lr } => ok(*lr),
            Self::PowerDecay { lr, power } => {
                ok(*lr)?;
                if *power < 0.0 {
                    return arg("power_decay: power must be >= 0");
                }
                Ok(())
            }
            Self::Warmup { base, .. } => base.validate(),
        }
    }

    pub fn lr_at(&self, t: u64, total: u64) -> Result<f64> {
        if total == 0 {
            return arg("lr_at: T must be >= 1");
        }
        if t > total {
            return arg(format!("lr_at: step {t} beyond horizon {total}"));
        }
        let tf = t as f64;
        Ok(match self {
            Self::Constant { lr } => *lr,
            Self::Inverse { lr } => lr / (1.0 + tf),
            Self::InverseSqrt { lr } => lr / (1.0 + tf).sqrt(),
            Self::PowerDecay { lr, power } => {
                if *power == 0.0 {
                    *lr
                } else {
                    lr * (1.0 - tf / total as f64).max(0.0).powf(*power)
                }
            }
            Self::Warmup { base, warmup } => {
                let b = base.lr_at(t, total)?;
                if t < *warmup {
                    b * tf / *warmup as f64
                } else {
                    b
                }
            }
        })
    }
}

/// Optimizer hyperparameters as they appear in configs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum OptimizerSpec {
    Sgd {
        #[serde(default)]
        momentum: f64,
    },
    Adamw {
        #[serde(default = "default_beta1")]
        beta1: f64,
        #[serde(default = "default_beta2")]
        beta2: f64,
        #[serde(default = "default_eps")]
        eps: f64,
        #[serde(default)]
        weight_decay: f64,
    },
}

fn default_beta1() -> f64 {
    0.9
}
fn default_beta2() -> f64 {
    0.999
}
fn default_eps() -> f64 {
    1e-8
}

impl OptimizerSpec {
    pub fn adamw_default() -> Self {
        Self::Adamw { beta1: 0.9, beta2: 0.999, eps: 1e-8, weight_decay: 0.0 }
    }

    pub fn init(&self, dim: usize) -> Result<OptimizerState> {
        match *self {
            Self::Sgd { momentum } => OptimizerState::sgd(dim, momentum),
            Self::Adamw { beta1, beta2, eps, weight_decay } => {
                OptimizerState::adamw(dim, beta1, beta2, eps, weight_decay)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum OptimizerState {
    Sgd { buffer: ParamVector, beta1: f64 },
    AdamW { m: ParamVector, v: ParamVector, beta1: f64, beta2: f64, eps: f64, weight_decay: f64, t: u64 },
}

fn check_beta(name: &str, b: f64) -> Result<()> {
    if (0.0..1.0).contains(&b) {
        Ok(())
    } else {
        arg(format!("{name} must lie in [0, 1), got {b}"))
    }
}

impl OptimizerState {
    pub fn sgd(dim: usize, beta1: f64) -> Result<Self> {
        check_beta("beta1", beta1)?;
        Ok(Self::Sgd { buffer: ParamVector::zeros(dim), beta1 })
    }

    pub fn adamw(dim: usize, beta1: f64, beta2: f64, eps: f64, weight_decay: f64) -> Result<Self> {
        check_beta("beta1", beta1)?;
        check_beta("beta2", beta2)?;
        if !(eps > 0.0) {
            return arg("adam epsilon must be > 0");
        }
        if !(weight_decay >= 0.0) {
            return arg("weight decay must be >= 0");
        }
        Ok(Self::AdamW {
            m: ParamVector::zeros(dim),
            v: ParamVector::zeros(dim),
            beta1,
            beta2,
            eps,
            weight_decay,
            t: 0,
        })
    }

    pub fn step(&mut self, params: &ParamVector, grad: &ParamVector, lr: f64) -> Result<ParamVector> {
        match self {
            Self::Sgd { .. } => sgd_step(self, params, grad, lr),
            Self::AdamW { .. } => adamw_step(self, params, grad, lr),
        }
    }
}

/// `params - lr * b` with `b <- beta1 * b + grad` (plain SGD when `beta1 = 0`).
pub fn sgd_step(state: &mut OptimizerState, params: &ParamVector, grad: &ParamVector, lr: f64) -> Result<ParamVector> {
    let OptimizerState::Sgd { buffer, beta1 } = state else {
        return arg("sgd_step: state is not SGD");
    };
    check_dims("sgd_step", params.dim(), grad.dim())?;
    check_dims("sgd_step", buffer.dim(), params.dim())?;
    if *beta1 == 0.0 {
        return Ok(ParamVector::from(params.iter().zip(grad.iter()).map(|(p, g)| p - lr * g).collect::<Vec<f64>>()));
    }
    for (b, g) in buffer.iter_mut().zip(grad.iter()) {
        *b = *beta1 * *b + g;
    }
    Ok(ParamVector::from(params.iter().zip(buffer.iter()).map(|(p, b)| p - lr * b).collect::<Vec<f64>>()))
}

/// Decoupled weight decay Adam with bias-corrected moments.
pub fn adamw_step(state: &mut OptimizerState, params: &ParamVector, grad: &ParamVector, lr: f64) -> Result<ParamVector> {
    let OptimizerState::AdamW { m, v, beta1, beta2, eps, weight_decay, t } = state else {
        return arg("adamw_step: state is not AdamW");
    };
    check_dims("adamw_step", params.dim(), grad.dim())?;
    check_dims("adamw_step", m.dim(), params.dim())?;
    *t += 1;
    let c1 = 1.0 - beta1.powi(*t as i32);
    let c2 = 1.0 - beta2.powi(*t as i32);
    let decay = 1.0 - lr * *weight_decay;
    let mut out = Vec::with_capacity(params.dim());
    for i in 0..params.dim() {
        let g = grad[i];
        m[i] = *beta1 * m[i] + (1.0 - *beta1) * g;
        v[i] = *beta2 * v[i] + (1.0 - *beta2) * g * g;
        let mh = m[i] / c1;
        let vh = v[i] / c2;
        out.push(params[i] * decay - lr * mh / (vh.sqrt() + *eps));
    }
    Ok(ParamVector::from(out))
}

/// Running sum of gradients flushed as their arithmetic mean.
#[derive(Debug, Clone, PartialEq)]
pub struct GradAccumulator {
    sum: ParamVector,
    count: usize,
    target: usize,
}

impl GradAccumulator {
    pub fn new(dim: usize, target: usize) -> Result<Self> {
        if target == 0 {
            return arg("accumulation multiple must be >= 1");
        }
        Ok(Self { sum: ParamVector::zeros(dim), count: 0, target })
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn is_ready(&self) -> bool {
        self.count >= self.target
    }

    pub fn accumulate(&mut self, grad: &ParamVector) -> Result<()> {
        check_dims("accumulate", self.sum.dim(), grad.dim())?;
        for (s, g) in self.sum.iter_mut().zip(grad.iter()) {
            *s += g;
        }
        self.count += 1;
        Ok(())
    }

    pub fn flush(&mut self) -> Result<ParamVector> {
        if self.count == 0 {
            return Err(Error::Argument("flush on an empty accumulator".into()));
        }
        let n = self.count as f64;
        let out = ParamVector::from(self.sum.iter().map(|s| s / n).collect::<Vec<f64>>());
        self.sum.iter_mut().for_each(|s| *s = 0.0);
        self.count = 0;
        Ok(out)
    }
}
