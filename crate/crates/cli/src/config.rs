//! Experiment configs: strict TOML with one parameter block per experiment kind.

use std::path::{Component, Path};

use gva_core::behavior_cloning::{Activation, ExpertDataConfig, TrainConfig};
use gva_core::mean_cliff::DriftSchedule;
use gva_core::stabilizers::FilterConfig;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    /// Bundle directory relative to the output root; defaults to `<kind>-seed<seed>`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<String>,
    pub experiment: Experiment,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Experiment {
    VerifyDtEma(DtEmaParams),
    VerifyCliff(CliffParams),
    VerifyOu(OuParams),
    VerifyDriftless(DriftlessParams),
    VerifyAmplification(AmplificationParams),
    MeanCliff(MeanCliffParams),
    LqrMarginal(LqrParams),
    LqrCliff(LqrParams),
    BenchAveraging(BenchParams),
}

impl Experiment {
    pub fn kind(&self) -> &'static str {
        match self {
            Self::VerifyDtEma(_) => "verify-dt-ema",
            Self::VerifyCliff(_) => "verify-cliff",
            Self::VerifyOu(_) => "verify-ou",
            Self::VerifyDriftless(_) => "verify-driftless",
            Self::VerifyAmplification(_) => "verify-amplification",
            Self::MeanCliff(_) => "mean-cliff",
            Self::LqrMarginal(_) => "lqr-marginal",
            Self::LqrCliff(_) => "lqr-cliff",
            Self::BenchAveraging(_) => "bench-averaging",
        }
    }
}

/// Scalar SGD MSE grids: a raw grid against the exact formula and an EMA grid
/// against the two-sided bounds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DtEmaParams {
    pub sigma: f64,
    pub trials: usize,
    pub raw_etas: Vec<f64>,
    pub raw_offsets: Vec<f64>,
    pub raw_horizons: Vec<u64>,
    pub ema_etas: Vec<f64>,
    pub ema_gammas: Vec<f64>,
    pub ema_offset: f64,
    /// Fixed EMA horizon; when absent, the smallest `T` with `(1-γ)^{2T} ≤ γ`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ema_horizon: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CliffParams {
    pub dim: usize,
    pub eps: f64,
    pub c: f64,
    pub eta: f64,
    pub gamma: f64,
    pub sigma: f64,
    pub horizon: u64,
    /// `‖θ⁰ - μ‖`, placed along the first axis.
    pub offset: f64,
    pub trials: usize,
    /// Trials are also summarized in this many equal blocks.
    pub blocks: usize,
    pub min_separation: f64,
    /// Variances for the Gaussian high-loss and low-loss probes.
    pub gaussian_high_variance: f64,
    pub gaussian_low_variance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OuParams {
    pub a: f64,
    pub theta0: f64,
    pub mu: f64,
    pub gamma: f64,
    pub t_end: f64,
    pub dt: f64,
    pub trials: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DriftlessParams {
    pub eta: f64,
    pub gamma: f64,
    pub t_end: f64,
    pub dt: f64,
    pub trials: usize,
    pub schedules: Vec<DriftSchedule>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AmplificationParams {
    pub dim: usize,
    pub eps: f64,
    pub c: f64,
    pub horizon: usize,
    pub eps_primes: Vec<f64>,
    /// Two growth rates `δ₁ > δ₂` whose gap ratio must be at least
    /// `exp(0.9·H·(δ₁-δ₂)/2)`.
    pub ratio_deltas: [f64; 2],
    /// Stable-loop check on the two-dimensional reference system.
    pub stable_eps: f64,
    pub stable_grid: usize,
    pub stable_horizon: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeanCliffParams {
    pub dim: usize,
    pub eps: f64,
    pub c: f64,
    pub eta: f64,
    pub sigma: f64,
    pub horizon: u64,
    pub offset: f64,
    pub trials: usize,
    /// Number of evenly spaced evaluation steps in `[0, T]` (both ends included).
    pub points: usize,
    pub filter: FilterConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchParams {
    pub dim: usize,
    pub eta: f64,
    pub sigma: f64,
    pub horizon: u64,
    pub offset: f64,
    pub trials: usize,
    pub filters: Vec<FilterConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SystemSpec {
    /// The fixed two-dimensional marginally stable instance.
    MarginalReference { horizon: usize },
    /// Marginally stable system with a random rotation.
    MarginalRandom { dim: usize, alpha: f64, horizon: usize },
    /// Spring with a cliff; starts uniform on the given arc of the unit circle.
    SpringCliff { eta_time: f64, kappa: f64, horizon: usize, arc_lo: f64, arc_hi: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ImitatorSpec {
    /// Gain matrix initialized uniform in `±scale` (default `1/sqrt(d_x)`).
    Linear {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        init_scale: Option<f64>,
    },
    Mlp {
        hidden: Vec<usize>,
        activation: Activation,
        #[serde(default)]
        prev_action_augmented: bool,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LqrParams {
    pub system: SystemSpec,
    pub data: ExpertDataConfig,
    pub imitator: ImitatorSpec,
    pub train: TrainConfig,
    /// Also write the expert dataset as CSV.
    #[serde(default)]
    pub export_dataset: bool,
}

fn positive(name: &str, v: f64) -> CliResult<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(CliError::Config(format!("{name} must be finite and > 0, got {v}")))
    }
}

fn at_least(name: &str, v: usize, min: usize) -> CliResult<()> {
    if v >= min {
        Ok(())
    } else {
        Err(CliError::Config(format!("{name} must be >= {min}, got {v}")))
    }
}

fn non_empty<T>(name: &str, v: &[T]) -> CliResult<()> {
    if v.is_empty() {
        Err(CliError::Config(format!("{name} must not be empty")))
    } else {
        Ok(())
    }
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> CliResult<Self> {
        let c: Self = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::parse(&text)
    }

    pub fn to_toml(&self) -> CliResult<String> {
        toml::to_string(self).map_err(|e| CliError::Config(format!("cannot serialize config: {e}")))
    }

    pub fn bundle_dir(&self) -> String {
        self.output_dir.clone().unwrap_or_else(|| format!("{}-seed{}", self.experiment.kind(), self.seed))
    }

    /// Structural checks only; the experiment builders run the module
    /// preconditions before any simulation starts.
    pub fn validate(&self) -> CliResult<()> {
        // TOML integers are signed, so larger seeds could not be written back
        if self.seed > i64::MAX as u64 {
            return Err(CliError::Config(format!("seed must be <= {}, got {}", i64::MAX, self.seed)));
        }
        let dir = self.bundle_dir();
        let p = Path::new(&dir);
        if dir.is_empty() || !p.components().all(|c| matches!(c, Component::Normal(_))) {
            return Err(CliError::Config(format!("output_dir must be a plain relative path, got {dir:?}")));
        }
        match &self.experiment {
            Experiment::VerifyDtEma(p) => {
                at_least("trials", p.trials, 100)?;
                non_empty("raw_etas", &p.raw_etas)?;
                non_empty("ema_etas", &p.ema_etas)?;
                non_empty("ema_gammas", &p.ema_gammas)?;
                non_empty("raw_offsets", &p.raw_offsets)?;
                non_empty("raw_horizons", &p.raw_horizons)?;
            }
            Experiment::VerifyCliff(p) => {
                at_least("trials", p.trials, 100)?;
                at_least("blocks", p.blocks, 1)?;
                at_least("dim", p.dim, 1)?;
                positive("gamma", p.gamma)?;
                if p.trials % p.blocks != 0 {
                    return Err(CliError::Config("trials must be a multiple of blocks".into()));
                }
            }
            Experiment::VerifyOu(p) => at_least("trials", p.trials, 2)?,
            Experiment::VerifyDriftless(p) => {
                at_least("trials", p.trials, 2)?;
                non_empty("schedules", &p.schedules)?;
            }
            Experiment::VerifyAmplification(p) => {
                non_empty("eps_primes", &p.eps_primes)?;
                at_least("stable_horizon", p.stable_horizon, 1)?;
                if !(p.ratio_deltas[0] > p.ratio_deltas[1]) {
                    return Err(CliError::Config("ratio_deltas must be decreasing".into()));
                }
            }
            Experiment::MeanCliff(p) => {
                at_least("trials", p.trials, 100)?;
                at_least("points", p.points, 2)?;
                at_least("dim", p.dim, 1)?;
            }
            Experiment::BenchAveraging(p) => {
                at_least("trials", p.trials, 2)?;
                at_least("dim", p.dim, 1)?;
                non_empty("filters", &p.filters)?;
            }
            Experiment::LqrMarginal(p) | Experiment::LqrCliff(p) => {
                if let ImitatorSpec::Mlp { hidden, .. } = &p.imitator {
                    if hidden.contains(&0) {
                        return Err(CliError::Config("hidden widths must be >= 1".into()));
                    }
                }
                if let ImitatorSpec::Linear { init_scale: Some(s) } = p.imitator {
                    if !(s >= 0.0) {
                        return Err(CliError::Config("init_scale must be >= 0".into()));
                    }
                }
                p.train.validate()?;
            }
        }
        Ok(())
    }
}
