//! Iterate-averaging filters: EMA with burn-in and annealing, uniform,
//! Lacoste-Julien and suffix averages.
//!
//! Rates are written as γ (weight on the newest iterate); the common
//! decay-factor notation is β = 1 − γ.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::{arg, check_dims, Result};
use crate::numerics::ParamVector;

/// Weight on the newest iterate, as a function of steps since burn-in.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum GammaSchedule {
    Fixed { gamma: f64 },
    /// `max(s^-alpha, gamma_min)`, capped at 1 (so `s = 0` gives 1).
    Annealed { alpha: f64, gamma_min: f64 },
}

impl GammaSchedule {
    pub fn validate(&self) -> Result<()> {
        match *self {
            Self::Fixed { gamma } if !(0.0..=1.0).contains(&gamma) => {
                arg(format!("fixed gamma must lie in [0, 1], got {gamma}"))
            }
            Self::Annealed { alpha, gamma_min } if !(alpha >= 0.0) || !(0.0..=1.0).contains(&gamma_min) => {
                arg("annealed gamma needs alpha >= 0 and gamma_min in [0, 1]")
            }
            _ => Ok(()),
        }
    }

    pub fn gamma_at(&self, s: u64) -> f64 {
        match *self {
            Self::Fixed { gamma } => gamma,
            Self::Annealed { alpha, gamma_min } => {
                if s == 0 {
                    1.0
                } else {
                    (s as f64).powf(-alpha).max(gamma_min).min(1.0)
                }
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EmaConfig {
    pub schedule: GammaSchedule,
    #[serde(default)]
    pub burn_in: u64,
    #[serde(default = "one")]
    pub period: u64,
}

fn one() -> u64 {
    1
}

impl EmaConfig {
    pub fn fixed(gamma: f64) -> Self {
        Self { schedule: GammaSchedule::Fixed { gamma }, burn_in: 0, period: 1 }
    }

    pub fn annealed(alpha: f64, gamma_min: f64) -> Self {
        Self { schedule: GammaSchedule::Annealed { alpha, gamma_min }, burn_in: 0, period: 1 }
    }

    pub fn validate(&self) -> Result<()> {
        if self.period == 0 {
            return arg("EMA update period must be >= 1");
        }
        self.schedule.validate()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmaFilter {
    config: EmaConfig,
    shadow: Option<ParamVector>,
    last_t: Option<u64>,
}

fn check_time(last: Option<u64>, t: u64) -> Result<()> {
    match last {
        Some(prev) if t <= prev => arg(format!("filter time must increase: {t} after {prev}")),
        _ => Ok(()),
    }
}

fn blend(shadow: &mut ParamVector, iterate: &ParamVector, gamma: f64) {
    for (s, x) in shadow.iter_mut().zip(iterate.iter()) {
        *s += gamma * (x - *s);
    }
}

impl EmaFilter {
    pub fn new(config: EmaConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self { config, shadow: None, last_t: None })
    }

    pub fn shadow(&self) -> Option<&ParamVector> {
        self.shadow.as_ref()
    }

    /// Feeds iterate number `t`; the first call seeds the shadow with a copy.
    pub fn update(&mut self, t: u64, iterate: &ParamVector) -> Result<&ParamVector> {
        check_time(self.last_t, t)?;
        if let Some(s) = &self.shadow {
            check_dims("ema_update", s.dim(), iterate.dim())?;
        }
        self.last_t = Some(t);
        let b = self.config.burn_in;
        match self.shadow.as_mut() {
            Some(shadow) if t >= b => {
                let s = t - b;
                if s % self.config.period == 0 {
                    blend(shadow, iterate, self.config.schedule.gamma_at(s));
                }
            }
            _ => self.shadow = Some(iterate.clone()),
        }
        Ok(self.shadow.as_ref().expect("shadow set above"))
    }
}

/// Free-function form of [`EmaFilter::update`].
pub fn ema_update(filter: &mut EmaFilter, t: u64, iterate: &ParamVector) -> Result<ParamVector> {
    filter.update(t, iterate).cloned()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum AverageKind {
    Uniform,
    LacosteJulien,
    Suffix { alpha: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct AverageFilter {
    kind: AverageKind,
    count: u64,
    state: Option<ParamVector>,
    window: VecDeque<ParamVector>,
    last_t: Option<u64>,
}

impl AverageFilter {
    pub fn new(kind: AverageKind) -> Result<Self> {
        if let AverageKind::Suffix { alpha } = kind {
            if !(alpha > 0.0 && alpha <= 1.0) {
                return arg(format!("suffix fraction must lie in (0, 1], got {alpha}"));
            }
        }
        Ok(Self { kind, count: 0, state: None, window: VecDeque::new(), last_t: None })
    }

    /// Number of iterates currently held by a suffix window.
    pub fn window_len(&self) -> usize {
        self.window.len()
    }

    pub fn update(&mut self, t: u64, iterate: &ParamVector) -> Result<ParamVector> {
        check_time(self.last_t, t)?;
        if let Some(s) = &self.state {
            check_dims("avg_update", s.dim(), iterate.dim())?;
        }
        self.last_t = Some(t);
        self.count += 1;
        let n = self.count;
        match self.kind {
            AverageKind::Uniform | AverageKind::LacosteJulien => {
                let gamma = match self.kind {
                    AverageKind::Uniform => 1.0 / n as f64,
                    _ => 2.0 / (n as f64 + 1.0),
                };
                match self.state.as_mut() {
                    Some(s) => blend(s, iterate, gamma),
                    None => self.state = Some(iterate.clone()),
                }
            }
            AverageKind::Suffix { alpha } => {
                let w = ((alpha * n as f64).ceil() as usize).clamp(1, n as usize);
                self.window.push_back(iterate.clone());
                while self.window.len() > w {
                    self.window.pop_front();
                }
                let k = self.window.len() as f64;
                let mut mean = vec![0.0; iterate.dim()];
                for x in &self.window {
                    for (m, v) in mean.iter_mut().zip(x.iter()) {
                        *m += v;
                    }
                }
                mean.iter_mut().for_each(|m| *m /= k);
                self.state = Some(ParamVector::from(mean));
            }
        }
        Ok(self.state.clone().expect("state set above"))
    }
}

pub fn avg_update(filter: &mut AverageFilter, t: u64, iterate: &ParamVector) -> Result<ParamVector> {
    filter.update(t, iterate)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "filter", rename_all = "snake_case", deny_unknown_fields)]
pub enum FilterConfig {
    Ema {
        schedule: GammaSchedule,
        #[serde(default)]
        burn_in: u64,
        #[serde(default = "one")]
        period: u64,
    },
    Uniform,
    LacosteJulien,
    Suffix { alpha: f64 },
}

impl From<EmaConfig> for FilterConfig {
    fn from(c: EmaConfig) -> Self {
        Self::Ema { schedule: c.schedule, burn_in: c.burn_in, period: c.period }
    }
}

/// Either kind of filter behind one interface.
#[derive(Debug, Clone, PartialEq)]
pub enum Filter {
    Ema(EmaFilter),
    Average(AverageFilter),
}

impl Filter {
    pub fn new(config: FilterConfig) -> Result<Self> {
        Ok(match config {
            FilterConfig::Ema { schedule, burn_in, period } => {
                Self::Ema(EmaFilter::new(EmaConfig { schedule, burn_in, period })?)
            }
            FilterConfig::Uniform => Self::Average(AverageFilter::new(AverageKind::Uniform)?),
            FilterConfig::LacosteJulien => Self::Average(AverageFilter::new(AverageKind::LacosteJulien)?),
            FilterConfig::Suffix { alpha } => Self::Average(AverageFilter::new(AverageKind::Suffix { alpha })?),
        })
    }

    pub fn update(&mut self, t: u64, iterate: &ParamVector) -> Result<ParamVector> {
        match self {
            Self::Ema(f) => f.update(t, iterate).cloned(),
            Self::Average(f) => f.update(t, iterate),
        }
    }
}

/// Runs a filter over a saved stream of iterates. EMA sees times `0, 1, ...`;
/// the averages see `1, 2, ...`.
pub fn filter_checkpoint_stream(records: &[ParamVector], config: FilterConfig) -> Result<Vec<ParamVector>> {
    if records.is_empty() {
        return arg("filter_checkpoint_stream: empty stream");
    }
    let mut f = Filter::new(config)?;
    let offset = u64::from(!matches!(config, FilterConfig::Ema { .. }));
    records
        .iter()
        .enumerate()
        .map(|(k, r)| f.update(k as u64 + offset, r))
        .collect()
}
