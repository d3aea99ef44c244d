//! Oscillation statistics of a training curve of checkpoint evaluations.

use serde::{Deserialize, Serialize};

use crate::behavior_cloning::{CheckpointRecord, EvalResult};
use crate::error::{arg, Result};

/// One evaluated checkpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub step: u64,
    pub mean_reward: f64,
    pub rewards: Vec<f64>,
    pub val_loss: f64,
    /// Fraction of seeds whose rollout diverged.
    pub divergence_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingCurve {
    pub points: Vec<CurvePoint>,
}

impl TrainingCurve {
    pub fn new(mut points: Vec<CurvePoint>) -> Result<Self> {
        points.sort_by_key(|p| p.step);
        if points.windows(2).any(|w| w[0].step == w[1].step) {
            return arg("training curve: duplicate step indices");
        }
        Ok(Self { points })
    }

    fn from_evals(records: &[CheckpointRecord], loss: impl Fn(&CheckpointRecord) -> f64, pick: impl Fn(&CheckpointRecord) -> Option<&EvalResult>) -> Result<Self> {
        let points = records
            .iter()
            .map(|r| {
                let e = pick(r).ok_or_else(|| crate::Error::Data(format!("checkpoint {} was not evaluated", r.step)))?;
                let n = e.diverged.len().max(1) as f64;
                Ok(CurvePoint {
                    step: r.step,
                    mean_reward: e.mean,
                    rewards: e.rewards.clone(),
                    val_loss: loss(r),
                    divergence_rate: e.diverged.iter().filter(|d| **d).count() as f64 / n,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(points)
    }

    /// Curve of the raw optimizer iterates.
    pub fn raw(records: &[CheckpointRecord]) -> Result<Self> {
        Self::from_evals(records, |r| r.val_loss, |r| r.raw_eval.as_ref())
    }

    /// Curve of the EMA shadow.
    pub fn ema(records: &[CheckpointRecord]) -> Result<Self> {
        Self::from_evals(records, |r| r.ema_val_loss, |r| r.ema_eval.as_ref())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GvaSummary {
    pub j_max: f64,
    pub j_final: f64,
    pub loss_min: f64,
    pub loss_final: f64,
    pub mu_mid: f64,
    pub range_mid: f64,
    pub t_early: Option<f64>,
    pub t_worse: Option<f64>,
    pub divergence_rate: f64,
}

/// 95%-of-best threshold; for a negative best it is `J_max - 0.05|J_max|`.
pub fn good_threshold(j_max: f64) -> f64 {
    j_max - 0.05 * j_max.abs()
}

pub fn summarize(curve: &TrainingCurve) -> Result<GvaSummary> {
    let pts = &curve.points;
    if pts.len() < 4 {
        return arg(format!("summarize: need at least 4 checkpoints, got {}", pts.len()));
    }
    let t_max = pts.last().expect("non-empty").step as f64;
    let frac = |s: u64| if t_max > 0.0 { s as f64 / t_max } else { 0.0 };
    let means: Vec<f64> = pts.iter().map(|p| p.mean_reward).collect();
    let finite = means.iter().filter(|m| m.is_finite());
    let j_max = finite.clone().cloned().fold(f64::NEG_INFINITY, f64::max);
    let j_final = *means.last().expect("non-empty");
    let loss_min = pts.iter().map(|p| p.val_loss).fold(f64::INFINITY, f64::min);
    let loss_final = pts.last().expect("non-empty").val_loss;
    let (lo, hi) = (0.25 * t_max, 0.75 * t_max);
    let mid: Vec<f64> = pts
        .iter()
        .filter(|p| (p.step as f64) >= lo && (p.step as f64) <= hi && p.mean_reward.is_finite())
        .map(|p| p.mean_reward)
        .collect();
    let (mu_mid, range_mid) = if mid.is_empty() {
        (f64::NAN, 0.0)
    } else {
        let mx = mid.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mn = mid.iter().cloned().fold(f64::INFINITY, f64::min);
        (mid.iter().sum::<f64>() / mid.len() as f64, mx - mn)
    };
    let thr = good_threshold(j_max);
    let early = pts.iter().position(|p| p.mean_reward >= thr);
    let t_early = early.map(|i| frac(pts[i].step));
    let t_worse = early.and_then(|e| {
        pts.iter()
            .enumerate()
            .skip(e + 1)
            .filter(|(_, p)| !(p.mean_reward >= thr))
            .last()
            .map(|(_, p)| frac(p.step))
    });
    let divergence_rate = pts.iter().map(|p| p.divergence_rate).sum::<f64>() / pts.len() as f64;
    Ok(GvaSummary { j_max, j_final, loss_min, loss_final, mu_mid, range_mid, t_early, t_worse, divergence_rate })
}

fn lower_median(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(|a, b| a.total_cmp(b));
    xs[(xs.len() - 1) / 2]
}

/// Field-wise lower median. Absent `t_early`/`t_worse` values are ordered as
/// +∞ (for `t_worse`: "never worse"), and come back absent only when the
/// median lands on one of them.
pub fn median_over_seeds(summaries: &[GvaSummary]) -> Result<GvaSummary> {
    if summaries.is_empty() {
        return arg("median_over_seeds: no summaries");
    }
    let field = |f: fn(&GvaSummary) -> f64| lower_median(summaries.iter().map(f).collect());
    let opt = |f: fn(&GvaSummary) -> Option<f64>, absent: f64| {
        let m = lower_median(summaries.iter().map(|s| f(s).unwrap_or(absent)).collect());
        if m == absent {
            None
        } else {
            Some(m)
        }
    };
    Ok(GvaSummary {
        j_max: field(|s| s.j_max),
        j_final: field(|s| s.j_final),
        loss_min: field(|s| s.loss_min),
        loss_final: field(|s| s.loss_final),
        mu_mid: field(|s| s.mu_mid),
        range_mid: field(|s| s.range_mid),
        t_early: opt(|s| s.t_early, f64::INFINITY),
        t_worse: opt(|s| s.t_worse, f64::INFINITY),
        divergence_rate: field(|s| s.divergence_rate),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    /// `range_mid(ema) / range_mid(raw)`; 1 when both are 0, infinite when only raw is 0.
    pub oscillation_ratio: f64,
    pub d_j_max: f64,
    pub d_j_final: f64,
    pub d_loss_min: f64,
    pub d_loss_final: f64,
    pub d_mu_mid: f64,
    pub d_range_mid: f64,
    pub d_t_early: Option<f64>,
    pub d_t_worse: Option<f64>,
}

/// Deltas are `ema - raw`.
pub fn compare(raw: &GvaSummary, ema: &GvaSummary) -> Comparison {
    let oscillation_ratio = if raw.range_mid == 0.0 {
        if ema.range_mid == 0.0 {
            1.0
        } else {
            f64::INFINITY
        }
    } else {
        ema.range_mid / raw.range_mid
    };
    let od = |a: Option<f64>, b: Option<f64>| Some(b? - a?);
    Comparison {
        oscillation_ratio,
        d_j_max: ema.j_max - raw.j_max,
        d_j_final: ema.j_final - raw.j_final,
        d_loss_min: ema.loss_min - raw.loss_min,
        d_loss_final: ema.loss_final - raw.loss_final,
        d_mu_mid: ema.mu_mid - raw.mu_mid,
        d_range_mid: ema.range_mid - raw.range_mid,
        d_t_early: od(raw.t_early, ema.t_early),
        d_t_worse: od(raw.t_worse, ema.t_worse),
    }
}
