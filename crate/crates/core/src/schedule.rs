//! Weight-interval schedules.
//!
//! Random groups draw their weights and biases uniformly from
//! `[-bound, bound]`. An [`IntervalSchedule`] maps a growth-step index to that
//! bound, so incrementally added groups can sample from progressively wider
//! intervals. The constant schedule reproduces the classical fixed `[-1, 1]`
//! sampling when constructed with base 1.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// Shape of the bound-vs-step curve.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScheduleKind {
    /// `bound(step) = base`.
    Constant,
    /// `bound(step) = min(base * rate^step, cap)`.
    Geometric,
    /// `bound(step) = min(base + rate * step, cap)`.
    Linear,
}

/// A validated interval schedule.
///
/// Invariants enforced at construction: the base (and cap, where used) are
/// positive and the generated bounds are positive for every step; growth
/// schedules (`rate >= 1` geometric, `rate >= 0` linear) are non-decreasing
/// and never exceed the cap.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct IntervalSchedule {
    kind: ScheduleKind,
    base: f64,
    rate: f64,
    cap: f64,
}

/// Deserialization goes through [`IntervalSchedule::new`] so that configs
/// cannot construct schedules the validating constructors would reject.
/// `rate` defaults to 1 and `cap` to the base, so a constant schedule needs
/// only `{ kind = "constant", base = ... }`.
impl<'de> Deserialize<'de> for IntervalSchedule {
    fn deserialize<D>(deserializer: D) -> std::result::Result<Self, D::Error>
    where
        D: serde::Deserializer<'de>,
    {
        #[derive(Deserialize)]
        #[serde(deny_unknown_fields)]
        struct Shadow {
            kind: ScheduleKind,
            base: f64,
            #[serde(default = "default_rate")]
            rate: f64,
            #[serde(default)]
            cap: Option<f64>,
        }
        fn default_rate() -> f64 {
            1.0
        }
        let s = Shadow::deserialize(deserializer)?;
        let cap = match (s.kind, s.cap) {
            (_, Some(c)) => c,
            (ScheduleKind::Constant, None) => s.base,
            (kind, None) => {
                return Err(serde::de::Error::custom(format!(
                    "{kind:?} interval schedule requires a `cap`"
                )))
            }
        };
        IntervalSchedule::new(s.kind, s.base, s.rate, cap).map_err(serde::de::Error::custom)
    }
}

impl IntervalSchedule {
    /// Fixed bound for every step.
    pub fn constant(base: f64) -> Result<Self> {
        Self::new(ScheduleKind::Constant, base, 1.0, base)
    }

    /// Geometrically expanding bound, clipped at `cap`.
    pub fn geometric(base: f64, rate: f64, cap: f64) -> Result<Self> {
        Self::new(ScheduleKind::Geometric, base, rate, cap)
    }

    /// Linearly expanding bound, clipped at `cap`.
    pub fn linear(base: f64, rate: f64, cap: f64) -> Result<Self> {
        Self::new(ScheduleKind::Linear, base, rate, cap)
    }

    /// Validating constructor used by the named helpers and config parsing.
    pub fn new(kind: ScheduleKind, base: f64, rate: f64, cap: f64) -> Result<Self> {
        if !base.is_finite() || base <= 0.0 {
            return Err(Error::Config(format!(
                "interval schedule base must be positive and finite, got {base}"
            )));
        }
        if !cap.is_finite() || cap <= 0.0 {
            return Err(Error::Config(format!(
                "interval schedule cap must be positive and finite, got {cap}"
            )));
        }
        match kind {
            ScheduleKind::Constant => {}
            ScheduleKind::Geometric => {
                if !rate.is_finite() || rate <= 0.0 {
                    return Err(Error::Config(format!(
                        "geometric schedule rate must be positive and finite, got {rate}"
                    )));
                }
            }
            ScheduleKind::Linear => {
                if !rate.is_finite() || rate < 0.0 {
                    return Err(Error::Config(format!(
                        "linear schedule rate must be nonnegative and finite, got {rate}"
                    )));
                }
            }
        }
        Ok(Self {
            kind,
            base,
            rate,
            cap,
        })
    }

    pub fn kind(&self) -> ScheduleKind {
        self.kind
    }

    pub fn base(&self) -> f64 {
        self.base
    }

    /// Sampling half-width for the group added at `step` (the initial model is
    /// step 0).
    pub fn interval_at(&self, step: usize) -> f64 {
        match self.kind {
            ScheduleKind::Constant => self.base,
            ScheduleKind::Geometric => (self.base * self.rate.powi(step as i32)).min(self.cap),
            ScheduleKind::Linear => (self.base + self.rate * step as f64).min(self.cap),
        }
    }
}
