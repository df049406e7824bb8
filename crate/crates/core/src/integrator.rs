//! Time-stepping configuration and run outcomes shared by both solvers.

use serde::{Deserialize, Serialize};

use crate::error::{MudpError, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct IntegratorConfig {
    pub dt_init: f64,
    pub cfl_number: f64,
    pub dt_min: f64,
    pub dealias: bool,
    pub t_end: f64,
    pub sample_interval: f64,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        Self {
            dt_init: 1e-3,
            cfl_number: 0.5,
            dt_min: 1e-10,
            dealias: true,
            t_end: 1.0,
            sample_interval: 1e-2,
        }
    }
}

impl IntegratorConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("dt_init", self.dt_init),
            ("cfl_number", self.cfl_number),
            ("dt_min", self.dt_min),
            ("t_end", self.t_end),
            ("sample_interval", self.sample_interval),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(MudpError::Config {
                    path: format!("integrator.{name}"),
                    line: None,
                    message: format!("{name} must be positive and finite, got {v}"),
                });
            }
        }
        if self.cfl_number > 1.0 {
            return Err(MudpError::Config {
                path: "integrator.cfl_number".into(),
                line: None,
                message: format!("cfl_number must lie in (0, 1], got {}", self.cfl_number),
            });
        }
        if self.dt_min >= self.dt_init {
            return Err(MudpError::Config {
                path: "integrator.dt_min".into(),
                line: None,
                message: format!("dt_min ({}) must be below dt_init ({})", self.dt_min, self.dt_init),
            });
        }
        Ok(())
    }

    /// Sample times `k·sample_interval` up to and including `t_end`.
    pub(crate) fn sample_time(&self, k: usize) -> f64 {
        (k as f64 * self.sample_interval).min(self.t_end)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum OutcomeKind {
    Completed,
    Blowup,
    DtUnderflow,
}

/// Which guard ended a run early.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopTrigger {
    SlopeFloor,
    Resolution,
    Jacobian,
    Ordering,
    NonFinite,
    StepUnderflow,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunOutcome {
    pub kind: OutcomeKind,
    pub t_stop: f64,
    pub trigger: Option<StopTrigger>,
    pub detail: String,
}

impl RunOutcome {
    pub fn completed(t: f64) -> Self {
        Self {
            kind: OutcomeKind::Completed,
            t_stop: t,
            trigger: None,
            detail: "reached t_end".into(),
        }
    }

    pub(crate) fn stopped(trigger: StopTrigger, t_stop: f64, detail: String) -> Self {
        let kind = if trigger == StopTrigger::StepUnderflow {
            OutcomeKind::DtUnderflow
        } else {
            OutcomeKind::Blowup
        };
        Self {
            kind,
            t_stop,
            trigger: Some(trigger),
            detail,
        }
    }

    pub fn is_blowup(&self) -> bool {
        matches!(self.kind, OutcomeKind::Blowup | OutcomeKind::DtUnderflow)
    }
}

/// Thresholds that stop a run as numerical blow-up.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BlowupGuard {
    /// Stop once `min u_x` drops below this (negative) value.
    pub slope_floor: f64,
    /// Lagrangian runs only: stop once `min φ′` drops below this.
    pub jacobian_floor: f64,
    /// Eulerian runs only: stop once the spectral tail (see
    /// [`crate::eulerian::spectral_tail`]) exceeds this. `INFINITY` disables it.
    pub resolution_tol: f64,
}

impl Default for BlowupGuard {
    fn default() -> Self {
        Self {
            slope_floor: -1e4,
            jacobian_floor: 1e-6,
            resolution_tol: 1e-3,
        }
    }
}

impl BlowupGuard {
    pub fn with_slope_floor(slope_floor: f64) -> Self {
        Self {
            slope_floor,
            ..Self::default()
        }
    }
}

/// First time in a `(t, min u_x)` trace at which the slope is below `floor`.
pub fn first_crossing(trace: &[(f64, f64)], floor: f64) -> Option<f64> {
    trace.iter().find(|(_, s)| *s < floor).map(|(t, _)| *t)
}

/// Drives a fixed-sample-grid time loop: steps are clipped so every sample
/// time is hit exactly.
pub(crate) struct SampleClock<'a> {
    cfg: &'a IntegratorConfig,
    next: usize,
}

impl<'a> SampleClock<'a> {
    pub(crate) fn new(cfg: &'a IntegratorConfig) -> Self {
        Self { cfg, next: 1 }
    }

    pub(crate) fn next_time(&self) -> f64 {
        self.cfg.sample_time(self.next)
    }

    /// Clips `dt` so the step lands on the next sample time if it would
    /// overshoot it. Returns the clipped step and whether it lands.
    pub(crate) fn clip(&self, t: f64, dt: f64) -> (f64, bool) {
        let target = self.next_time();
        let remaining = target - t;
        // Merge a sliver step into this one instead of taking it separately.
        if dt >= remaining * (1.0 - 1e-12) || remaining - dt < 1e-9 * self.cfg.sample_interval {
            (remaining, true)
        } else {
            (dt, false)
        }
    }

    pub(crate) fn advance(&mut self) {
        self.next += 1;
    }

    pub(crate) fn done(&self, t: f64) -> bool {
        t >= self.cfg.t_end * (1.0 - 1e-14)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_config_is_valid() {
        IntegratorConfig::default().validate().unwrap();
    }

    #[test]
    fn rejects_dt_min_above_dt_init() {
        let cfg = IntegratorConfig {
            dt_min: 1.0,
            dt_init: 0.1,
            ..Default::default()
        };
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn rejects_cfl_above_one() {
        let cfg = IntegratorConfig {
            cfl_number: 1.5,
            ..Default::default()
        };
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn clock_hits_samples_exactly() {
        let cfg = IntegratorConfig {
            t_end: 0.25,
            sample_interval: 0.1,
            ..Default::default()
        };
        let mut clock = SampleClock::new(&cfg);
        let mut t = 0.0;
        let mut hits = vec![];
        while !clock.done(t) {
            let (dt, lands) = clock.clip(t, 0.03);
            t = if lands { clock.next_time() } else { t + dt };
            if lands {
                hits.push(t);
                clock.advance();
            }
        }
        assert_eq!(hits.len(), 3);
        assert!((hits[0] - 0.1).abs() < 1e-15);
        assert!((hits[2] - 0.25).abs() < 1e-15);
    }
}
