use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Uniform time discretization `t0, t0 + dt, ..., t0 + steps * dt`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    t0: f64,
    dt: f64,
    steps: usize,
}

impl TimeGrid {
    pub fn new(t0: f64, dt: f64, steps: usize) -> Result<Self> {
        if !(t0.is_finite() && t0 >= 0.0) {
            return Err(Error::Config(format!("grid start must be >= 0, got {t0}")));
        }
        if !(dt.is_finite() && dt > 0.0) {
            return Err(Error::Config(format!("grid step must be > 0, got {dt}")));
        }
        if steps == 0 {
            return Err(Error::Config("grid needs at least one step".into()));
        }
        Ok(Self { t0, dt, steps })
    }

    /// Grid on `[t0, horizon]` with `steps` equal steps.
    pub fn with_steps(t0: f64, horizon: f64, steps: usize) -> Result<Self> {
        if !(horizon > t0) {
            return Err(Error::Config(format!("horizon {horizon} must exceed start {t0}")));
        }
        if steps == 0 {
            return Err(Error::Config("grid needs at least one step".into()));
        }
        Self::new(t0, (horizon - t0) / steps as f64, steps)
    }

    /// Grid on `[t0, horizon]` with nominal step `dt`, which must divide the
    /// interval up to rounding. The stored step is recomputed from the
    /// horizon so the terminal time is reproduced exactly.
    pub fn with_dt(t0: f64, horizon: f64, dt: f64) -> Result<Self> {
        if !(dt.is_finite() && dt > 0.0) {
            return Err(Error::Config(format!("grid step must be > 0, got {dt}")));
        }
        let span = horizon - t0;
        let steps = (span / dt).round();
        if steps < 1.0 || (steps * dt - span).abs() > 1e-9 * span.abs().max(dt) {
            return Err(Error::Config(format!(
                "step {dt} does not divide the interval [{t0}, {horizon}]"
            )));
        }
        Self::with_steps(t0, horizon, steps as usize)
    }

    pub fn t0(&self) -> f64 {
        self.t0
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn horizon(&self) -> f64 {
        self.time(self.steps)
    }

    pub fn time(&self, step: usize) -> f64 {
        self.t0 + step as f64 * self.dt
    }

    /// Nearest grid index to `t`, and whether `t` was off-grid.
    pub fn nearest_step(&self, t: f64) -> (usize, bool) {
        let raw = ((t - self.t0) / self.dt).round().clamp(0.0, self.steps as f64);
        let step = raw as usize;
        let off = (self.time(step) - t).abs() > 1e-9 * self.dt.max(t.abs());
        (step, off)
    }

    /// Same step size, truncated to `steps` steps.
    pub fn truncated(&self, steps: usize) -> Result<Self> {
        Self::new(self.t0, self.dt, steps)
    }
}
