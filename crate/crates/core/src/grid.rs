use serde::Serialize;

use crate::error::{Error, Result};

/// Uniform grid `t_k = kΔt`, `k = 0..=K`, with `Δt = T/K`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TimeGrid {
    horizon: f64,
    steps: usize,
}

impl TimeGrid {
    pub fn new(horizon: f64, steps: usize) -> Result<Self> {
        if !(horizon.is_finite() && horizon > 0.0) {
            return Err(Error::usage(format!(
                "horizon must be positive, got {horizon}"
            )));
        }
        if steps == 0 {
            return Err(Error::usage("step count must be positive"));
        }
        Ok(Self { horizon, steps })
    }

    /// Grid with step `dt`; `horizon / dt` must be an integer (to 1e-9 relative).
    pub fn from_step(horizon: f64, dt: f64) -> Result<Self> {
        if !(dt.is_finite() && dt > 0.0) {
            return Err(Error::usage(format!(
                "time step must be positive, got {dt}"
            )));
        }
        let ratio = horizon / dt;
        let steps = ratio.round();
        if steps < 1.0 || (ratio - steps).abs() > 1e-9 * ratio.max(1.0) {
            return Err(Error::usage(format!(
                "horizon {horizon} is not an integer multiple of dt = {dt}"
            )));
        }
        Self::new(horizon, steps as usize)
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn dt(&self) -> f64 {
        self.horizon / self.steps as f64
    }

    pub fn len(&self) -> usize {
        self.steps + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// The last node is `T` exactly.
    pub fn node(&self, k: usize) -> f64 {
        if k >= self.steps {
            self.horizon
        } else {
            k as f64 * self.dt()
        }
    }

    pub fn nodes(&self) -> impl Iterator<Item = f64> + '_ {
        (0..=self.steps).map(move |k| self.node(k))
    }
}
