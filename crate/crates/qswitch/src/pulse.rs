//! Time-dependent qubit-resonator coupling programs.

use serde::{Deserialize, Serialize};

use crate::emitter::{reduced_bandwidth_control, sech_control};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PulseShape {
    Sech { kappa: f64 },
    ReducedSech { kappa: f64, kappa_prime: f64 },
    Zero,
}

impl PulseShape {
    /// Unscaled control at time `s` relative to the pulse center.
    pub fn value(&self, s: f64) -> f64 {
        match *self {
            PulseShape::Sech { kappa } => sech_control(s, kappa),
            PulseShape::ReducedSech { kappa, kappa_prime } => {
                reduced_bandwidth_control(s, kappa, kappa_prime).unwrap_or(0.0)
            }
            PulseShape::Zero => 0.0,
        }
    }
}

/// Coupling `g_m(t)` on resonator `coupling`: zero outside `window`,
/// otherwise `amplitude_scale · shape(±(t − center))` with the minus sign when
/// time-reversed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PulseSchedule {
    pub coupling: usize,
    pub shape: PulseShape,
    pub center: f64,
    pub window: (f64, f64),
    pub amplitude_scale: f64,
    pub time_reversed: bool,
}

impl PulseSchedule {
    pub fn sech(coupling: usize, kappa: f64, center: f64, window: (f64, f64)) -> Self {
        Self {
            coupling,
            shape: PulseShape::Sech { kappa },
            center,
            window,
            amplitude_scale: 1.0,
            time_reversed: false,
        }
    }

    pub fn with_scale(mut self, scale: f64) -> Self {
        self.amplitude_scale = scale;
        self
    }

    pub fn reversed(mut self) -> Self {
        self.time_reversed = !self.time_reversed;
        self
    }

    pub fn value(&self, t: f64) -> f64 {
        if t < self.window.0 || t > self.window.1 {
            return 0.0;
        }
        let s = t - self.center;
        let s = if self.time_reversed { -s } else { s };
        self.amplitude_scale * self.shape.value(s)
    }

    pub fn is_zero(&self) -> bool {
        matches!(self.shape, PulseShape::Zero) || self.amplitude_scale == 0.0
    }

    pub fn validate(&self) -> Result<(), String> {
        let (a, b) = self.window;
        if !(a.is_finite() && b.is_finite() && a <= b) {
            return Err(format!("pulse window [{a:e}, {b:e}] is not an interval"));
        }
        if !(self.amplitude_scale > 0.0 && self.amplitude_scale.is_finite()) {
            return Err(format!(
                "amplitude scale must be positive, got {}",
                self.amplitude_scale
            ));
        }
        if !self.center.is_finite() {
            return Err(format!("pulse center {} is not finite", self.center));
        }
        if !self.is_zero() && !(a <= self.center && self.center <= b) {
            return Err(format!(
                "pulse center {:e} lies outside its window [{a:e}, {b:e}]",
                self.center
            ));
        }
        match self.shape {
            PulseShape::Sech { kappa } if !(kappa > 0.0) => {
                Err(format!("sech rate must be positive, got {kappa}"))
            }
            PulseShape::ReducedSech { kappa, kappa_prime }
                if !(kappa_prime > 0.0 && kappa_prime < kappa) =>
            {
                Err(format!(
                    "reduced sech needs 0 < kappa_prime < kappa, got {kappa_prime} and {kappa}"
                ))
            }
            _ => Ok(()),
        }
    }
}
