use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::Rng;

/// How a layer's per-unit timescales behave.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TimescaleMode {
    /// τ ≡ 1 exactly and frozen. The leaky integrator degenerates to a
    /// plain recurrent network: the previous potential contributes nothing.
    Unit,
    /// τ fixed at its layer target; only the connection weights train.
    Fixed,
    /// τ_i = 1 + e^(u_i + τ₀): the offset τ₀ pins the initial value, and a
    /// trainable per-unit u_i lets gradient descent bend each unit's
    /// timescale away from it.
    Adaptive,
}

/// Functional role of a layer inside the slow/fast hierarchy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LayerRole {
    /// Input/output layer, fastest units.
    Io,
    /// Fast context.
    Cf,
    /// Slow context; its leading units can form the shared cell assembly.
    Cs,
}

impl LayerRole {
    pub fn name(self) -> &'static str {
        match self {
            LayerRole::Io => "io",
            LayerRole::Cf => "cf",
            LayerRole::Cs => "cs",
        }
    }
}

/// Static description of one layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerSpec {
    pub role: LayerRole,
    pub units: usize,
    /// Effective timescale the layer starts at (exact for `Fixed`, the
    /// centre of the initial spread for `Adaptive`, must be 1 for `Unit`).
    pub tau: f64,
    /// Leading units of a `Cs` layer exposed as the cell-assembly slice;
    /// must be 0 on other roles.
    pub csc_units: usize,
}

impl LayerSpec {
    pub fn new(role: LayerRole, units: usize, tau: f64) -> Self {
        LayerSpec {
            role,
            units,
            tau,
            csc_units: 0,
        }
    }

    pub fn with_csc(mut self, csc_units: usize) -> Self {
        self.csc_units = csc_units;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.units == 0 {
            return Err(Error::invalid(format!("{} layer has no units", self.role.name())));
        }
        if !(self.tau.is_finite() && self.tau >= 1.0) {
            return Err(Error::invalid(format!(
                "{} layer timescale {} must be finite and >= 1",
                self.role.name(),
                self.tau
            )));
        }
        match self.role {
            LayerRole::Cs => {
                if self.csc_units > self.units {
                    return Err(Error::invalid(format!(
                        "cell-assembly slice {} exceeds cs layer size {}",
                        self.csc_units, self.units
                    )));
                }
            }
            _ => {
                if self.csc_units != 0 {
                    return Err(Error::invalid(format!(
                        "csc_units only applies to the cs layer, found {} on {}",
                        self.csc_units,
                        self.role.name()
                    )));
                }
            }
        }
        Ok(())
    }
}

/// τ(u, τ₀) = 1 + e^(u + τ₀).
///
/// The form guarantees τ > 1 for any real u, so the integration step
/// Δt/τ stays in (0, 1) and the update can never overshoot. Its derivative
/// with respect to u is e^(u + τ₀) = τ − 1, which training exploits.
pub fn effective_timescale(u: f64, tau0: f64) -> f64 {
    1.0 + (u + tau0).exp()
}

/// Per-unit timescale state of one layer.
///
/// `tau0` is set once from the layer's target and never trained; `u` is the
/// per-unit adaptation, trained only in `Adaptive` mode (zero otherwise).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimescaleParams {
    pub mode: TimescaleMode,
    pub tau0: Vec<f64>,
    pub u: Vec<f64>,
}

impl TimescaleParams {
    pub fn len(&self) -> usize {
        self.u.len()
    }

    pub fn is_empty(&self) -> bool {
        self.u.is_empty()
    }

    /// Effective timescale of unit `i`. `Unit` mode returns exactly 1.0,
    /// bypassing the exponential so the reduction to a plain recurrent
    /// network is bitwise, not merely approximate.
    pub fn effective(&self, i: usize) -> f64 {
        match self.mode {
            TimescaleMode::Unit => 1.0,
            _ => effective_timescale(self.u[i], self.tau0[i]),
        }
    }

    pub fn effective_all(&self) -> Vec<f64> {
        (0..self.len()).map(|i| self.effective(i)).collect()
    }

    /// d τ_i / d u_i, zero when the timescale is frozen.
    pub fn dtau_du(&self, i: usize) -> f64 {
        match self.mode {
            TimescaleMode::Adaptive => self.effective(i) - 1.0,
            _ => 0.0,
        }
    }

    pub fn trainable(&self) -> bool {
        self.mode == TimescaleMode::Adaptive
    }
}

/// Initial spread of the adaptive parameter u around zero.
const U_INIT_RANGE: f64 = 0.01;

/// Build the timescale state for a layer.
///
/// Fixed and adaptive modes require `spec.tau > 1`, since τ₀ = ln(τ − 1)
/// must exist; unit mode requires `spec.tau == 1`. Adaptive mode draws each
/// u_i uniformly from ±0.01 so units start nearly identical but can
/// differentiate under training.
pub fn init_timescales(mode: TimescaleMode, spec: &LayerSpec, rng: &mut Rng) -> Result<TimescaleParams> {
    spec.validate()?;
    let n = spec.units;
    match mode {
        TimescaleMode::Unit => {
            if spec.tau != 1.0 {
                return Err(Error::invalid(format!(
                    "unit timescale mode requires tau = 1, got {} on {}",
                    spec.tau,
                    spec.role.name()
                )));
            }
            Ok(TimescaleParams {
                mode,
                tau0: vec![0.0; n],
                u: vec![0.0; n],
            })
        }
        TimescaleMode::Fixed | TimescaleMode::Adaptive => {
            if spec.tau <= 1.0 {
                return Err(Error::invalid(format!(
                    "timescale target {} on {} must exceed 1 (tau0 = ln(tau - 1))",
                    spec.tau,
                    spec.role.name()
                )));
            }
            let tau0 = vec![(spec.tau - 1.0).ln(); n];
            let u = if mode == TimescaleMode::Adaptive {
                (0..n)
                    .map(|_| rng.uniform_in(-U_INIT_RANGE, U_INIT_RANGE))
                    .collect()
            } else {
                vec![0.0; n]
            };
            Ok(TimescaleParams { mode, tau0, u })
        }
    }
}
