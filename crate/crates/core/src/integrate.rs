//! Fixed-step classical Runge-Kutta integration with energy-drift accounting.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::dynamics::{frequencies, Cr3bp, RegularizedState};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntegratorConfig {
    /// Fictitious-time step.
    pub step: f64,
    pub max_steps: usize,
    /// Largest tolerated `|K|` along a trajectory.
    pub drift_tolerance: f64,
    /// Run the step-doubling error monitor every this many steps (0 = off).
    pub error_check_interval: usize,
}

/// Steps per shortest linear period used by [`IntegratorConfig::for_mu`].
pub const DEFAULT_STEPS_PER_PERIOD: usize = 1500;

impl IntegratorConfig {
    pub fn new(step: f64, max_steps: usize, drift_tolerance: f64) -> Result<Self> {
        let cfg = IntegratorConfig { step, max_steps, drift_tolerance, error_check_interval: 0 };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Step resolving `2 pi / omega_s` with `steps_per_period` steps (near L4
    /// fictitious and physical time run at the same rate).
    pub fn for_mu(sys: &Cr3bp, steps_per_period: usize) -> Result<Self> {
        if steps_per_period < 200 {
            return Err(Error::InvalidParameter(
                "need at least 200 steps per short period".into(),
            ));
        }
        let f = frequencies(sys.mu)?;
        Self::new(2.0 * PI / (f.omega_s * steps_per_period as f64), 2_000_000, 1e-9)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.step > 0.0 && self.step.is_finite()) {
            return Err(Error::InvalidParameter(format!("step must be positive, got {}", self.step)));
        }
        if self.max_steps == 0 {
            return Err(Error::InvalidParameter("max_steps must be positive".into()));
        }
        if !(self.drift_tolerance > 0.0) {
            return Err(Error::InvalidParameter("drift_tolerance must be positive".into()));
        }
        Ok(())
    }
}

/// One classical four-stage Runge-Kutta step.
pub fn rk4_step<const N: usize, F>(state: &[f64; N], field: F, h: f64) -> Result<[f64; N]>
where
    F: Fn(&[f64; N]) -> Result<[f64; N]>,
{
    let stage = |base: &[f64; N], k: &[f64; N], c: f64| -> [f64; N] {
        let mut out = *base;
        for i in 0..N {
            out[i] += c * k[i];
        }
        out
    };
    let finite = |k: [f64; N]| -> Result<[f64; N]> {
        if k.iter().all(|v| v.is_finite()) {
            Ok(k)
        } else {
            Err(Error::StepFailure)
        }
    };
    let k1 = finite(field(state).map_err(|_| Error::StepFailure)?)?;
    let k2 = finite(field(&stage(state, &k1, 0.5 * h)).map_err(|_| Error::StepFailure)?)?;
    let k3 = finite(field(&stage(state, &k2, 0.5 * h)).map_err(|_| Error::StepFailure)?)?;
    let k4 = finite(field(&stage(state, &k3, h)).map_err(|_| Error::StepFailure)?)?;
    let mut out = *state;
    for i in 0..N {
        out[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    }
    finite(out)
}

/// Step-doubling local error estimate: one step of `h` against two of `h/2`.
pub fn step_doubling_error<const N: usize, F>(state: &[f64; N], field: F, h: f64) -> Result<f64>
where
    F: Fn(&[f64; N]) -> Result<[f64; N]>,
{
    let full = rk4_step(state, &field, h)?;
    let half = rk4_step(state, &field, 0.5 * h)?;
    let two = rk4_step(&half, &field, 0.5 * h)?;
    Ok(full.iter().zip(two.iter()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max) / 15.0)
}

/// One Runge-Kutta step of the regularized flow in fictitious time.
pub fn regularized_step(sys: &Cr3bp, reg: &RegularizedState, h: f64) -> Result<RegularizedState> {
    let e = reg.energy;
    let field = |a: &[f64; 5]| Ok(sys.vector_field_regularized(&RegularizedState::from_array(*a, e)));
    Ok(RegularizedState::from_array(rk4_step(&reg.to_array(), field, h)?, e))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Propagation {
    pub state: RegularizedState,
    pub steps: usize,
    /// Largest `|K|` seen, including the initial state.
    pub max_abs_k: f64,
    /// Largest step-doubling estimate, when the monitor is on.
    pub max_step_error: f64,
}

/// Integrates the regularized flow until `stop` returns true.
///
/// `stop` sees the initial state first, then every accepted step. The run
/// aborts with [`Error::DriftExceeded`] as soon as `|K|` leaves the tolerance.
pub fn propagate<S>(
    sys: &Cr3bp,
    reg: &RegularizedState,
    config: &IntegratorConfig,
    mut stop: S,
) -> Result<Propagation>
where
    S: FnMut(&RegularizedState) -> bool,
{
    config.validate()?;
    let mut state = *reg;
    let mut max_abs_k = sys.energy_regularized(&state).abs();
    let mut max_step_error: f64 = 0.0;
    if max_abs_k > config.drift_tolerance {
        return Err(Error::DriftExceeded { drift: max_abs_k, tolerance: config.drift_tolerance });
    }
    let e = reg.energy;
    let field = |a: &[f64; 5]| Ok(sys.vector_field_regularized(&RegularizedState::from_array(*a, e)));
    let mut steps = 0;
    while !stop(&state) {
        if steps >= config.max_steps {
            return Err(Error::MaxStepsExceeded(config.max_steps));
        }
        if config.error_check_interval > 0 && steps % config.error_check_interval == 0 {
            max_step_error =
                max_step_error.max(step_doubling_error(&state.to_array(), field, config.step)?);
        }
        state = RegularizedState::from_array(rk4_step(&state.to_array(), field, config.step)?, e);
        steps += 1;
        let k = sys.energy_regularized(&state).abs();
        max_abs_k = max_abs_k.max(k);
        if k > config.drift_tolerance {
            return Err(Error::DriftExceeded { drift: k, tolerance: config.drift_tolerance });
        }
    }
    Ok(Propagation { state, steps, max_abs_k, max_step_error })
}
