//! Leaky integrate-and-fire neuron with reset-to-zero.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResetMode {
    #[default]
    ToZero,
}

/// Membrane RC parameters and firing threshold.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LifParams {
    pub membrane_resistance: f64,
    pub membrane_capacitance: f64,
    pub threshold: f64,
    pub reset: ResetMode,
}

impl LifParams {
    pub fn new(resistance: f64, capacitance: f64, threshold: f64) -> Result<Self> {
        let p = LifParams {
            membrane_resistance: resistance,
            membrane_capacitance: capacitance,
            threshold,
            reset: ResetMode::ToZero,
        };
        p.validate()?;
        Ok(p)
    }

    /// Builds parameters from R and τ, with C = τ/R.
    pub fn with_tau(resistance: f64, tau: f64, threshold: f64) -> Result<Self> {
        Self::new(resistance, tau / resistance, threshold)
    }

    pub fn tau(&self) -> f64 {
        self.membrane_resistance * self.membrane_capacitance
    }

    pub fn validate(&self) -> Result<()> {
        for (v, k) in [
            (self.membrane_resistance, "membrane_resistance"),
            (self.membrane_capacitance, "membrane_capacitance"),
            (self.threshold, "threshold"),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::validation(format!("lif.{k}"), "must be finite and > 0"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LifState {
    pub v_mem: f64,
    pub last_spike_time: Option<f64>,
    pub v0: f64,
    /// Time integrated so far, used to stamp `last_spike_time`.
    pub elapsed: f64,
}

impl LifState {
    pub fn at_rest() -> Self {
        LifState::default()
    }

    pub fn reset(&mut self) {
        self.v_mem = 0.0;
    }
}

/// β = e^(−dt/τ).
pub fn decay_factor(dt: f64, tau: f64) -> Result<f64> {
    if !(tau.is_finite() && tau > 0.0) {
        return Err(Error::validation("tau", "must be finite and > 0"));
    }
    if !(dt.is_finite() && dt >= 0.0) {
        return Err(Error::validation("dt", "must be finite and >= 0"));
    }
    Ok((-dt / tau).exp())
}

/// One step of v' = β·v + R·(w·X)·(1 − β); fires and resets to 0 when v' ≥ V_th.
pub fn lif_step(state: &LifState, weighted_input: f64, params: &LifParams, dt: f64) -> Result<(LifState, bool)> {
    if !(dt.is_finite() && dt > 0.0) {
        return Err(Error::validation("dt", "must be finite and > 0"));
    }
    if !weighted_input.is_finite() {
        return Err(Error::Divergence {
            time: state.elapsed,
            detail: "non-finite neuron input".into(),
        });
    }
    let beta = decay_factor(dt, params.tau())?;
    let mut next = *state;
    next.elapsed += dt;
    next.v_mem = beta * state.v_mem + params.membrane_resistance * weighted_input * (1.0 - beta);
    let spike = next.v_mem >= params.threshold;
    if spike {
        next.v_mem = 0.0;
        next.last_spike_time = Some(next.elapsed);
    }
    Ok((next, spike))
}

/// V(t) = I·R + (v0 − I·R)·e^(−t/τ).
pub fn membrane_closed_form(i: f64, r: f64, tau: f64, v0: f64, t: f64) -> f64 {
    let e = (-t / tau).exp();
    v0 * e + i * r * (1.0 - e)
}

/// Spike times of a neuron starting at rest under constant input over `[0, horizon]`.
pub fn spike_times_constant_input(input: f64, params: &LifParams, dt: f64, horizon: f64) -> Result<Vec<f64>> {
    let steps = (horizon / dt).round() as usize;
    let mut state = LifState::at_rest();
    let mut out = Vec::new();
    for s in 1..=steps {
        let (next, spike) = lif_step(&state, input, params, dt)?;
        state = next;
        if spike {
            out.push(s as f64 * dt);
        }
    }
    Ok(out)
}
