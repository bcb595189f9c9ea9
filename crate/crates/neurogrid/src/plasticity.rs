//! STDP weight updates, weight-to-droop mapping, physics-informed thresholds and
//! the Hebbian analysis helpers.

use std::collections::VecDeque;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::Topology;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExponentMode {
    /// e^(−|Δt|/τ) in both branches.
    #[default]
    Standard,
    /// e^(Δt/τ) in both branches, as printed.
    Literal,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StdpParams {
    pub a_plus: f64,
    pub a_minus: f64,
    pub window: f64,
    pub exponent_mode: ExponentMode,
}

impl StdpParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.a_plus.is_finite() && self.a_plus > 0.0) {
            return Err(Error::validation("stdp.a_plus", "must be > 0"));
        }
        if self.exponent_mode == ExponentMode::Standard && !(self.a_minus.is_finite() && self.a_minus < 0.0) {
            return Err(Error::validation("stdp.a_minus", "must be < 0 in standard mode"));
        }
        if !(self.window.is_finite() && self.window > 0.0) {
            return Err(Error::validation("stdp.window", "must be > 0"));
        }
        Ok(())
    }
}

/// Pair kernel K(Δt) with Δt = t_Sv − t_Si.
pub fn stdp_kernel(dt: f64, a_plus: f64, a_minus: f64, tau: f64, mode: ExponentMode) -> f64 {
    let e = match mode {
        ExponentMode::Standard => (-dt.abs() / tau).exp(),
        ExponentMode::Literal => (dt / tau).exp(),
    };
    if dt > 0.0 {
        a_plus * e
    } else {
        a_minus * e
    }
}

/// Δw = Σ_f Σ_u K(t_Sv,f − t_Si,u) over pairs with |Δt| ≤ window.
pub fn stdp_update(s_v: &[f64], s_i: &[f64], params: &StdpParams, tau_k: f64) -> f64 {
    let mut dw = 0.0;
    for &tv in s_v {
        let lo = s_i.partition_point(|t| *t < tv - params.window);
        for &ti in &s_i[lo..] {
            let d = tv - ti;
            if d < -params.window {
                break;
            }
            if d.abs() <= params.window {
                dw += stdp_kernel(d, params.a_plus, params.a_minus, tau_k, params.exponent_mode);
            }
        }
    }
    dw
}

/// Weight-dependent amplitudes A₊ = A₊⁰(1 − w/w_max), A₋ = A₋⁰·w/w_max.
pub fn soft_bound_amplitudes(a_plus0: f64, a_minus0: f64, w: f64, w_max: f64) -> (f64, f64) {
    (a_plus0 * (1.0 - w / w_max), a_minus0 * w / w_max)
}

/// Incremental pairing: each new spike is paired with the other channel's spikes
/// already seen within the window, so the sum over a whole run equals
/// [`stdp_update`] on the full trains (for fixed amplitudes).
#[derive(Debug, Clone, Default)]
pub struct OnlineStdp {
    recent_v: VecDeque<f64>,
    recent_i: VecDeque<f64>,
}

impl OnlineStdp {
    pub fn new() -> Self {
        Self::default()
    }

    /// Registers a spike at `t` (not earlier than any previous spike) and returns
    /// its Δw contribution.
    pub fn on_spike(
        &mut self,
        voltage_channel: bool,
        t: f64,
        a_plus: f64,
        a_minus: f64,
        tau: f64,
        params: &StdpParams,
    ) -> f64 {
        let horizon = t - params.window;
        for q in [&mut self.recent_v, &mut self.recent_i] {
            while q.front().is_some_and(|s| *s < horizon) {
                q.pop_front();
            }
        }
        let (own, other) = if voltage_channel {
            (&mut self.recent_v, &self.recent_i)
        } else {
            (&mut self.recent_i, &self.recent_v)
        };
        let mut dw = 0.0;
        for &s in other {
            let d = if voltage_channel { t - s } else { s - t };
            dw += stdp_kernel(d, a_plus, a_minus, tau, params.exponent_mode);
        }
        own.push_back(t);
        dw
    }

    pub fn clear(&mut self) {
        self.recent_v.clear();
        self.recent_i.clear();
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DroopParams {
    /// Normalization gain a in ΔR = −a·Δw.
    pub a: f64,
    /// τ_d, seconds.
    pub synaptic_delay: f64,
    /// Lower bound on (R_d + ΔR)/R_d.
    pub min_fraction: f64,
}

/// Per-DER learning state.
#[derive(Debug, Clone, PartialEq)]
pub struct PlasticityState {
    pub w: f64,
    pub dw: f64,
    pub delta_r: f64,
    pending: VecDeque<(f64, f64)>,
}

impl PlasticityState {
    pub fn new(w0: f64) -> Self {
        PlasticityState {
            w: w0,
            dw: 0.0,
            delta_r: 0.0,
            pending: VecDeque::new(),
        }
    }

    /// Queues Δw to take effect at `t + τ_d`. Updates are applied in the order
    /// they were queued.
    pub fn apply_weight_to_droop(&mut self, dw: f64, t: f64, droop: &DroopParams) {
        self.pending.push_back((t + droop.synaptic_delay, dw));
    }

    /// Applies every queued update due at or before `t` to w and ΔR; returns
    /// whether anything was applied. With `w_max` set, w is held in [0, w_max]
    /// and ΔR moves by the clipped step only.
    pub fn advance(&mut self, t: f64, droop: &DroopParams, r_d: f64, w_max: Option<f64>) -> bool {
        let mut any = false;
        while let Some(&(due, dw)) = self.pending.front() {
            if due > t + 1e-12 {
                break;
            }
            self.pending.pop_front();
            let next = match w_max {
                Some(hi) => (self.w + dw).clamp(0.0, hi),
                None => self.w + dw,
            };
            let dw = next - self.w;
            self.w = next;
            self.dw = dw;
            self.delta_r = clamp_delta_r(self.delta_r - droop.a * dw, r_d, droop.min_fraction);
            any = true;
        }
        any
    }

    /// Drops queued updates (used when a DER is plugged out).
    pub fn clear_pending(&mut self) {
        self.pending.clear();
    }

    pub fn pending_len(&self) -> usize {
        self.pending.len()
    }
}

/// Clamps ΔR so that R_d + ΔR ≥ min_fraction·R_d. NaN maps to the bound.
pub fn clamp_delta_r(delta_r: f64, r_d: f64, min_fraction: f64) -> f64 {
    let lo = (min_fraction - 1.0) * r_d;
    if delta_r.is_nan() || delta_r < lo {
        lo
    } else {
        delta_r
    }
}

/// Voltage thresholds: V'_2 = V_1 + ψ_12·r_d·I_1 and V'_3 = V_1 + ψ_13·(r_a + r_c)·I_1,
/// with I_4 taken as 0. Needs tie-lines labelled a, c and d.
pub fn voltage_thresholds(v1: f64, i1: f64, psi: &[Vec<f64>], topology: &Topology) -> Result<(f64, f64)> {
    let r = |id: &str| {
        topology
            .tie(id)
            .map(|t| t.resistance)
            .ok_or_else(|| Error::validation("grid.ties", format!("tie `{id}` is required")))
    };
    if psi.len() < 3 || psi[0].len() < 3 {
        return Err(Error::validation("grid.psi", "needs at least 3 buses"));
    }
    let v2 = v1 + psi[0][1] * r("d")? * i1;
    let v3 = v1 + psi[0][2] * (r("a")? + r("c")?) * i1;
    Ok((v2, v3))
}

/// Reference voltages: V'_kref = V_ref − α_k·R_d·I_1 for each droop α_k·R_d.
pub fn current_thresholds(v_ref: f64, droops: &[f64], i1: f64) -> Result<Vec<f64>> {
    if droops.iter().any(|d| !(d.is_finite() && *d > 0.0)) {
        return Err(Error::validation("droops", "must be > 0"));
    }
    Ok(droops.iter().map(|d| v_ref - d * i1).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HebbianParams {
    pub eta: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p_total: Option<f64>,
}

impl HebbianParams {
    /// η, divided by P_t when configured.
    pub fn effective_eta(&self) -> f64 {
        match self.p_total {
            Some(p) => self.eta / p,
            None => self.eta,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.eta.is_finite() && self.eta > 0.0) {
            return Err(Error::validation("hebbian.eta", "must be > 0"));
        }
        if let Some(p) = self.p_total {
            if !(p.is_finite() && p > 0.0) {
                return Err(Error::validation("hebbian.p_total", "must be > 0"));
            }
        }
        Ok(())
    }
}

/// dw/dt = η·x·(wᵀx).
pub fn hebbian_rate(w: &[f64], x: &[f64], eta: f64) -> Result<Vec<f64>> {
    if w.len() != x.len() {
        return Err(Error::validation("hebbian_rate", "w and x lengths differ"));
    }
    let y: f64 = w.iter().zip(x).map(|(a, b)| a * b).sum();
    Ok(x.iter().map(|xi| eta * xi * y).collect())
}

const OVERFLOW_NORM: f64 = 1e150;

/// Euler integration of dw/dt = η·C·Y·w from `w0` over `horizon` with step `dt`.
pub fn hebbian_trajectory(
    c: &DMatrix<f64>,
    y: &DMatrix<f64>,
    w0: &[f64],
    eta: f64,
    horizon: f64,
    dt: f64,
) -> Result<Vec<f64>> {
    let n = w0.len();
    if c.shape() != (n, n) || y.shape() != (n, n) {
        return Err(Error::validation("hebbian_trajectory", "C, Y and w0 dimensions differ"));
    }
    if !(dt > 0.0 && horizon >= 0.0) {
        return Err(Error::validation(
            "hebbian_trajectory",
            "dt must be > 0 and horizon >= 0",
        ));
    }
    let m = c * y * eta;
    let mut w = DVector::from_column_slice(w0);
    let steps = (horizon / dt).round() as usize;
    for s in 0..steps {
        let dw = &m * &w;
        w += dw * dt;
        let norm = w.norm();
        if !norm.is_finite() || norm > OVERFLOW_NORM {
            return Err(Error::Divergence {
                time: (s + 1) as f64 * dt,
                detail: format!("Hebbian weight norm exceeded {OVERFLOW_NORM:e}"),
            });
        }
    }
    Ok(w.iter().copied().collect())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PrincipalComponentCheck {
    /// |cos| of the angle between w and the dominant eigenvector.
    pub score: f64,
    /// λ₁ − λ₂ < 1e-9: the dominant direction is not unique.
    pub indeterminate: bool,
    pub eigen_gap: f64,
}

/// Alignment of `w` with the dominant eigenvector of symmetric `c`.
pub fn principal_component_check(c: &DMatrix<f64>, w: &[f64]) -> Result<PrincipalComponentCheck> {
    let n = w.len();
    if c.shape() != (n, n) {
        return Err(Error::validation("principal_component_check", "dimension mismatch"));
    }
    let wv = DVector::from_column_slice(w);
    let wn = wv.norm();
    if !(wn > 0.0 && wn.is_finite()) {
        return Err(Error::validation("w_final", "must be nonzero and finite"));
    }
    let eig = c.clone().symmetric_eigen();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|a, b| eig.eigenvalues[*b].total_cmp(&eig.eigenvalues[*a]));
    let top = eig.eigenvectors.column(order[0]);
    let gap = if n > 1 {
        eig.eigenvalues[order[0]] - eig.eigenvalues[order[1]]
    } else {
        f64::INFINITY
    };
    let score = (top.dot(&wv) / (top.norm() * wn)).abs().min(1.0);
    Ok(PrincipalComponentCheck {
        score,
        indeterminate: gap < 1e-9,
        eigen_gap: gap,
    })
}
