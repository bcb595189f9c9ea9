//! DC network model: admittance matrix, quasi-static power flow, output-capacitor
//! dynamics and droop primary control.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Resistive tie-line between two buses. Bus indices are 0-based.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TieLine {
    pub id: String,
    pub from_bus: usize,
    pub to_bus: usize,
    pub resistance: f64,
}

/// Per-DER converter and primary-control parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DerParams {
    pub output_capacitance: f64,
    pub static_droop: f64,
    pub rated_current: f64,
    pub max_voltage_dev: f64,
    pub share_ratio: f64,
    pub meas_filter_tau: f64,
}

impl DerParams {
    /// Droop resistance actually used for this DER, α_k·R_d.
    pub fn droop(&self) -> f64 {
        self.share_ratio * self.static_droop
    }

    pub fn validate(&self, key: &str) -> Result<()> {
        let pos = |v: f64, name: &str| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(Error::validation(format!("{key}.{name}"), "must be finite and > 0"))
            }
        };
        pos(self.output_capacitance, "output_capacitance")?;
        pos(self.static_droop, "static_droop")?;
        pos(self.rated_current, "rated_current")?;
        pos(self.max_voltage_dev, "max_voltage_dev")?;
        pos(self.share_ratio, "share_ratio")?;
        if !(self.meas_filter_tau.is_finite() && self.meas_filter_tau >= 0.0) {
            return Err(Error::validation(
                format!("{key}.meas_filter_tau"),
                "must be finite and >= 0",
            ));
        }
        let implied = self.max_voltage_dev / self.rated_current;
        if ((implied - self.static_droop) / self.static_droop).abs() > 1e-9 {
            return Err(Error::validation(
                format!("{key}.static_droop"),
                format!("must equal max_voltage_dev / rated_current = {implied}"),
            ));
        }
        Ok(())
    }
}

/// Buses, tie-lines and the regulation-coefficient matrix ψ.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Topology {
    pub n_buses: usize,
    pub ties: Vec<TieLine>,
    pub psi: Vec<Vec<f64>>,
}

impl Topology {
    /// Checks tie-lines, connectivity and ψ (square, rows summing to 1).
    pub fn validate(&self) -> Result<()> {
        if self.n_buses == 0 {
            return Err(Error::Topology("network has no buses".into()));
        }
        for tie in &self.ties {
            if !(tie.resistance.is_finite() && tie.resistance > 0.0) {
                return Err(Error::validation(
                    format!("ties.{}.resistance", tie.id),
                    "must be finite and > 0",
                ));
            }
            if tie.from_bus >= self.n_buses || tie.to_bus >= self.n_buses {
                return Err(Error::Topology(format!(
                    "tie {} references a bus outside 1..={}",
                    tie.id, self.n_buses
                )));
            }
            if tie.from_bus == tie.to_bus {
                return Err(Error::Topology(format!(
                    "tie {} connects bus {} to itself",
                    tie.id,
                    tie.from_bus + 1
                )));
            }
        }
        if !self.is_connected() {
            return Err(Error::Topology("network graph is disconnected".into()));
        }
        if self.psi.len() != self.n_buses || self.psi.iter().any(|r| r.len() != self.n_buses) {
            return Err(Error::validation(
                "grid.psi",
                format!("must be a {0}x{0} matrix", self.n_buses),
            ));
        }
        for (k, row) in self.psi.iter().enumerate() {
            if row.iter().any(|v| !v.is_finite() || *v < 0.0) {
                return Err(Error::validation(
                    format!("grid.psi[{}]", k + 1),
                    "entries must be finite and >= 0",
                ));
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > 1e-9 {
                return Err(Error::validation(
                    format!("grid.psi[{}]", k + 1),
                    format!("row must sum to 1 (got {sum})"),
                ));
            }
        }
        Ok(())
    }

    pub fn is_connected(&self) -> bool {
        let mut seen = vec![false; self.n_buses];
        let mut stack = vec![0usize];
        seen[0] = true;
        while let Some(b) = stack.pop() {
            for tie in &self.ties {
                let other = if tie.from_bus == b {
                    tie.to_bus
                } else if tie.to_bus == b {
                    tie.from_bus
                } else {
                    continue;
                };
                if other < self.n_buses && !seen[other] {
                    seen[other] = true;
                    stack.push(other);
                }
            }
        }
        seen.iter().all(|s| *s)
    }

    /// Buses sharing a tie-line with `bus`, in tie order, without duplicates.
    pub fn neighbours(&self, bus: usize) -> Vec<usize> {
        let mut out = Vec::new();
        for tie in &self.ties {
            let other = if tie.from_bus == bus {
                tie.to_bus
            } else if tie.to_bus == bus {
                tie.from_bus
            } else {
                continue;
            };
            if !out.contains(&other) {
                out.push(other);
            }
        }
        out
    }

    pub fn tie(&self, id: &str) -> Option<&TieLine> {
        self.ties.iter().find(|t| t.id == id)
    }
}

/// Nodal admittance (network Laplacian), siemens.
#[derive(Debug, Clone, PartialEq)]
pub struct AdmittanceMatrix {
    m: DMatrix<f64>,
}

impl AdmittanceMatrix {
    pub fn n(&self) -> usize {
        self.m.nrows()
    }

    pub fn get(&self, k: usize, l: usize) -> f64 {
        self.m[(k, l)]
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.m
    }

    /// Net current leaving each bus into the network, (Y·V)_k.
    pub fn net_current(&self, v: &[f64]) -> Vec<f64> {
        let n = self.n();
        (0..n).map(|k| (0..n).map(|l| self.m[(k, l)] * v[l]).sum()).collect()
    }
}

/// Builds Y with Y[k][l] = −1/r_kl and Y[k][k] = Σ_l 1/r_kl.
pub fn build_admittance(topology: &Topology) -> Result<AdmittanceMatrix> {
    for tie in &topology.ties {
        if !(tie.resistance.is_finite() && tie.resistance > 0.0) {
            return Err(Error::validation(
                format!("ties.{}.resistance", tie.id),
                "must be finite and > 0",
            ));
        }
        if tie.from_bus == tie.to_bus {
            return Err(Error::validation(
                format!("ties.{}", tie.id),
                "from_bus and to_bus must differ",
            ));
        }
        if tie.from_bus >= topology.n_buses || tie.to_bus >= topology.n_buses {
            return Err(Error::Topology(format!("tie {} has an invalid bus index", tie.id)));
        }
    }
    if topology.n_buses == 0 || !topology.is_connected() {
        return Err(Error::Topology("network graph is disconnected".into()));
    }
    let n = topology.n_buses;
    let mut m = DMatrix::zeros(n, n);
    for tie in &topology.ties {
        let g = 1.0 / tie.resistance;
        let (k, l) = (tie.from_bus, tie.to_bus);
        m[(k, k)] += g;
        m[(l, l)] += g;
        m[(k, l)] -= g;
        m[(l, k)] -= g;
    }
    Ok(AdmittanceMatrix { m })
}

/// Droop-governed source behind a DER: I = (v_ref − V)/resistance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DroopSource {
    pub v_ref: f64,
    pub resistance: f64,
}

impl DroopSource {
    pub fn current(&self, v: f64) -> f64 {
        (self.v_ref - v) / self.resistance
    }
}

/// Steady-state voltages and DER currents.
#[derive(Debug, Clone, PartialEq)]
pub struct PowerFlow {
    pub voltages: Vec<f64>,
    pub currents: Vec<f64>,
}

fn check_lengths(n: usize, sources: usize, loads: usize, online: usize) -> Result<()> {
    if sources != n || loads != n || online != n {
        return Err(Error::validation(
            "power_flow",
            format!("expected {n} sources, loads and online flags"),
        ));
    }
    Ok(())
}

/// Solves (Y + diag(g_k))·V = g_k·V_ref − I_load with g_k = 1/(R_d + ΔR) for online DERs.
pub fn solve_power_flow(
    y: &AdmittanceMatrix,
    sources: &[DroopSource],
    loads: &[f64],
    online: &[bool],
) -> Result<PowerFlow> {
    let n = y.n();
    check_lengths(n, sources.len(), loads.len(), online.len())?;
    if !online.iter().any(|o| *o) {
        return Err(Error::NoSolution("every DER is offline".into()));
    }
    let mut a = y.m.clone();
    let mut b = DVector::zeros(n);
    for k in 0..n {
        b[k] = -loads[k];
        if online[k] {
            let r = sources[k].resistance;
            if !(r.is_finite() && r > 0.0) {
                return Err(Error::validation(
                    format!("droop[{}]", k + 1),
                    "effective droop must be > 0",
                ));
            }
            a[(k, k)] += 1.0 / r;
            b[k] += sources[k].v_ref / r;
        }
    }
    let v = a
        .lu()
        .solve(&b)
        .ok_or_else(|| Error::NoSolution("singular nodal matrix".into()))?;
    let voltages: Vec<f64> = v.iter().copied().collect();
    let currents = (0..n)
        .map(|k| {
            if online[k] {
                sources[k].current(voltages[k])
            } else {
                0.0
            }
        })
        .collect();
    Ok(PowerFlow { voltages, currents })
}

/// Per-bus current imbalance I_k − (Y·V)_k − I_load,k of a solved flow.
pub fn kirchhoff_residual(y: &AdmittanceMatrix, flow: &PowerFlow, loads: &[f64]) -> Vec<f64> {
    let net = y.net_current(&flow.voltages);
    (0..y.n()).map(|k| flow.currents[k] - net[k] - loads[k]).collect()
}

/// Thevenin resistance seen at each bus with the given droops attached:
/// diag((Y + diag(1/R_k))⁻¹).
pub fn thevenin_resistance(y: &AdmittanceMatrix, droops: &[f64], online: &[bool]) -> Result<Vec<f64>> {
    let n = y.n();
    check_lengths(n, droops.len(), n, online.len())?;
    let mut a = y.m.clone();
    for k in 0..n {
        if online[k] {
            a[(k, k)] += 1.0 / droops[k];
        }
    }
    let inv = a
        .try_inverse()
        .ok_or_else(|| Error::NoSolution("singular nodal matrix".into()))?;
    Ok((0..n).map(|k| inv[(k, k)]).collect())
}

/// Electrical state of the network at one instant.
#[derive(Debug, Clone, PartialEq)]
pub struct GridState {
    pub time: f64,
    pub bus_voltage: Vec<f64>,
    pub der_current: Vec<f64>,
    pub filtered_current: Vec<f64>,
    pub online: Vec<bool>,
}

impl GridState {
    /// Every bus at `v0`, all DERs online, currents zero.
    pub fn uniform(n: usize, v0: f64) -> Self {
        GridState {
            time: 0.0,
            bus_voltage: vec![v0; n],
            der_current: vec![0.0; n],
            filtered_current: vec![0.0; n],
            online: vec![true; n],
        }
    }
}

/// Everything `step_dynamics` needs besides the state itself.
#[derive(Debug, Clone, Copy)]
pub struct StepContext<'a> {
    pub y: &'a AdmittanceMatrix,
    pub der: &'a [DerParams],
    pub sources: &'a [DroopSource],
    pub loads: &'a [f64],
    /// Multiplier on each source current (input-side transients); 1 when nominal.
    pub source_factor: &'a [f64],
    pub max_dt: f64,
}

/// Advances the network one explicit-Euler step of C_k·dV_k/dt = I_src,k − (Y·V)_k − I_load,k.
pub fn step_dynamics(state: &GridState, ctx: &StepContext<'_>, dt: f64) -> Result<GridState> {
    let mut next = state.clone();
    step_dynamics_in_place(&mut next, ctx, dt)?;
    Ok(next)
}

/// In-place variant of [`step_dynamics`]; the state is unchanged on error.
pub fn step_dynamics_in_place(state: &mut GridState, ctx: &StepContext<'_>, dt: f64) -> Result<()> {
    let n = ctx.y.n();
    if !(dt > 0.0 && dt <= ctx.max_dt) {
        return Err(Error::validation("grid.dt", format!("must be in (0, {}]", ctx.max_dt)));
    }
    if state.bus_voltage.len() != n || ctx.der.len() != n {
        return Err(Error::validation("grid_state", format!("expected {n} buses")));
    }
    check_lengths(n, ctx.sources.len(), ctx.loads.len(), state.online.len())?;
    let net = ctx.y.net_current(&state.bus_voltage);
    let mut v_new = vec![0.0; n];
    let mut i_new = vec![0.0; n];
    for k in 0..n {
        let i_src = if state.online[k] {
            ctx.source_factor[k] * ctx.sources[k].current(state.bus_voltage[k])
        } else {
            0.0
        };
        i_new[k] = i_src;
        v_new[k] = state.bus_voltage[k] + dt / ctx.der[k].output_capacitance * (i_src - net[k] - ctx.loads[k]);
    }
    let t = state.time + dt;
    if let Some(k) = v_new.iter().position(|v| !v.is_finite()) {
        return Err(Error::Divergence {
            time: t,
            detail: format!("bus {} voltage is not finite", k + 1),
        });
    }
    for k in 0..n {
        let tau = ctx.der[k].meas_filter_tau;
        let f = &mut state.filtered_current[k];
        if tau > 0.0 {
            *f += dt / tau * (i_new[k] - *f);
        } else {
            *f = i_new[k];
        }
    }
    state.bus_voltage = v_new;
    state.der_current = i_new;
    state.time = t;
    Ok(())
}

/// Synaptic conductance between DERs k and l; `None` when |V_k − V_l| ≤ eps.
#[allow(clippy::too_many_arguments)]
pub fn synaptic_conductance(
    v_k: f64,
    v_l: f64,
    v_mem_k: f64,
    v_mem_l: f64,
    v_th: f64,
    g_k: f64,
    g_l: f64,
    eps: f64,
) -> Option<f64> {
    let dv = v_k - v_l;
    if dv.abs() <= eps {
        return None;
    }
    Some((g_k * (v_mem_k - v_th) - g_l * (v_mem_l - v_th)) / dv)
}
