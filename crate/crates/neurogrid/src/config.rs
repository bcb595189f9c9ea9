//! Full system configuration. Every key has a default, so an empty document
//! deserializes to the reference parameter set.

use serde::{Deserialize, Serialize};

use crate::coding::{BurstCodingParams, RateCodingParams, Scheme};
use crate::error::{Error, Result};
use crate::grid::{DerParams, TieLine, Topology};
use crate::plasticity::{DroopParams, ExponentMode, HebbianParams, StdpParams};
use crate::scenarios::TimedEvent;

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SystemConfig {
    pub grid: GridConfig,
    pub der: DerConfig,
    pub loads: LoadConfig,
    pub coding: CodingConfig,
    pub stdp: StdpConfig,
    pub droop: DroopConfig,
    pub controller: ControllerConfig,
    pub hebbian: HebbianConfig,
    pub events: EventConfig,
    pub source: SourceConfig,
    pub sweep: SweepConfig,
    pub guard: GuardConfig,
    pub custom: CustomConfig,
}

/// Tie-line as written in the config file; buses are 1-based.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TieConfig {
    pub id: String,
    pub from: usize,
    pub to: usize,
    pub resistance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridConfig {
    /// V.
    pub v_ref: f64,
    /// Integration step, s.
    pub dt: f64,
    pub max_dt: f64,
    pub ties: Vec<TieConfig>,
    pub psi: Vec<Vec<f64>>,
    /// |V_k − V_l| below which the synaptic conductance is undefined, V.
    pub conductance_eps: f64,
}

impl Default for GridConfig {
    fn default() -> Self {
        let tie = |id: &str, from, to, resistance| TieConfig {
            id: id.into(),
            from,
            to,
            resistance,
        };
        GridConfig {
            v_ref: 315.0,
            dt: 50e-6,
            max_dt: 1e-4,
            ties: vec![
                tie("a", 1, 4, 0.5),
                tie("b", 2, 3, 0.25),
                tie("c", 3, 4, 0.6),
                tie("d", 1, 2, 0.8),
            ],
            psi: vec![
                vec![0.0, 0.6, 0.4, 0.0],
                vec![0.3, 0.0, 0.4, 0.3],
                vec![0.0, 0.4, 0.25, 0.35],
                vec![0.0, 0.15, 0.25, 0.6],
            ],
            conductance_eps: 1e-6,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DerConfig {
    /// Output capacitance per DER, F.
    pub capacitance: Vec<f64>,
    pub static_droop: f64,
    pub rated_current: f64,
    pub max_voltage_dev: f64,
    pub share_ratio: Vec<f64>,
    /// Measurement low-pass time constants, s.
    pub meas_filter_tau: Vec<f64>,
}

impl Default for DerConfig {
    fn default() -> Self {
        DerConfig {
            capacitance: vec![450e-6, 500e-6, 480e-6, 520e-6],
            static_droop: 2.0,
            rated_current: 10.0,
            max_voltage_dev: 20.0,
            share_ratio: vec![1.0; 4],
            meas_filter_tau: vec![8e-3, 10e-3, 12e-3, 14e-3],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LoadConfig {
    /// Constant-current load per bus at t = 0, A.
    pub base: Vec<f64>,
}

impl Default for LoadConfig {
    fn default() -> Self {
        LoadConfig { base: vec![3.0; 4] }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CodingConfig {
    pub kappa: f64,
    pub deadband: f64,
    pub xi: f64,
    pub kappa_b_init: f64,
    /// Latency-neuron time constant, s.
    pub latency_tau: f64,
}

impl Default for CodingConfig {
    fn default() -> Self {
        CodingConfig {
            kappa: 0.9,
            deadband: 0.05,
            xi: 4.8,
            kappa_b_init: 1.0,
            latency_tau: 0.25e-3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StdpConfig {
    pub a_plus: f64,
    pub a_minus: f64,
    pub w_max: f64,
    pub w0: f64,
    pub window: f64,
    pub exponent_mode: ExponentMode,
    pub soft_bounds: bool,
}

impl Default for StdpConfig {
    fn default() -> Self {
        StdpConfig {
            a_plus: 0.005,
            a_minus: -0.005,
            w_max: 2.0,
            w0: 0.25,
            window: 0.2,
            exponent_mode: ExponentMode::Standard,
            soft_bounds: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DroopConfig {
    pub a: f64,
    /// τ_d for every case except Case II, s.
    pub synaptic_delay: f64,
    pub min_fraction: f64,
}

impl Default for DroopConfig {
    fn default() -> Self {
        DroopConfig {
            a: 2.0,
            synaptic_delay: 0.0,
            min_fraction: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ControllerConfig {
    /// Neuron frame length, s.
    pub frame_period: f64,
    /// Offset of the rate/burst sample inside a frame, s.
    pub sample_phase: f64,
    /// Droop of the voltage-regulation target line, Ω. 0 selects R_d + ΔR.
    pub secondary_droop: f64,
    /// γ: fraction of V_ref − V'_kref used as the current-channel threshold.
    pub activation_ratio: f64,
    /// Voltage-channel latency coding range below the target line, V.
    pub voltage_window: f64,
    /// Latency-coded crossings later than the frame are emitted on its last step.
    pub saturate_latency: bool,
}

impl Default for ControllerConfig {
    fn default() -> Self {
        ControllerConfig {
            frame_period: 0.5e-3,
            sample_phase: 0.25e-3,
            secondary_droop: 0.375,
            activation_ratio: 0.15,
            voltage_window: 12.0,
            saturate_latency: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HebbianConfig {
    pub eta: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub p_total: Option<f64>,
}

impl Default for HebbianConfig {
    fn default() -> Self {
        HebbianConfig {
            eta: 1.0,
            p_total: None,
        }
    }
}

/// Times and magnitudes of the preset case events.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EventConfig {
    pub horizon: f64,
    pub load_step_time: f64,
    /// Total load increase, split evenly over the buses, A.
    pub load_step: f64,
    pub input_transient_time: f64,
    /// 1-based.
    pub input_transient_der: usize,
    pub input_transient_factor: f64,
    pub input_transient_duration: f64,
    pub plug_out_time: f64,
    /// 1-based.
    pub plug_out_der: usize,
    pub load_decrease_time: f64,
    /// Total load decrease (positive number), A.
    pub load_decrease: f64,
    /// τ_d used by Case II, s.
    pub case_ii_delay: f64,
}

impl Default for EventConfig {
    fn default() -> Self {
        EventConfig {
            horizon: 6.0,
            load_step_time: 1.0,
            load_step: 4.0,
            input_transient_time: 2.0,
            input_transient_der: 1,
            input_transient_factor: 0.8,
            input_transient_duration: 0.1,
            plug_out_time: 4.0,
            plug_out_der: 3,
            load_decrease_time: 5.0,
            load_decrease: 4.0,
            case_ii_delay: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SourceConfig {
    /// Converter input-side voltage used to derive I_in, V.
    pub input_voltage: f64,
}

impl Default for SourceConfig {
    fn default() -> Self {
        SourceConfig { input_voltage: 380.0 }
    }
}

/// Batch of runs with a Poisson intermittency profile on one DER's input.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    /// Input-event rates, events/s, one run each.
    pub event_rates: Vec<f64>,
    pub horizon: f64,
    /// Start of the analysed span, s.
    pub warmup: f64,
    /// Correlation window length, s.
    pub window: f64,
    /// 1-based.
    pub der: usize,
    pub transient_factor: f64,
    pub transient_duration: f64,
    /// Target-line droop used for the sweep runs, Ω; replaces `controller.secondary_droop`.
    pub secondary_droop: f64,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            event_rates: vec![0.1, 0.2, 0.3, 0.5, 0.8, 1.0, 1.2, 1.5, 1.8, 2.0],
            horizon: 21.0,
            warmup: 1.0,
            window: 5.0,
            der: 1,
            transient_factor: 0.8,
            transient_duration: 0.05,
            secondary_droop: 0.75,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GuardConfig {
    /// Divergence when |V_k − V_ref| exceeds this fraction of V_ref.
    pub max_deviation_fraction: f64,
}

impl Default for GuardConfig {
    fn default() -> Self {
        GuardConfig {
            max_deviation_fraction: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CustomConfig {
    pub horizon: f64,
    pub voltage_scheme: Scheme,
    pub current_scheme: Scheme,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub synaptic_delay: Option<f64>,
    pub events: Vec<TimedEvent>,
}

impl Default for CustomConfig {
    fn default() -> Self {
        CustomConfig {
            horizon: 6.0,
            voltage_scheme: Scheme::Rate,
            current_scheme: Scheme::Latency,
            synaptic_delay: None,
            events: Vec::new(),
        }
    }
}

fn positive(key: &str, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(Error::validation(key, format!("must be finite and > 0 (got {v})")))
    }
}

fn non_negative(key: &str, v: f64) -> Result<()> {
    if v.is_finite() && v >= 0.0 {
        Ok(())
    } else {
        Err(Error::validation(key, format!("must be finite and >= 0 (got {v})")))
    }
}

impl SystemConfig {
    pub fn n_buses(&self) -> usize {
        self.grid.psi.len()
    }

    /// Network with 0-based bus indices.
    pub fn topology(&self) -> Topology {
        Topology {
            n_buses: self.n_buses(),
            ties: self
                .grid
                .ties
                .iter()
                .map(|t| TieLine {
                    id: t.id.clone(),
                    from_bus: t.from.wrapping_sub(1),
                    to_bus: t.to.wrapping_sub(1),
                    resistance: t.resistance,
                })
                .collect(),
            psi: self.grid.psi.clone(),
        }
    }

    pub fn der_params(&self) -> Vec<DerParams> {
        (0..self.n_buses())
            .map(|k| DerParams {
                output_capacitance: self.der.capacitance[k],
                static_droop: self.der.static_droop,
                rated_current: self.der.rated_current,
                max_voltage_dev: self.der.max_voltage_dev,
                share_ratio: self.der.share_ratio[k],
                meas_filter_tau: self.der.meas_filter_tau[k],
            })
            .collect()
    }

    pub fn rate_params(&self) -> RateCodingParams {
        RateCodingParams {
            kappa: self.coding.kappa,
            deadband: self.coding.deadband,
        }
    }

    pub fn burst_params(&self) -> BurstCodingParams {
        BurstCodingParams {
            xi: self.coding.xi,
            kappa_b_init: self.coding.kappa_b_init,
        }
    }

    /// Base STDP parameters (amplitudes before soft bounds).
    pub fn stdp_params(&self) -> StdpParams {
        StdpParams {
            a_plus: self.stdp.a_plus,
            a_minus: self.stdp.a_minus,
            window: self.stdp.window,
            exponent_mode: self.stdp.exponent_mode,
        }
    }

    pub fn droop_params(&self, synaptic_delay: f64) -> DroopParams {
        DroopParams {
            a: self.droop.a,
            synaptic_delay,
            min_fraction: self.droop.min_fraction,
        }
    }

    pub fn hebbian_params(&self) -> HebbianParams {
        HebbianParams {
            eta: self.hebbian.eta,
            p_total: self.hebbian.p_total,
        }
    }

    /// Checks every documented rule; the error names the offending key.
    pub fn validate(&self) -> Result<()> {
        let n = self.n_buses();
        positive("grid.v_ref", self.grid.v_ref)?;
        positive("grid.dt", self.grid.dt)?;
        positive("grid.max_dt", self.grid.max_dt)?;
        if self.grid.dt > self.grid.max_dt {
            return Err(Error::validation("grid.dt", "must be <= grid.max_dt"));
        }
        non_negative("grid.conductance_eps", self.grid.conductance_eps)?;
        for t in &self.grid.ties {
            if t.from == 0 || t.to == 0 || t.from > n || t.to > n {
                return Err(Error::validation(
                    format!("grid.ties.{}", t.id),
                    format!("bus indices must be in 1..={n}"),
                ));
            }
        }
        self.topology().validate()?;
        for (key, len) in [
            ("der.capacitance", self.der.capacitance.len()),
            ("der.share_ratio", self.der.share_ratio.len()),
            ("der.meas_filter_tau", self.der.meas_filter_tau.len()),
            ("loads.base", self.loads.base.len()),
        ] {
            if len != n {
                return Err(Error::validation(key, format!("needs {n} entries (one per bus)")));
            }
        }
        for (k, p) in self.der_params().iter().enumerate() {
            p.validate(&format!("der[{}]", k + 1))?;
        }
        if self.loads.base.iter().any(|l| !l.is_finite()) {
            return Err(Error::validation("loads.base", "must be finite"));
        }
        self.rate_params().validate()?;
        self.burst_params().validate()?;
        positive("coding.latency_tau", self.coding.latency_tau)?;
        self.stdp_params().validate()?;
        positive("stdp.w_max", self.stdp.w_max)?;
        if !(self.stdp.w0.is_finite() && self.stdp.w0 >= 0.0 && self.stdp.w0 <= self.stdp.w_max) {
            return Err(Error::validation("stdp.w0", "must be in [0, w_max]"));
        }
        positive("droop.a", self.droop.a)?;
        non_negative("droop.synaptic_delay", self.droop.synaptic_delay)?;
        if !(self.droop.min_fraction > 0.0 && self.droop.min_fraction < 1.0) {
            return Err(Error::validation("droop.min_fraction", "must be in (0, 1)"));
        }
        let c = &self.controller;
        positive("controller.frame_period", c.frame_period)?;
        non_negative("controller.sample_phase", c.sample_phase)?;
        if c.sample_phase >= c.frame_period {
            return Err(Error::validation("controller.sample_phase", "must be < frame_period"));
        }
        if c.frame_period < self.grid.dt {
            return Err(Error::validation("controller.frame_period", "must be >= grid.dt"));
        }
        non_negative("controller.secondary_droop", c.secondary_droop)?;
        positive("controller.activation_ratio", c.activation_ratio)?;
        positive("controller.voltage_window", c.voltage_window)?;
        self.hebbian_params().validate()?;
        let e = &self.events;
        positive("events.horizon", e.horizon)?;
        non_negative("events.case_ii_delay", e.case_ii_delay)?;
        for (key, der) in [
            ("events.input_transient_der", e.input_transient_der),
            ("events.plug_out_der", e.plug_out_der),
            ("sweep.der", self.sweep.der),
        ] {
            if der == 0 || der > n {
                return Err(Error::validation(key, format!("must be in 1..={n}")));
            }
        }
        positive("events.input_transient_factor", e.input_transient_factor)?;
        positive("events.input_transient_duration", e.input_transient_duration)?;
        positive("source.input_voltage", self.source.input_voltage)?;
        let s = &self.sweep;
        positive("sweep.horizon", s.horizon)?;
        positive("sweep.window", s.window)?;
        non_negative("sweep.warmup", s.warmup)?;
        if s.warmup + s.window > s.horizon {
            return Err(Error::validation(
                "sweep.window",
                "warmup + window must fit in the horizon",
            ));
        }
        if s.event_rates.iter().any(|r| !(r.is_finite() && *r >= 0.0)) {
            return Err(Error::validation("sweep.event_rates", "must be finite and >= 0"));
        }
        positive("sweep.transient_factor", s.transient_factor)?;
        positive("sweep.transient_duration", s.transient_duration)?;
        non_negative("sweep.secondary_droop", s.secondary_droop)?;
        positive("guard.max_deviation_fraction", self.guard.max_deviation_fraction)?;
        positive("custom.horizon", self.custom.horizon)?;
        if let Some(d) = self.custom.synaptic_delay {
            non_negative("custom.synaptic_delay", d)?;
        }
        crate::scenarios::validate_timeline(&self.custom.events, self.custom.horizon, n, "custom.events")?;
        Ok(())
    }
}
