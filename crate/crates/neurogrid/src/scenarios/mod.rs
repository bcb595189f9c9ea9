//! Scripted full-stack runs: the four validation cases, the input/output
//! spike-correlation sweep and user-defined timelines.

mod correlation;
mod engine;
mod metrics;

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::coding::Scheme;
use crate::config::SystemConfig;
use crate::error::{Error, Result};
use crate::grid::GridState;
use crate::trace::{SpikeRecord, TraceLog};

pub use correlation::{correlation_analysis, intermittency_profile, solve_mu, CorrelationSample, FiringSample};
pub use engine::{RunSeries, Simulation};
pub use metrics::{
    detrend, linear_fit, oscillation_index, settling_time, sharing_error, LinearFit, MetricsReport, Oscillation,
    MIN_SPECTRUM_LEN,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScenarioId {
    CaseI,
    CaseII,
    CaseIII,
    CaseIV,
    CorrelationSweep,
    Custom,
}

impl ScenarioId {
    pub const ALL: [ScenarioId; 6] = [
        ScenarioId::CaseI,
        ScenarioId::CaseII,
        ScenarioId::CaseIII,
        ScenarioId::CaseIV,
        ScenarioId::CorrelationSweep,
        ScenarioId::Custom,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            ScenarioId::CaseI => "case_i",
            ScenarioId::CaseII => "case_ii",
            ScenarioId::CaseIII => "case_iii",
            ScenarioId::CaseIV => "case_iv",
            ScenarioId::CorrelationSweep => "correlation_sweep",
            ScenarioId::Custom => "custom",
        }
    }
}

impl fmt::Display for ScenarioId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ScenarioId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ScenarioId::ALL
            .into_iter()
            .find(|id| id.as_str() == s)
            .ok_or_else(|| Error::validation("scenario", format!("unknown scenario `{s}`")))
    }
}

/// Coding scheme per spike channel.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CodingAssignment {
    pub voltage: Scheme,
    pub current: Scheme,
}

/// Timeline events. DER and bus numbers are 1-based, as in config files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Event {
    /// Load change in amperes on one bus, or split evenly over all buses when
    /// `bus` is absent.
    LoadStep {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        bus: Option<usize>,
        amperes: f64,
    },
    /// Source-current factor on one DER for `duration` seconds.
    InputTransient {
        der: usize,
        factor: f64,
        duration: f64,
    },
    PlugOut {
        der: usize,
    },
    PlugIn {
        der: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimedEvent {
    pub time: f64,
    #[serde(flatten)]
    pub event: Event,
}

/// Checks that times are strictly increasing inside [0, horizon), indices are
/// valid and the last online DER is never plugged out.
pub fn validate_timeline(events: &[TimedEvent], horizon: f64, n: usize, key: &str) -> Result<()> {
    let mut online = vec![true; n];
    let mut last = f64::NEG_INFINITY;
    for (j, e) in events.iter().enumerate() {
        let at = |rule: String| Error::validation(format!("{key}[{}]", j + 1), rule);
        if !(e.time.is_finite() && e.time >= 0.0 && e.time < horizon) {
            return Err(at(format!("time must be in [0, {horizon})")));
        }
        if e.time <= last {
            return Err(at("event times must be strictly increasing".into()));
        }
        last = e.time;
        let check = |idx: usize, what: &str| {
            if idx == 0 || idx > n {
                Err(at(format!("{what} must be in 1..={n}")))
            } else {
                Ok(idx - 1)
            }
        };
        match &e.event {
            Event::LoadStep { bus, amperes } => {
                if let Some(b) = bus {
                    check(*b, "bus")?;
                }
                if !amperes.is_finite() {
                    return Err(at("amperes must be finite".into()));
                }
            }
            Event::InputTransient { der, factor, duration } => {
                check(*der, "der")?;
                if !(factor.is_finite() && *factor >= 0.0) {
                    return Err(at("factor must be >= 0".into()));
                }
                if !(duration.is_finite() && *duration > 0.0) {
                    return Err(at("duration must be > 0".into()));
                }
            }
            Event::PlugOut { der } => {
                let k = check(*der, "der")?;
                online[k] = false;
                if !online.iter().any(|o| *o) {
                    return Err(at("cannot plug out the last online DER".into()));
                }
            }
            Event::PlugIn { der } => {
                let k = check(*der, "der")?;
                online[k] = true;
            }
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlugDirection {
    Out,
    In,
}

/// Marks a DER offline (zero current, zero measured current) or back online.
/// Droop state lives outside the grid state and is untouched.
pub fn plug_event(state: &mut GridState, der: usize, direction: PlugDirection) -> Result<()> {
    if der >= state.online.len() {
        return Err(Error::validation(
            "der",
            format!("must be in 1..={}", state.online.len()),
        ));
    }
    match direction {
        PlugDirection::Out => {
            if state.online.iter().enumerate().all(|(k, o)| k == der || !*o) {
                return Err(Error::validation("plug_out", "cannot plug out the last online DER"));
            }
            state.online[der] = false;
            state.der_current[der] = 0.0;
            state.filtered_current[der] = 0.0;
        }
        PlugDirection::In => state.online[der] = true,
    }
    Ok(())
}

/// One scenario: coding per channel, event timeline, horizon and τ_d.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub id: ScenarioId,
    pub coding: CodingAssignment,
    pub events: Vec<TimedEvent>,
    pub horizon: f64,
    pub synaptic_delay: f64,
}

impl ScenarioConfig {
    /// Preset timeline for `id`, with magnitudes taken from `sys.events`.
    pub fn preset(id: ScenarioId, sys: &SystemConfig) -> ScenarioConfig {
        let e = &sys.events;
        let step_up = TimedEvent {
            time: e.load_step_time,
            event: Event::LoadStep {
                bus: None,
                amperes: e.load_step,
            },
        };
        let step_down = TimedEvent {
            time: e.load_decrease_time,
            event: Event::LoadStep {
                bus: None,
                amperes: -e.load_decrease,
            },
        };
        let transient = TimedEvent {
            time: e.input_transient_time,
            event: Event::InputTransient {
                der: e.input_transient_der,
                factor: e.input_transient_factor,
                duration: e.input_transient_duration,
            },
        };
        let plug_out = TimedEvent {
            time: e.plug_out_time,
            event: Event::PlugOut { der: e.plug_out_der },
        };
        let rate_latency = CodingAssignment {
            voltage: Scheme::Rate,
            current: Scheme::Latency,
        };
        let base_delay = sys.droop.synaptic_delay;
        let (coding, events, horizon, delay) = match id {
            ScenarioId::CaseI => (rate_latency, vec![step_up, transient], e.horizon, base_delay),
            ScenarioId::CaseII => (
                CodingAssignment {
                    voltage: Scheme::Latency,
                    current: Scheme::Rate,
                },
                vec![step_up, transient],
                e.horizon,
                e.case_ii_delay,
            ),
            ScenarioId::CaseIII => (
                CodingAssignment {
                    voltage: Scheme::Burst,
                    current: Scheme::Latency,
                },
                vec![step_up, step_down],
                e.horizon,
                base_delay,
            ),
            ScenarioId::CaseIV => (rate_latency, vec![step_up, plug_out, step_down], e.horizon, base_delay),
            ScenarioId::CorrelationSweep => (rate_latency, Vec::new(), sys.sweep.horizon, base_delay),
            ScenarioId::Custom => (
                CodingAssignment {
                    voltage: sys.custom.voltage_scheme,
                    current: sys.custom.current_scheme,
                },
                sys.custom.events.clone(),
                sys.custom.horizon,
                sys.custom.synaptic_delay.unwrap_or(base_delay),
            ),
        };
        let mut events = events;
        events.sort_by(|a, b| a.time.total_cmp(&b.time));
        ScenarioConfig {
            id,
            coding,
            events,
            horizon,
            synaptic_delay: delay,
        }
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        if !(self.horizon.is_finite() && self.horizon > 0.0) {
            return Err(Error::validation("horizon", "must be > 0"));
        }
        if !(self.synaptic_delay.is_finite() && self.synaptic_delay >= 0.0) {
            return Err(Error::validation("synaptic_delay", "must be >= 0"));
        }
        validate_timeline(&self.events, self.horizon, n, "events")
    }
}

/// Run-level switches that are not part of the system configuration.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RunOptions {
    /// Record every `decimation`-th step in the trace.
    pub decimation: usize,
    /// Printed error sign, no deadband, literal STDP exponent.
    pub strict_literal: bool,
    /// Seed for the synthetic intermittency profile.
    pub seed: u64,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions {
            decimation: 20,
            strict_literal: false,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Divergence {
    pub time: f64,
    pub detail: String,
}

/// Everything a run produces.
#[derive(Debug, Clone)]
pub struct ScenarioOutcome {
    pub scenario: ScenarioConfig,
    pub trace: TraceLog,
    pub spikes: Vec<SpikeRecord>,
    /// Per-DER samples at the 1 ms metric stride.
    pub series: RunSeries,
    pub metrics: MetricsReport,
    pub divergence: Option<Divergence>,
    /// Per-window correlation tuples (correlation sweep only).
    pub correlation: Vec<CorrelationSample>,
}

/// Runs one scenario end to end. Divergence is reported in the outcome, not as
/// an error; configuration problems are errors.
pub fn run_scenario(scenario: &ScenarioConfig, sys: &SystemConfig, opts: &RunOptions) -> Result<ScenarioOutcome> {
    sys.validate()?;
    scenario.validate(sys.n_buses())?;
    if opts.decimation == 0 {
        return Err(Error::validation("decimation", "must be >= 1"));
    }
    let started = Instant::now();
    let mut outcome = if scenario.id == ScenarioId::CorrelationSweep {
        correlation::run_sweep(scenario, sys, opts)?
    } else {
        let mut sim = Simulation::new(scenario, sys, opts)?;
        sim.run();
        sim.finish()
    };
    outcome.metrics.runtime_s = started.elapsed().as_secs_f64();
    Ok(outcome)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scenario_ids_round_trip() {
        for id in ScenarioId::ALL {
            assert_eq!(id.as_str().parse::<ScenarioId>().unwrap(), id);
        }
        assert!("case_v".parse::<ScenarioId>().is_err());
    }

    #[test]
    fn timeline_rules() {
        let ev = |time, event| TimedEvent { time, event };
        let ok = [ev(1.0, Event::PlugOut { der: 3 }), ev(2.0, Event::PlugIn { der: 3 })];
        validate_timeline(&ok, 6.0, 4, "e").unwrap();
        let unordered = [ev(2.0, Event::PlugOut { der: 3 }), ev(1.0, Event::PlugIn { der: 3 })];
        assert!(validate_timeline(&unordered, 6.0, 4, "e").is_err());
        let late = [ev(6.0, Event::PlugOut { der: 3 })];
        assert!(validate_timeline(&late, 6.0, 4, "e").is_err());
        let all_out = [ev(1.0, Event::PlugOut { der: 1 }), ev(2.0, Event::PlugOut { der: 2 })];
        assert!(validate_timeline(&all_out, 6.0, 2, "e").is_err());
        let bad_bus = [ev(
            1.0,
            Event::LoadStep {
                bus: Some(5),
                amperes: 1.0,
            },
        )];
        assert!(validate_timeline(&bad_bus, 6.0, 4, "e").is_err());
    }

    #[test]
    fn plug_out_last_rejected() {
        let mut s = GridState::uniform(2, 315.0);
        plug_event(&mut s, 0, PlugDirection::Out).unwrap();
        assert!(plug_event(&mut s, 1, PlugDirection::Out).is_err());
        plug_event(&mut s, 0, PlugDirection::In).unwrap();
        assert!(s.online[0]);
    }

    #[test]
    fn presets_follow_event_config() {
        let sys = SystemConfig::default();
        let c2 = ScenarioConfig::preset(ScenarioId::CaseII, &sys);
        assert_eq!(
            c2.coding,
            CodingAssignment {
                voltage: Scheme::Latency,
                current: Scheme::Rate
            }
        );
        assert_eq!(c2.synaptic_delay, 0.1);
        let c4 = ScenarioConfig::preset(ScenarioId::CaseIV, &sys);
        assert_eq!(c4.events[1].event, Event::PlugOut { der: 3 });
        assert_eq!(c4.events[2].time, 5.0);
        for id in ScenarioId::ALL {
            ScenarioConfig::preset(id, &sys).validate(4).unwrap();
        }
    }
}
